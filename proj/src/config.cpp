#include "stylecal/config.hpp"

#include <json.hpp>
#include <fstream>
#include <set>
#include <sstream>

namespace stylecal {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& section,
                    const std::set<std::string>& known) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key))
      throw ConfigError("unknown key '" + key + "' in " + section);
  }
}

template <typename T>
void read(const json& obj, const std::string& section, const std::string& key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "' in " + section + ": " + e.what());
  }
}

void parse_env(const json& j, RunConfig& cfg) {
  reject_unknown(j, "env", {"horizon", "stochastic", "noise_std"});
  read(j, "env", "horizon", cfg.env.T);
  read(j, "env", "stochastic", cfg.env.stochastic);
  read(j, "env", "noise_std", cfg.env.noise_std);
}

void parse_demo(const json& j, RunConfig& cfg) {
  reject_unknown(j, "demonstrator",
                 {"speed_min", "speed_max", "curvature_gain_max", "action_noise_std",
                  "heading_blend"});
  read(j, "demonstrator", "speed_min", cfg.demo.speed_min);
  read(j, "demonstrator", "speed_max", cfg.demo.speed_max);
  read(j, "demonstrator", "curvature_gain_max", cfg.demo.curvature_gain_max);
  read(j, "demonstrator", "action_noise_std", cfg.demo.action_noise_std);
  read(j, "demonstrator", "heading_blend", cfg.demo.heading_blend);
}

LfSpec parse_lf(const json& j, int index) {
  std::string section = "labeling[" + std::to_string(index) + "]";
  reject_unknown(j, section,
                 {"name", "kind", "classes", "noise_std", "destination", "thresholds"});
  LfSpec lf;
  std::string kind;
  read(j, section, "kind", kind);
  if (kind.empty()) throw ConfigError("missing 'kind' in " + section);
  try {
    lf.kind = score_kind_from_string(kind);
  } catch (const std::exception& e) {
    throw ConfigError("bad value for 'kind' in " + section + ": " + e.what());
  }
  lf.name = kind;
  read(j, section, "name", lf.name);
  read(j, section, "classes", lf.classes);
  read(j, section, "noise_std", lf.noise_std);
  read(j, section, "thresholds", lf.thresholds);
  if (j.contains("destination")) {
    std::vector<double> d;
    read(j, section, "destination", d);
    if (d.size() != 2)
      throw ConfigError("'destination' in " + section + " must have 2 coordinates");
    lf.destination = Vec2(d[0], d[1]);
  }
  return lf;
}

void parse_sizes(const json& j, RunConfig& cfg) {
  reject_unknown(j, "sizes",
                 {"latent_dim", "enc_hidden", "dec_hidden", "dec_mlp", "label_hidden",
                  "aux_hidden", "dyn_hidden", "state_dependent_log_std"});
  read(j, "sizes", "latent_dim", cfg.sizes.latent_dim);
  read(j, "sizes", "enc_hidden", cfg.sizes.enc_hidden);
  read(j, "sizes", "dec_hidden", cfg.sizes.dec_hidden);
  read(j, "sizes", "dec_mlp", cfg.sizes.dec_mlp);
  read(j, "sizes", "label_hidden", cfg.sizes.label_hidden);
  read(j, "sizes", "aux_hidden", cfg.sizes.aux_hidden);
  read(j, "sizes", "dyn_hidden", cfg.sizes.dyn_hidden);
  read(j, "sizes", "state_dependent_log_std", cfg.sizes.state_dependent_log_std);
}

void parse_train(const json& j, RunConfig& cfg) {
  reject_unknown(j, "training",
                 {"batch_size", "lr", "label_lr", "dynamics_lr", "style_weight",
                  "n_dynamics", "n_label", "n_policy", "n_collect", "n_env",
                  "label_augment_noise", "n_rounds", "n_label_refresh",
                  "n_refresh_rollouts", "dynamics_weight_decay", "clip_norm"});
  read(j, "training", "batch_size", cfg.train.batch_size);
  read(j, "training", "lr", cfg.train.lr);
  read(j, "training", "label_lr", cfg.train.label_lr);
  read(j, "training", "dynamics_lr", cfg.train.dynamics_lr);
  read(j, "training", "style_weight", cfg.train.style_weight);
  read(j, "training", "n_dynamics", cfg.train.n_dynamics);
  read(j, "training", "n_label", cfg.train.n_label);
  read(j, "training", "n_policy", cfg.train.n_policy);
  read(j, "training", "n_collect", cfg.train.n_collect);
  read(j, "training", "n_env", cfg.train.n_env);
  read(j, "training", "label_augment_noise", cfg.train.label_augment_noise);
  read(j, "training", "n_rounds", cfg.train.n_rounds);
  read(j, "training", "n_label_refresh", cfg.train.n_label_refresh);
  read(j, "training", "n_refresh_rollouts", cfg.train.n_refresh_rollouts);
  read(j, "training", "dynamics_weight_decay", cfg.train.dynamics_weight_decay);
  read(j, "training", "clip_norm", cfg.train.clip_norm);
}

void parse_eval(const json& j, RunConfig& cfg) {
  reject_unknown(j, "eval", {"n_rollouts", "seeds"});
  read(j, "eval", "n_rollouts", cfg.eval.n_rollouts);
  read(j, "eval", "seeds", cfg.eval.seeds);
}

}  // namespace

LabelingFunction LfSpec::to_labeling_function() const {
  LabelingFunction lf;
  lf.name = name;
  lf.kind = kind;
  lf.destination = destination;
  lf.thresholds = thresholds;
  lf.noise_std = noise_std;
  return lf;
}

std::vector<LabelingFunction> RunConfig::labeling_functions() const {
  std::vector<LabelingFunction> out;
  out.reserve(lfs.size());
  for (const auto& lf : lfs) out.push_back(lf.to_labeling_function());
  return out;
}

void RunConfig::validate() const {
  if (n_train < 1) throw ConfigError("'n_train' must be >= 1");
  if (n_test < 1) throw ConfigError("'n_test' must be >= 1");
  if (env.T < 1) throw ConfigError("'horizon' must be >= 1");
  if (workers < 1) throw ConfigError("'workers' must be >= 1");
  if (train.batch_size < 1) throw ConfigError("'batch_size' must be >= 1");
  if (train.n_rounds < 1) throw ConfigError("'n_rounds' must be >= 1");
  if (train.n_label_refresh < 0) throw ConfigError("'n_label_refresh' must be >= 0");
  if (train.n_refresh_rollouts < 0)
    throw ConfigError("'n_refresh_rollouts' must be >= 0");
  if (train.label_augment_noise < 0)
    throw ConfigError("'label_augment_noise' must be >= 0");
  if (eval.n_rollouts < 1) throw ConfigError("'n_rollouts' must be >= 1");
  if (eval.seeds.empty()) throw ConfigError("'seeds' must not be empty");
  try {
    model_kind_from_string(model);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad 'model': ") + e.what());
  }
  for (std::size_t i = 0; i < lfs.size(); ++i) {
    const auto& lf = lfs[i];
    std::string section = "labeling[" + std::to_string(i) + "]";
    if (lf.classes < 2) throw ConfigError("'classes' in " + section + " must be >= 2");
    if (lf.noise_std < 0)
      throw ConfigError("'noise_std' in " + section + " must be >= 0");
    if (!lf.thresholds.empty() &&
        lf.thresholds.size() != static_cast<std::size_t>(lf.classes) - 1)
      throw ConfigError("'thresholds' in " + section + " must have classes-1 entries");
    for (std::size_t t = 1; t < lf.thresholds.size(); ++t)
      if (lf.thresholds[t] <= lf.thresholds[t - 1])
        throw ConfigError("'thresholds' in " + section + " must be strictly increasing");
  }
  for (double c : noise_multipliers)
    if (c < 0) throw ConfigError("'noise_multipliers' entries must be >= 0");
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown(j, "config root",
                 {"seed", "model", "workers", "n_train", "n_test", "env", "demonstrator",
                  "labeling", "sizes", "training", "eval", "noise_multipliers"});
  RunConfig cfg;
  read(j, "config root", "seed", cfg.seed);
  read(j, "config root", "model", cfg.model);
  read(j, "config root", "workers", cfg.workers);
  read(j, "config root", "n_train", cfg.n_train);
  read(j, "config root", "n_test", cfg.n_test);
  if (j.contains("env")) parse_env(j.at("env"), cfg);
  if (j.contains("demonstrator")) parse_demo(j.at("demonstrator"), cfg);
  if (j.contains("labeling")) {
    const json& arr = j.at("labeling");
    if (!arr.is_array()) throw ConfigError("'labeling' must be an array");
    cfg.lfs.clear();
    for (std::size_t i = 0; i < arr.size(); ++i)
      cfg.lfs.push_back(parse_lf(arr[i], static_cast<int>(i)));
  }
  if (j.contains("sizes")) parse_sizes(j.at("sizes"), cfg);
  if (j.contains("training")) parse_train(j.at("training"), cfg);
  if (j.contains("eval")) parse_eval(j.at("eval"), cfg);
  read(j, "config root", "noise_multipliers", cfg.noise_multipliers);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string resolved_config_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["model"] = cfg.model;
  j["workers"] = cfg.workers;
  j["n_train"] = cfg.n_train;
  j["n_test"] = cfg.n_test;
  j["env"] = {{"horizon", cfg.env.T},
              {"stochastic", cfg.env.stochastic},
              {"noise_std", cfg.env.noise_std}};
  j["demonstrator"] = {{"speed_min", cfg.demo.speed_min},
                       {"speed_max", cfg.demo.speed_max},
                       {"curvature_gain_max", cfg.demo.curvature_gain_max},
                       {"action_noise_std", cfg.demo.action_noise_std},
                       {"heading_blend", cfg.demo.heading_blend}};
  j["labeling"] = json::array();
  for (const auto& lf : cfg.lfs) {
    j["labeling"].push_back({{"name", lf.name},
                             {"kind", to_string(lf.kind)},
                             {"classes", lf.classes},
                             {"noise_std", lf.noise_std},
                             {"destination", {lf.destination.x(), lf.destination.y()}},
                             {"thresholds", lf.thresholds}});
  }
  j["sizes"] = {{"latent_dim", cfg.sizes.latent_dim},
                {"enc_hidden", cfg.sizes.enc_hidden},
                {"dec_hidden", cfg.sizes.dec_hidden},
                {"dec_mlp", cfg.sizes.dec_mlp},
                {"label_hidden", cfg.sizes.label_hidden},
                {"aux_hidden", cfg.sizes.aux_hidden},
                {"dyn_hidden", cfg.sizes.dyn_hidden},
                {"state_dependent_log_std", cfg.sizes.state_dependent_log_std}};
  j["training"] = {{"batch_size", cfg.train.batch_size},
                   {"lr", cfg.train.lr},
                   {"label_lr", cfg.train.label_lr},
                   {"dynamics_lr", cfg.train.dynamics_lr},
                   {"style_weight", cfg.train.style_weight},
                   {"n_dynamics", cfg.train.n_dynamics},
                   {"n_label", cfg.train.n_label},
                   {"n_policy", cfg.train.n_policy},
                   {"n_collect", cfg.train.n_collect},
                   {"n_env", cfg.train.n_env},
                   {"label_augment_noise", cfg.train.label_augment_noise},
                   {"n_rounds", cfg.train.n_rounds},
                   {"n_label_refresh", cfg.train.n_label_refresh},
                   {"n_refresh_rollouts", cfg.train.n_refresh_rollouts},
                   {"dynamics_weight_decay", cfg.train.dynamics_weight_decay},
                   {"clip_norm", cfg.train.clip_norm}};
  j["eval"] = {{"n_rollouts", cfg.eval.n_rollouts}, {"seeds", cfg.eval.seeds}};
  j["noise_multipliers"] = cfg.noise_multipliers;
  return j.dump(2) + "\n";
}

}  // namespace stylecal
