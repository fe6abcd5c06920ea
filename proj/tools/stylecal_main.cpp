#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "stylecal/checkpoint.hpp"
#include "stylecal/config.hpp"
#include "stylecal/dataset_io.hpp"
#include "stylecal/eval.hpp"
#include "stylecal/plot.hpp"

namespace fs = std::filesystem;
using namespace stylecal;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> workers_flag;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool out_required = true) {
  cmd->add_option("--config", o.config_path, "run config JSON file");
  auto* out = cmd->add_option("--out", o.out_dir, "output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", o.seed_flag, "override the config seed");
  cmd->add_option("--workers", o.workers_flag, "parallel workers");
}

/// Precedence: --seed flag > STYLECAL_SEED > config file.
RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
  if (const char* env_seed = std::getenv("STYLECAL_SEED")) {
    try {
      cfg.seed = std::stoull(env_seed);
    } catch (const std::exception&) {
      throw ConfigError(std::string("STYLECAL_SEED is not an integer: ") + env_seed);
    }
  }
  if (o.seed_flag) cfg.seed = *o.seed_flag;
  if (o.workers_flag) cfg.workers = *o.workers_flag;
  cfg.validate();
  return cfg;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("short write: " + path);
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_file(out_dir + "/config.resolved.json", resolved_config_json(cfg));
}

TrainConfig build_train_config(const RunConfig& cfg) {
  TrainConfig t = cfg.train;
  t.kind = model_kind_from_string(cfg.model);
  t.sizes = cfg.sizes;
  t.seed = cfg.seed;
  t.stochastic_env = cfg.env.stochastic;
  t.env_noise_std = cfg.env.noise_std;
  return t;
}

std::vector<LabelingFunction> load_lfs(const RunConfig& cfg, const std::string& lfs_path,
                                       bool need_thresholds) {
  std::vector<LabelingFunction> lfs;
  if (!lfs_path.empty()) {
    std::ifstream in(lfs_path);
    if (!in) throw std::runtime_error("cannot open labeling functions: " + lfs_path);
    json arr;
    try {
      in >> arr;
    } catch (const json::exception& e) {
      throw ConfigError("bad labeling-function file " + lfs_path + ": " + e.what());
    }
    // reuse the config parser so validation and unknown-key rejection match
    json wrapper = {{"labeling", arr}};
    RunConfig tmp = parse_run_config(wrapper.dump());
    lfs = tmp.labeling_functions();
  } else {
    lfs = cfg.labeling_functions();
  }
  if (lfs.empty()) throw ConfigError("no labeling functions configured");
  if (need_thresholds)
    for (const auto& lf : lfs)
      if (lf.thresholds.empty())
        throw ConfigError("labeling function '" + lf.name +
                          "' has no thresholds; run fit-labels first");
  return lfs;
}

json lf_to_json(const LabelingFunction& lf, int classes) {
  return {{"name", lf.name},
          {"kind", to_string(lf.kind)},
          {"classes", classes},
          {"noise_std", lf.noise_std},
          {"destination", {lf.destination.x(), lf.destination.y()}},
          {"thresholds", lf.thresholds}};
}

DatasetMeta make_meta(const RunConfig& cfg, std::uint64_t seed, int count) {
  DatasetMeta meta;
  meta.T = cfg.env.T;
  meta.seed = seed;
  meta.count = count;
  return meta;
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  echo_config(cfg, out_dir);
  auto train_set =
      generate_demonstrations(cfg.n_train, cfg.env, cfg.demo, cfg.seed, cfg.workers);
  std::uint64_t test_seed = cfg.seed ^ hash_tag("test-split");
  auto test_set =
      generate_demonstrations(cfg.n_test, cfg.env, cfg.demo, test_seed, cfg.workers);
  save_trajectories(out_dir + "/train.jsonl", train_set,
                    make_meta(cfg, cfg.seed, cfg.n_train));
  save_trajectories(out_dir + "/test.jsonl", test_set,
                    make_meta(cfg, test_seed, cfg.n_test));

  std::cout << "wrote " << train_set.size() << " train / " << test_set.size()
            << " test trajectories to " << out_dir << "\n";
  for (ScoreKind kind : {ScoreKind::Speed, ScoreKind::Displacement,
                         ScoreKind::Destination, ScoreKind::Direction,
                         ScoreKind::Curvature}) {
    LabelingFunction lf;
    lf.kind = kind;
    std::vector<double> scores;
    for (const auto& t : train_set) scores.push_back(score(lf, t));
    std::sort(scores.begin(), scores.end());
    auto q = [&](double f) { return scores[static_cast<std::size_t>(f * (scores.size() - 1))]; };
    std::cout << "  " << to_string(kind) << " score quartiles: " << q(0.0) << " / "
              << q(0.25) << " / " << q(0.5) << " / " << q(0.75) << " / " << q(1.0)
              << "\n";
  }
  return 0;
}

int cmd_fit_labels(const RunConfig& cfg, const std::string& out_dir,
                   const std::string& data_path) {
  echo_config(cfg, out_dir);
  if (cfg.lfs.empty()) throw ConfigError("no labeling functions configured");
  auto data = load_trajectories(data_path);
  json out = json::array();
  std::vector<LabelingFunction> fitted;
  for (const auto& spec : cfg.lfs) {
    LabelingFunction lf = spec.to_labeling_function();
    std::vector<double> scores;
    scores.reserve(data.size());
    for (const auto& t : data) scores.push_back(score(lf, t));
    lf.thresholds = fit_thresholds(scores, spec.classes);
    out.push_back(lf_to_json(lf, spec.classes));
    fitted.push_back(lf);
  }
  write_file(out_dir + "/lfs.json", out.dump(2) + "\n");
  AnnotatedDataset ann = annotate(fitted, data, cfg.seed);
  save_labels(out_dir + "/labels.txt", ann.labels);
  for (std::size_t m = 0; m < fitted.size(); ++m) {
    std::vector<int> counts(ann.class_sizes[m], 0);
    for (const auto& y : ann.labels) counts[y[m]]++;
    std::cout << fitted[m].name << " class counts:";
    for (int c : counts) std::cout << ' ' << c;
    std::cout << "\n";
  }
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& out_dir,
              const std::string& data_path, const std::string& lfs_path) {
  echo_config(cfg, out_dir);
  auto data = load_trajectories(data_path);
  TrainConfig tc = build_train_config(cfg);

  AnnotatedDataset ann;
  if (is_conditional(tc.kind) || style_machinery_active(tc.kind, tc.style_weight)) {
    auto lfs = load_lfs(cfg, lfs_path, true);
    ann = annotate(lfs, data, cfg.seed);
  }

  auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(tc, data, ann);
  auto t1 = std::chrono::steady_clock::now();

  Checkpoint ck;
  ck.header.emplace_back("model", cfg.model);
  ck.header.emplace_back("seed", std::to_string(cfg.seed));
  ck.stores.emplace_back("policy", result.policy.params);
  if (!result.policy.aux_params.names().empty())
    ck.stores.emplace_back("aux", result.policy.aux_params);
  if (result.has_label_approx)
    ck.stores.emplace_back("label_approx", result.label_approx.params);
  if (result.has_dynamics) ck.stores.emplace_back("dynamics", result.dynamics.params);
  save_checkpoint(out_dir + "/checkpoint.bin", ck);

  std::string metrics;
  for (const auto& line : result.metrics) metrics += line + "\n";
  write_file(out_dir + "/metrics.jsonl", metrics);
  // wall clock lives apart from the deterministic artifacts
  double secs = std::chrono::duration<double>(t1 - t0).count();
  write_file(out_dir + "/wall_clock.txt", std::to_string(secs) + "\n");
  std::cout << "trained " << cfg.model << " in " << secs << " s; checkpoint at "
            << out_dir << "/checkpoint.bin\n";
  return 0;
}

PolicyModel load_policy(const RunConfig& cfg, const std::string& ckpt_path,
                        const std::vector<int>& class_sizes) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  std::string model = ck.header_value("model");
  if (model != cfg.model)
    throw ConfigError("checkpoint was trained as '" + model + "' but config says '" +
                      cfg.model + "'");
  ModelKind kind = model_kind_from_string(model);
  PolicyModel policy = PolicyModel::create(
      kind, cfg.sizes, is_conditional(kind) ? class_sizes : std::vector<int>{}, 0);
  for (const auto& name : policy.params.names()) {
    if (!ck.store("policy").has(name))
      throw ConfigError("checkpoint is missing parameter " + name +
                        " (sizes mismatch with config?)");
    policy.params.at(name).value = ck.store("policy").at(name).value;
  }
  if (!policy.aux_params.names().empty() && ck.has_store("aux"))
    for (const auto& name : policy.aux_params.names())
      policy.aux_params.at(name).value = ck.store("aux").at(name).value;
  return policy;
}

int cmd_eval(const RunConfig& cfg, const std::string& out_dir,
             const std::string& ckpt_path, const std::string& data_path,
             const std::string& lfs_path, bool plot) {
  echo_config(cfg, out_dir);
  auto test = load_trajectories(data_path);
  auto lfs = load_lfs(cfg, lfs_path, true);
  for (auto& lf : lfs) lf.noise_std = 0.0;  // evaluation uses the true functions
  AnnotatedDataset ann = annotate(lfs, test, cfg.seed);
  PolicyModel policy = load_policy(cfg, ckpt_path, ann.class_sizes);

  std::vector<MetricReport> records;
  std::string jsonl;
  for (std::uint64_t seed : cfg.eval.seeds) {
    MetricReport r;
    r.model = cfg.model;
    r.seed = seed;
    r.sc = style_consistency(policy, ann, cfg.env, cfg.eval.n_rollouts, seed);
    r.density = negative_log_density(policy, ann, test, seed);
    jsonl += r.to_json() + "\n";
    records.push_back(std::move(r));
  }
  write_file(out_dir + "/report.jsonl", jsonl);
  write_file(out_dir + "/report.csv", report_csv(records));
  write_file(out_dir + "/report.txt", report_text(records));
  std::cout << report_text(records);

  if (plot) {
    Rng rng = derive_rng(cfg.seed, "plot");
    for (std::size_t m = 0; m < lfs.size(); ++m) {
      for (int k = 0; k < ann.class_sizes[m]; ++k) {
        const int n = 32;
        std::vector<StyleLabel> ys(n);
        std::vector<Vec2> s1(n);
        for (int i = 0; i < n; ++i) {
          ys[i] = ann.sample_label(rng);
          ys[i][m] = k;
          s1[i] = sample_initial_state(rng);
        }
        Array z = sample_prior_z(policy, n, rng);
        auto rolls = rollout_env(policy, ys, z, s1, cfg.env, rng);
        std::vector<bool> ok(n);
        for (int i = 0; i < n; ++i) ok[i] = apply(lfs[m], rolls[i]) == k;
        write_file(out_dir + "/plot_" + lfs[m].name + "_class" + std::to_string(k) +
                       ".svg",
                   trajectory_svg(rolls, ok, &lfs[m]));
      }
    }
  }
  return 0;
}

int cmd_rollout(const RunConfig& cfg, const std::string& out_dir,
                const std::string& ckpt_path, const std::string& data_path,
                const std::string& lfs_path, const std::string& label_str, int n) {
  echo_config(cfg, out_dir);
  auto lfs = load_lfs(cfg, lfs_path, true);
  for (auto& lf : lfs) lf.noise_std = 0.0;
  auto ref = load_trajectories(data_path);
  AnnotatedDataset ann = annotate(lfs, ref, cfg.seed);
  PolicyModel policy = load_policy(cfg, ckpt_path, ann.class_sizes);

  Rng rng = derive_rng(cfg.seed, "rollout-cmd");
  std::vector<StyleLabel> ys(n);
  if (!label_str.empty()) {
    StyleLabel fixed;
    std::stringstream ss(label_str);
    std::string part;
    while (std::getline(ss, part, ',')) fixed.push_back(std::stoi(part));
    if (fixed.size() != lfs.size())
      throw ConfigError("--label needs one class per labeling function");
    for (std::size_t m = 0; m < fixed.size(); ++m)
      if (fixed[m] < 0 || fixed[m] >= ann.class_sizes[m])
        throw ConfigError("--label class out of range for " + lfs[m].name);
    for (auto& y : ys) y = fixed;
  } else {
    for (auto& y : ys) y = ann.sample_label(rng);
  }
  std::vector<Vec2> s1(n);
  for (auto& s : s1) s = sample_initial_state(rng);
  Array z = sample_prior_z(policy, n, rng);
  auto rolls = rollout_env(policy, ys, z, s1, cfg.env, rng);
  save_trajectories(out_dir + "/rollouts.jsonl", rolls, make_meta(cfg, cfg.seed, n));
  std::vector<StyleLabel> achieved(n);
  for (int i = 0; i < n; ++i) {
    achieved[i].resize(lfs.size());
    for (std::size_t m = 0; m < lfs.size(); ++m)
      achieved[i][m] = apply(lfs[m], rolls[i]);
  }
  save_labels(out_dir + "/rollout_labels.txt", achieved);
  std::cout << "wrote " << n << " rollouts to " << out_dir << "/rollouts.jsonl\n";
  return 0;
}

int cmd_plot(const RunConfig& cfg, const std::string& out_dir,
             const std::string& data_path, const std::string& labels_path,
             const std::string& lfs_path, int lf_index) {
  echo_config(cfg, out_dir);
  auto data = load_trajectories(data_path);
  std::vector<bool> ok(data.size(), true);
  const LabelingFunction* regions = nullptr;
  std::vector<LabelingFunction> lfs;
  if (!lfs_path.empty() || !cfg.lfs.empty()) {
    lfs = load_lfs(cfg, lfs_path, true);
    if (lf_index < 0 || lf_index >= static_cast<int>(lfs.size()))
      throw ConfigError("--lf index out of range");
    lfs[lf_index].noise_std = 0.0;
    regions = &lfs[lf_index];
    if (!labels_path.empty()) {
      auto labels = load_labels(labels_path);
      if (labels.size() != data.size())
        throw ConfigError("label file does not match the dataset length");
      for (std::size_t i = 0; i < data.size(); ++i)
        ok[i] = apply(lfs[lf_index], data[i]) == labels[i][lf_index];
    }
  }
  write_file(out_dir + "/trajectories.svg", trajectory_svg(data, ok, regions));
  std::cout << "wrote " << out_dir << "/trajectories.svg\n";
  return 0;
}

int cmd_noise_study(const RunConfig& cfg, const std::string& out_dir,
                    const std::string& data_path, const std::string& lfs_path) {
  echo_config(cfg, out_dir);
  TrainConfig tc = build_train_config(cfg);
  if (!uses_style_term(tc.kind))
    throw ConfigError("noise-study needs a style model kind (ctvae-style or rnn-style)");
  auto data = load_trajectories(data_path);
  auto lfs = load_lfs(cfg, lfs_path, true);
  for (const auto& lf : lfs)
    if (lf.noise_std <= 0.0)
      throw ConfigError("labeling function '" + lf.name +
                        "' needs a base noise_std > 0 for the noise study");
  auto points = noise_study(tc, data, lfs, cfg.noise_multipliers, cfg.eval, cfg.env);
  write_file(out_dir + "/noise.csv", noise_csv(points));
  write_file(out_dir + "/noise.svg", noise_svg(points));
  std::cout << noise_csv(points);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"programmatic style-consistency on the 2D point-mass court"};
  app.require_subcommand(1);

  CommonOpts gen_o;
  auto* gen = app.add_subcommand("gen-data", "generate demonstration datasets");
  add_common(gen, gen_o);
  std::optional<int> n_train_flag, n_test_flag;
  gen->add_option("--n-train", n_train_flag, "training trajectories");
  gen->add_option("--n-test", n_test_flag, "test trajectories");

  CommonOpts fit_o;
  std::string fit_data;
  auto* fit = app.add_subcommand("fit-labels", "fit labeling-function thresholds");
  add_common(fit, fit_o);
  fit->add_option("--data", fit_data, "trajectory dataset")->required();

  CommonOpts train_o;
  std::string train_data, train_lfs;
  auto* tr = app.add_subcommand("train", "train a policy model");
  add_common(tr, train_o);
  tr->add_option("--data", train_data, "trajectory dataset")->required();
  tr->add_option("--lfs", train_lfs, "fitted labeling functions JSON");
  std::optional<std::string> model_flag;
  tr->add_option("--model", model_flag, "model kind override");

  CommonOpts eval_o;
  std::string eval_ckpt, eval_data, eval_lfs;
  std::optional<int> eval_rollouts;
  bool eval_plot = false;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, eval_o);
  ev->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  ev->add_option("--data", eval_data, "held-out dataset")->required();
  ev->add_option("--lfs", eval_lfs, "fitted labeling functions JSON");
  ev->add_option("--rollouts", eval_rollouts, "rollouts per seed");
  ev->add_flag("--plot", eval_plot, "emit per-class trajectory figures");

  CommonOpts roll_o;
  std::string roll_ckpt, roll_data, roll_lfs, roll_label;
  int roll_n = 32;
  auto* ro = app.add_subcommand("rollout", "export environment rollouts");
  add_common(ro, roll_o);
  ro->add_option("--checkpoint", roll_ckpt, "trained checkpoint")->required();
  ro->add_option("--data", roll_data, "reference dataset for the label marginal")
      ->required();
  ro->add_option("--lfs", roll_lfs, "fitted labeling functions JSON");
  ro->add_option("--label", roll_label, "fixed class tuple, comma separated");
  ro->add_option("--n", roll_n, "number of rollouts");

  CommonOpts plot_o;
  std::string plot_data, plot_labels, plot_lfs;
  int plot_lf = 0;
  auto* pl = app.add_subcommand("plot", "render a trajectory file");
  add_common(pl, plot_o);
  pl->add_option("--data", plot_data, "trajectory dataset")->required();
  pl->add_option("--labels", plot_labels, "label file for consistency coloring");
  pl->add_option("--lfs", plot_lfs, "fitted labeling functions JSON");
  pl->add_option("--lf", plot_lf, "labeling-function index for regions/coloring");

  CommonOpts noise_o;
  std::string noise_data, noise_lfs;
  auto* no = app.add_subcommand("noise-study", "retrain across noisy labeling functions");
  add_common(no, noise_o);
  no->add_option("--data", noise_data, "trajectory dataset")->required();
  no->add_option("--lfs", noise_lfs, "fitted labeling functions JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      RunConfig cfg = resolve_config(gen_o);
      if (n_train_flag) cfg.n_train = *n_train_flag;
      if (n_test_flag) cfg.n_test = *n_test_flag;
      cfg.validate();
      return cmd_gen_data(cfg, gen_o.out_dir);
    }
    if (fit->parsed()) return cmd_fit_labels(resolve_config(fit_o), fit_o.out_dir, fit_data);
    if (tr->parsed()) {
      RunConfig cfg = resolve_config(train_o);
      if (model_flag) cfg.model = *model_flag;
      cfg.validate();
      return cmd_train(cfg, train_o.out_dir, train_data, train_lfs);
    }
    if (ev->parsed()) {
      RunConfig cfg = resolve_config(eval_o);
      if (eval_rollouts) cfg.eval.n_rollouts = *eval_rollouts;
      cfg.validate();
      return cmd_eval(cfg, eval_o.out_dir, eval_ckpt, eval_data, eval_lfs, eval_plot);
    }
    if (ro->parsed())
      return cmd_rollout(resolve_config(roll_o), roll_o.out_dir, roll_ckpt, roll_data,
                         roll_lfs, roll_label, roll_n);
    if (pl->parsed())
      return cmd_plot(resolve_config(plot_o), plot_o.out_dir, plot_data, plot_labels,
                      plot_lfs, plot_lf);
    if (no->parsed())
      return cmd_noise_study(resolve_config(noise_o), noise_o.out_dir, noise_data,
                             noise_lfs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
