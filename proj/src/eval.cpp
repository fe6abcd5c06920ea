#include "stylecal/eval.hpp"

#include <json.hpp>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace stylecal {

namespace {

using nlohmann::json;

std::vector<LabelingFunction> true_lfs(const AnnotatedDataset& ann) {
  std::vector<LabelingFunction> lfs = ann.lfs;
  for (auto& lf : lfs) lf.noise_std = 0.0;
  return lfs;
}

// content-keyed stream index so the posterior noise draw for a trajectory
// does not depend on its position in the test set
std::uint64_t trajectory_hash(const Trajectory& traj) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const double* d, std::size_t n) {
    const auto* b = reinterpret_cast<const unsigned char*>(d);
    for (std::size_t i = 0; i < n * sizeof(double); ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& s : traj.states) mix(s.data(), 2);
  for (const auto& a : traj.actions) mix(a.data(), 2);
  return h;
}

bool finite_trajectory(const Trajectory& traj) {
  for (const auto& s : traj.states)
    if (!s.allFinite()) return false;
  for (const auto& a : traj.actions)
    if (!a.allFinite()) return false;
  return true;
}

}  // namespace

StyleConsistency style_consistency(const PolicyModel& policy, const AnnotatedDataset& ann,
                                   const EnvConfig& env, int n_rollouts,
                                   std::uint64_t seed) {
  std::vector<LabelingFunction> lfs = true_lfs(ann);
  int M = static_cast<int>(lfs.size());
  StyleConsistency out;
  out.per_lf.assign(M, 0.0);

  Rng rng = derive_rng(seed, "eval-sc");
  const int chunk = 256;  // fixed so results do not depend on scheduling
  int done = 0;
  while (done < n_rollouts) {
    int b = std::min(chunk, n_rollouts - done);
    std::vector<StyleLabel> ys(b);
    std::vector<Vec2> s1(b);
    for (int i = 0; i < b; ++i) {
      ys[i] = ann.sample_label(rng);
      s1[i] = sample_initial_state(rng);
    }
    Array z = sample_prior_z(policy, b, rng);
    auto rolls = rollout_env(policy, ys, z, s1, env, rng);
    for (int i = 0; i < b; ++i) {
      if (!finite_trajectory(rolls[i])) {
        out.divergent++;
        continue;  // counts as inconsistent on every labeling function
      }
      bool all = true;
      for (int m = 0; m < M; ++m) {
        bool hit = apply(lfs[m], rolls[i]) == ys[i][m];
        if (hit) out.per_lf[m] += 1.0;
        all = all && hit;
      }
      if (all) out.joint += 1.0;
    }
    done += b;
  }
  for (auto& v : out.per_lf) v /= n_rollouts;
  out.joint /= n_rollouts;
  return out;
}

DensityResult negative_log_density(const PolicyModel& policy, const AnnotatedDataset& ann,
                                   const std::vector<Trajectory>& test,
                                   std::uint64_t seed) {
  if (test.empty()) throw std::invalid_argument("negative_log_density: empty test set");
  std::vector<StyleLabel> labels;
  if (is_conditional(policy.kind)) {
    std::vector<LabelingFunction> lfs = true_lfs(ann);
    labels.reserve(test.size());
    for (const auto& traj : test) {
      StyleLabel y(lfs.size());
      for (std::size_t m = 0; m < lfs.size(); ++m) y[m] = apply(lfs[m], traj);
      labels.push_back(std::move(y));
    }
  }

  auto p = value_map(policy.params);
  double logp_sum = 0.0, kl_sum = 0.0;
  long steps = 0;
  const int chunk = 256;
  for (std::size_t start = 0; start < test.size(); start += chunk) {
    std::vector<int> idx;
    for (std::size_t i = start; i < std::min(test.size(), start + chunk); ++i)
      idx.push_back(static_cast<int>(i));
    Batch batch = make_batch(test, labels.empty() ? nullptr : &labels, idx);
    int b = batch.rows;
    int T = batch.horizon();
    Tensor z, y1h;
    if (is_conditional(policy.kind)) y1h = joint_one_hot(batch.ys, policy.class_sizes);
    if (has_latent(policy.kind)) {
      DiagGaussian post = encode(policy, p, batch);
      int zd = policy.sizes.latent_dim;
      Array noise(b * zd);
      for (int i = 0; i < b; ++i) {
        Rng row_rng = derive_rng(seed, "eval-nld", trajectory_hash(test[idx[i]]));
        for (int d = 0; d < zd; ++d) noise[i * zd + d] = row_rng.normal();
      }
      z = sample_reparameterized(post, Tensor({b, zd}, std::move(noise)));
      kl_sum += kl_to_standard_normal(post).data[0];
    }
    Tensor h = Tensor::zeros({b, policy.sizes.dec_hidden});
    for (int t = 0; t < T; ++t) {
      DiagGaussian dist = decode_step(policy, p, batch.states[t], z, y1h, h);
      logp_sum += gaussian_log_density(dist, batch.actions[t]).data[0];
    }
    steps += static_cast<long>(b) * T;
  }
  DensityResult out;
  out.nld_per_step = -logp_sum / static_cast<double>(steps);
  out.kl_per_step = kl_sum / static_cast<double>(steps);
  return out;
}

std::string MetricReport::to_json() const {
  json j;
  j["model"] = model;
  j["seed"] = seed;
  j["style_consistency"] = sc.per_lf;
  j["joint_style_consistency"] = sc.joint;
  j["divergent_rollouts"] = sc.divergent;
  j["nld_per_step"] = density.nld_per_step;
  j["kl_per_step"] = density.kl_per_step;
  return j.dump();
}

SummaryStats summarize(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  std::sort(values.begin(), values.end());
  SummaryStats s;
  s.min = values.front();
  s.max = values.back();
  std::size_t n = values.size();
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

namespace {

struct ModelAggregate {
  SummaryStats joint_sc;
  SummaryStats nld;
};

std::vector<std::pair<std::string, ModelAggregate>> aggregate(
    const std::vector<MetricReport>& records) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> sc, nld;
  for (const auto& r : records) {
    if (!sc.count(r.model)) order.push_back(r.model);
    sc[r.model].push_back(r.sc.joint);
    nld[r.model].push_back(r.density.nld_per_step);
  }
  std::vector<std::pair<std::string, ModelAggregate>> out;
  for (const auto& model : order)
    out.emplace_back(model, ModelAggregate{summarize(sc[model]), summarize(nld[model])});
  return out;
}

}  // namespace

std::string report_csv(const std::vector<MetricReport>& records) {
  std::ostringstream os;
  os << "model,sc_min,sc_median,sc_max,nld_min,nld_median,nld_max\n";
  for (const auto& [model, agg] : aggregate(records)) {
    os << model << ',' << agg.joint_sc.min << ',' << agg.joint_sc.median << ','
       << agg.joint_sc.max << ',' << agg.nld.min << ',' << agg.nld.median << ','
       << agg.nld.max << '\n';
  }
  return os.str();
}

std::string report_text(const std::vector<MetricReport>& records) {
  std::ostringstream os;
  os << "model            style-consistency (min/median/max)   nld/step (min/median/max)\n";
  for (const auto& [model, agg] : aggregate(records)) {
    os << model;
    for (std::size_t i = model.size(); i < 17; ++i) os << ' ';
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.3f / %.3f / %.3f              %.3f / %.3f / %.3f\n",
                  agg.joint_sc.min, agg.joint_sc.median, agg.joint_sc.max, agg.nld.min,
                  agg.nld.median, agg.nld.max);
    os << buf;
  }
  return os.str();
}

std::vector<NoisePoint> noise_study(const TrainConfig& cfg,
                                    const std::vector<Trajectory>& data,
                                    const std::vector<LabelingFunction>& base_lfs,
                                    const std::vector<double>& multipliers,
                                    const EvalConfig& eval_cfg, const EnvConfig& env) {
  std::vector<LabelingFunction> clean = base_lfs;
  for (auto& lf : clean) lf.noise_std = 0.0;
  AnnotatedDataset ann_true = annotate(clean, data, cfg.seed);

  std::vector<double> all_mult;
  all_mult.push_back(0.0);
  for (double c : multipliers)
    if (c != 0.0) all_mult.push_back(c);

  std::vector<NoisePoint> points;
  double baseline_sc = 0.0;
  for (double c : all_mult) {
    std::vector<LabelingFunction> noisy = base_lfs;
    for (auto& lf : noisy) lf.noise_std *= c;
    NoisePoint pt;
    pt.multiplier = c;
    double dis = 0.0;
    for (std::size_t m = 0; m < noisy.size(); ++m)
      dis += disagreement(noisy[m], clean[m], data, cfg.seed);
    pt.disagreement = dis / static_cast<double>(noisy.size());

    AnnotatedDataset ann_noisy = annotate(noisy, data, cfg.seed);
    std::vector<double> scs;
    for (std::uint64_t seed : eval_cfg.seeds) {
      TrainConfig run = cfg;
      run.seed = seed;
      TrainResult r = train(run, data, ann_noisy);
      scs.push_back(
          style_consistency(r.policy, ann_true, env, eval_cfg.n_rollouts, seed).joint);
    }
    pt.style_consistency = summarize(scs).median;
    if (c == 0.0) baseline_sc = pt.style_consistency;
    pt.relative_decrease =
        baseline_sc > 0.0 ? (baseline_sc - pt.style_consistency) / baseline_sc : 0.0;
    points.push_back(pt);
  }
  return points;
}

std::string noise_csv(const std::vector<NoisePoint>& points) {
  std::ostringstream os;
  os << "multiplier,disagreement,style_consistency,relative_decrease\n";
  for (const auto& p : points)
    os << p.multiplier << ',' << p.disagreement << ',' << p.style_consistency << ','
       << p.relative_decrease << '\n';
  return os.str();
}

}  // namespace stylecal
