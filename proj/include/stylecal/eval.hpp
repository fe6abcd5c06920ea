#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stylecal/training.hpp"

namespace stylecal {

struct EvalConfig {
  int n_rollouts = 500;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct StyleConsistency {
  std::vector<double> per_lf;  // one accuracy per labeling function
  double joint = 0.0;          // all labels correct at once
  int divergent = 0;           // non-finite rollouts, scored inconsistent
};

/// Rolls the policy out in the true environment with y ~ p(y), z ~ prior,
/// s1 ~ initial distribution, then scores each rollout with the true
/// (noise-free) labeling functions.
StyleConsistency style_consistency(const PolicyModel& policy, const AnnotatedDataset& ann,
                                   const EnvConfig& env, int n_rollouts,
                                   std::uint64_t seed);

struct DensityResult {
  double nld_per_step = 0.0;  // mean over trajectories of -(1/T) sum_t log pi
  double kl_per_step = 0.0;   // KL(q||prior) / T, zero for latent-free kinds
};

/// Reconstruction quality on held-out data with one posterior z sample per
/// trajectory.
DensityResult negative_log_density(const PolicyModel& policy, const AnnotatedDataset& ann,
                                   const std::vector<Trajectory>& test,
                                   std::uint64_t seed);

/// One evaluated seed: a full train + eval cycle's headline numbers.
struct MetricReport {
  std::string model;
  std::uint64_t seed = 0;
  StyleConsistency sc;
  DensityResult density;

  std::string to_json() const;  // one line, deterministic field order
};

struct SummaryStats {
  double min = 0.0, median = 0.0, max = 0.0;
};

SummaryStats summarize(std::vector<double> values);

/// Comma-separated table: one row per model kind with min/median/max of
/// joint style-consistency and NLD over seeds.
std::string report_csv(const std::vector<MetricReport>& records);

/// The same aggregates as a plain-text table.
std::string report_text(const std::vector<MetricReport>& records);

struct NoisePoint {
  double multiplier = 0.0;
  double disagreement = 0.0;       // noisy vs true labeling function on data
  double style_consistency = 0.0;  // median over seeds, true lfs
  double relative_decrease = 0.0;  // vs the sigma=0 baseline
};

/// Retrains the configured style model at each noise multiplier (0 is the
/// baseline) and measures how style-consistency degrades relative to label
/// disagreement.
std::vector<NoisePoint> noise_study(const TrainConfig& cfg,
                                    const std::vector<Trajectory>& data,
                                    const std::vector<LabelingFunction>& base_lfs,
                                    const std::vector<double>& multipliers,
                                    const EvalConfig& eval_cfg, const EnvConfig& env);

std::string noise_csv(const std::vector<NoisePoint>& points);

}  // namespace stylecal
