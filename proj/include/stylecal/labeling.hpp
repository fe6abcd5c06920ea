#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylecal/env.hpp"

namespace stylecal {

enum class ScoreKind { Speed, Displacement, Destination, Direction, Curvature };

ScoreKind score_kind_from_string(const std::string& s);
std::string to_string(ScoreKind k);

/// Programmatic labeling function: a raw score over a trajectory plus sorted
/// thresholds producing a categorical class. noise_std = 0 is the true
/// labeling function; > 0 perturbs the score before thresholding.
struct LabelingFunction {
  std::string name;
  ScoreKind kind = ScoreKind::Speed;
  Vec2 destination{0.5, 1.0};  // only used by Destination
  std::vector<double> thresholds;  // strictly increasing, K-1 entries
  double noise_std = 0.0;

  int num_classes() const { return static_cast<int>(thresholds.size()) + 1; }
};

/// Tuple of one class per labeling function.
using StyleLabel = std::vector<int>;

double score(const LabelingFunction& lf, const Trajectory& traj);

/// Thresholds at empirical quantiles i/K. Throws if fewer than K distinct
/// score values are available.
std::vector<double> fit_thresholds(std::vector<double> scores, int num_classes);

/// Class of a single trajectory. Scores equal to a threshold map to the
/// higher class. rng is consumed only when noise_std > 0.
int apply(const LabelingFunction& lf, const Trajectory& traj, Rng* rng = nullptr);

struct AnnotatedDataset {
  std::vector<LabelingFunction> lfs;
  std::vector<StyleLabel> labels;       // parallel to the source dataset
  std::vector<int> class_sizes;         // K_i per labeling function
  std::vector<double> joint_marginal;   // empirical p(y), row-major over lfs

  int num_joint() const { return static_cast<int>(joint_marginal.size()); }
  int joint_index(const StyleLabel& y) const;
  StyleLabel joint_unindex(int idx) const;
  /// Draws a label tuple from the empirical joint marginal.
  StyleLabel sample_label(Rng& rng) const;
};

/// Labels every trajectory with every labeling function. Noise draws use
/// per-record streams derived from (seed, record index).
AnnotatedDataset annotate(const std::vector<LabelingFunction>& lfs,
                          const std::vector<Trajectory>& data, std::uint64_t seed = 0);

/// Fraction of trajectories on which the noisy and true labeling functions
/// disagree. Both must share score kind and thresholds.
double disagreement(const LabelingFunction& noisy, const LabelingFunction& truth,
                    const std::vector<Trajectory>& data, std::uint64_t seed = 0);

}  // namespace stylecal
