#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylecal/models.hpp"

namespace stylecal {

/// Iteration counts of -1 resolve to multiples of the number of minibatches
/// per pass over the data (10x dynamics, 20x label approximator, 30x policy).
struct TrainConfig {
  ModelKind kind = ModelKind::Ctvae;
  ModelSizes sizes;
  int batch_size = 128;
  double lr = 2e-4;
  double label_lr = 1e-3;
  double dynamics_lr = 1e-3;
  double style_weight = 1.0;
  int n_dynamics = -1;
  int n_label = -1;
  int n_policy = -1;
  int n_collect = 128;  // rollout batch for the style / mi terms
  // Label-approximator robustness: each pretraining minibatch is doubled with
  // an action-noise-perturbed, re-integrated copy relabeled by the labeling
  // functions, so the approximator stays accurate off the demonstration
  // manifold (0 disables).
  double label_augment_noise = 0.02;
  // Style training alternates between policy chunks and label-approximator
  // refreshes: the policy iterations are split into n_rounds chunks, and
  // before every chunk after the first the approximator takes n_label_refresh
  // steps on minibatches mixing demonstrations with n_refresh_rollouts fresh
  // environment rollouts of the current policy, relabeled by the labeling
  // functions. This closes the blind spots a policy would otherwise exploit;
  // the approximator is only ever updated in these label-phase steps, never
  // by the policy objective itself.
  int n_rounds = 4;
  int n_label_refresh = 400;
  int n_refresh_rollouts = 256;
  int n_env = 0;        // env rollouts per policy iteration for dynamics fine-tuning
  double dynamics_weight_decay = 1e-5;
  double clip_norm = 10.0;
  bool stochastic_env = false;
  double env_noise_std = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  PolicyModel policy;
  LabelApproximator label_approx;  // meaningful when has_label_approx
  DynamicsModel dynamics;          // meaningful when has_dynamics
  bool has_label_approx = false;
  bool has_dynamics = false;
  std::vector<std::string> metrics;  // one JSON object per line, no wall-clock
};

/// Whether training this kind at this style weight touches the label
/// approximator / dynamics machinery at all. A zero style weight reduces the
/// style kinds to their base objective, including the random streams consumed.
bool style_machinery_active(ModelKind kind, double style_weight);

int batches_per_pass(int n, int batch_size);

void pretrain_dynamics(DynamicsModel& dyn, const std::vector<Trajectory>& data,
                       const TrainConfig& cfg, std::vector<std::string>* metrics);

void pretrain_label_approximator(LabelApproximator& c, const std::vector<Trajectory>& data,
                                 const AnnotatedDataset& ann, const TrainConfig& cfg,
                                 std::vector<std::string>* metrics);

/// Full pipeline for the configured model kind: optional dynamics and label
/// approximator pretraining, then the policy phase. Deterministic given
/// cfg.seed; throws std::runtime_error if a loss goes non-finite.
TrainResult train(const TrainConfig& cfg, const std::vector<Trajectory>& data,
                  const AnnotatedDataset& ann);

}  // namespace stylecal
