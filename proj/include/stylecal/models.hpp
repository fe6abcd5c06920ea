#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylecal/env.hpp"
#include "stylecal/labeling.hpp"
#include "stylecal/nn.hpp"

namespace stylecal {

/// A computation went numerically non-finite (exploding rollout or loss).
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ModelKind { Tvae, Ctvae, CtvaeInfo, CtvaeMi, CtvaeStyle, Rnn, RnnStyle };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

bool has_latent(ModelKind k);       // everything except the plain RNN kinds
bool is_conditional(ModelKind k);   // decoder sees the style label
bool encoder_conditioned(ModelKind k);
bool uses_style_term(ModelKind k);  // CtvaeStyle, RnnStyle
bool uses_dynamics(ModelKind k);    // CtvaeMi, CtvaeStyle, RnnStyle
bool uses_label_approx(ModelKind k);

struct ModelSizes {
  int state_dim = 2;
  int action_dim = 2;
  int latent_dim = 4;
  int enc_hidden = 32;
  int dec_hidden = 32;
  int dec_mlp = 32;
  int label_hidden = 32;
  int aux_hidden = 32;
  std::vector<int> dyn_hidden{64, 64};
  bool state_dependent_log_std = true;
};

/// Detached constant copy: same values, no tape participation.
Tensor detach(const Tensor& t);

/// Mini-batch of equal-length trajectories laid out per timestep as
/// [batch x dim] constants.
struct Batch {
  std::vector<Tensor> states;   // T+1 tensors [B x state_dim]
  std::vector<Tensor> actions;  // T tensors [B x action_dim]
  std::vector<StyleLabel> ys;   // one label tuple per row (may be empty)
  int rows = 0;
  int horizon() const { return static_cast<int>(actions.size()); }
};

Batch make_batch(const std::vector<Trajectory>& data,
                 const std::vector<StyleLabel>* labels, const std::vector<int>& idx);

/// One-hot encodings of every labeling function's class, concatenated.
Tensor joint_one_hot(const std::vector<StyleLabel>& ys,
                     const std::vector<int>& class_sizes);

// --- policy models ---

struct PolicyModel {
  ModelKind kind = ModelKind::Tvae;
  ModelSizes sizes;
  std::vector<int> class_sizes;  // empty for Tvae
  ParameterStore params;      // theta, phi
  ParameterStore aux_params;  // psi for CtvaeInfo's adversary (empty otherwise)

  int label_dim() const;
  static PolicyModel create(ModelKind kind, const ModelSizes& sizes,
                            const std::vector<int>& class_sizes, std::uint64_t seed);
};

std::map<std::string, Tensor> value_map(const ParameterStore& store);

/// Posterior q(z | trajectory [, y]) from the bi-directional GRU encoder.
DiagGaussian encode(const PolicyModel& m, const std::map<std::string, Tensor>& p,
                    const Batch& batch);

/// Action distribution for one step; h is the decoder GRU state and is
/// updated in place.
DiagGaussian decode_step(const PolicyModel& m, const std::map<std::string, Tensor>& p,
                         const Tensor& s, const Tensor& z, const Tensor& y_onehot,
                         Tensor& h);

struct LossParts {
  Tensor total;  // scalar, mean over batch rows
  Tensor nld;    // reconstruction term (sum over time, mean over rows)
  Tensor kl;     // KL term (mean over rows); zero for RNN kinds
};

/// Reconstruction + KL for the model's own conditioning (Tvae, Ctvae, Rnn
/// and the imitation part of every derived kind). Draws one reparameterized
/// z per trajectory.
LossParts imitation_loss(const PolicyModel& m, const std::map<std::string, Tensor>& p,
                         const Batch& batch, Rng& rng);

/// Adversarial pair for CtvaeInfo. policy_side tracks only m.params leaves,
/// aux_side only m.aux_params leaves (z detached).
struct InfoLosses {
  Tensor policy_side;
  Tensor aux_side;
  LossParts imitation;
};
InfoLosses info_losses(const PolicyModel& m, const std::map<std::string, Tensor>& p,
                       const std::map<std::string, Tensor>& aux_p, const Batch& batch,
                       Rng& rng);

Tensor aux_logits_joint(const PolicyModel& m, const std::map<std::string, Tensor>& aux_p,
                        const Tensor& z, int lf_index);

// --- label approximator ---

struct LabelApproximator {
  std::vector<int> class_sizes;
  int state_dim = 2, action_dim = 2, hidden = 32;
  ParameterStore params;  // psi

  static LabelApproximator create(const std::vector<int>& class_sizes, int hidden,
                                  int state_dim, int action_dim, std::uint64_t seed);
};

/// Per-labeling-function class logits [B x K_i] over a full trajectory
/// (states/actions laid out as in Batch; the final step pairs s_{T+1} with a
/// zero action).
std::vector<Tensor> label_logits(const LabelApproximator& c,
                                 const std::map<std::string, Tensor>& p,
                                 const std::vector<Tensor>& states,
                                 const std::vector<Tensor>& actions);

/// Sum over labeling functions of cross-entropy, mean over batch rows.
Tensor label_approx_loss(const LabelApproximator& c, const std::map<std::string, Tensor>& p,
                         const std::vector<Tensor>& states,
                         const std::vector<Tensor>& actions,
                         const std::vector<StyleLabel>& ys);

// --- dynamics model ---

struct DynamicsModel {
  int state_dim = 2, action_dim = 2;
  std::vector<int> hidden{64, 64};
  bool stochastic = false;
  ParameterStore params;  // phi (phi_mu, phi_sigma share the trunk)

  static DynamicsModel create(const std::vector<int>& hidden, bool stochastic,
                              int state_dim, int action_dim, std::uint64_t seed);
};

/// Predicted state change. Stochastic models return a reparameterized sample
/// when noise is given, otherwise the mean.
Tensor dynamics_delta(const DynamicsModel& m, const std::map<std::string, Tensor>& p,
                      const Tensor& s, const Tensor& a, const Tensor* noise = nullptr);

/// Deterministic: sum_t |M(s,a) - ds|^2; stochastic: sum_t -log N(ds; mu, sigma).
/// Mean over batch rows.
Tensor dynamics_loss(const DynamicsModel& m, const std::map<std::string, Tensor>& p,
                     const Batch& batch);

/// Held-out MSE per timestep per dimension of the mean prediction.
double dynamics_test_mse(const DynamicsModel& m, const std::vector<Trajectory>& data);

// --- rollouts ---

struct RolloutTensors {
  std::vector<Tensor> states;   // T+1 [B x state_dim]
  std::vector<Tensor> actions;  // T [B x action_dim]
};

/// Differentiable rollout through the dynamics model: actions reparameterized
/// from the policy, states accumulated as s + M(s, a). The whole trajectory
/// stays on whatever tape the parameter leaves live on.
RolloutTensors rollout_model(const PolicyModel& m, const std::map<std::string, Tensor>& pp,
                             const DynamicsModel& dyn, const std::map<std::string, Tensor>& dp,
                             const std::vector<StyleLabel>& ys, const Tensor& z,
                             const Tensor& s1, int T, Rng& rng);

/// Rollouts in the true environment (batched, never on tape).
std::vector<Trajectory> rollout_env(const PolicyModel& m,
                                    const std::vector<StyleLabel>& ys, const Array& z_rows,
                                    const std::vector<Vec2>& s1, const EnvConfig& env,
                                    Rng& rng);

/// Prior z draws as a [B x latent_dim] flat array (empty for RNN kinds).
Array sample_prior_z(const PolicyModel& m, int rows, Rng& rng);

}  // namespace stylecal
