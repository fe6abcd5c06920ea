#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stylecal/rng.hpp"
#include "stylecal/tensor.hpp"

namespace stylecal {

/// Diagonal Gaussian given by mean and log standard deviation tensors of
/// equal shape. Heads produce log-std through a bounded squash so it always
/// lies in [kLogStdMin, kLogStdMax].
struct DiagGaussian {
  Tensor mean;
  Tensor log_std;
};

inline constexpr double kLogStdMin = -8.0;
inline constexpr double kLogStdMax = 2.0;

/// Squash a raw head output into [kLogStdMin, kLogStdMax].
Tensor bounded_log_std(const Tensor& raw);

/// KL(N(mu, sigma) || N(0, I)) summed over every element.
Tensor kl_to_standard_normal(const DiagGaussian& g);

/// log N(x; mu, sigma) summed over every element.
Tensor gaussian_log_density(const DiagGaussian& g, const Tensor& x);

/// mu + sigma * noise with externally drawn standard normal noise.
Tensor sample_reparameterized(const DiagGaussian& g, const Tensor& noise);

/// Mean over rows of -log softmax(logits)[label]. labels.size() must equal
/// the number of logit rows.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor one_hot_rows(const std::vector<int>& labels, int num_classes);

struct Param {
  Shape shape;
  Array value;
  Array m;  // Adam first moment
  Array v;  // Adam second moment
  std::int64_t step = 0;
};

/// Named parameter map with per-parameter Adam state. Iteration follows
/// insertion order so serialization and updates are deterministic.
class ParameterStore {
 public:
  void add(const std::string& name, Shape shape, Array init);
  void add_uniform(const std::string& name, Shape shape, Rng& rng);  // U[-1/sqrt(fan_in), ..]
  void add_zeros(const std::string& name, Shape shape);

  bool has(const std::string& name) const;
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  std::map<std::string, Tensor> leaves(Tape& tape) const;

  /// FNV-1a over raw value bytes in insertion order; partition tests use this
  /// to prove a phase left a store untouched.
  std::uint64_t checksum() const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Param> params_;
};

using GradMap = std::map<std::string, Array>;

/// Gradients of a scalar loss for every leaf in `leaves`; absent tape
/// gradients come back as zeros.
GradMap collect_grads(const Tape& tape, const std::map<std::string, Tensor>& leaves);

/// Rescales all gradients in place when the global L2 norm exceeds
/// `max_norm`. Returns the pre-clip norm.
double clip_global_norm(GradMap& grads, double max_norm);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled L2
};

/// One Adam update with bias correction over every parameter in the store.
/// Throws if a parameter has no entry in `grads`.
void adam_step(ParameterStore& store, const GradMap& grads, const AdamConfig& cfg);

// --- layers ---

struct LinearP {
  Tensor W;  // [in, out]
  Tensor b;  // [out]
};

struct GruP {
  Tensor Wz, Uz, bz;
  Tensor Wr, Ur, br;
  Tensor Wh, Uh, bh;
};

void add_linear_params(ParameterStore& s, const std::string& prefix, int in, int out,
                       Rng& rng);
void add_gru_params(ParameterStore& s, const std::string& prefix, int in, int hidden,
                    Rng& rng);

LinearP linear_ref(const std::map<std::string, Tensor>& p, const std::string& prefix);
GruP gru_ref(const std::map<std::string, Tensor>& p, const std::string& prefix);

Tensor linear(const Tensor& x, const LinearP& p);

/// h' = (1 - z) * h + z * hcand with update gate z, reset gate r.
Tensor gru_step(const Tensor& x, const Tensor& h, const GruP& p);

/// Final forward and backward hidden states concatenated, then a linear map.
Tensor bigru_encode(const std::vector<Tensor>& sequence, const GruP& fwd, const GruP& bwd,
                    const LinearP& out);

}  // namespace stylecal
