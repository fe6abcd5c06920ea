#include "stylecal/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace stylecal {

Tensor bounded_log_std(const Tensor& raw) {
  // kLogStdMin + (max-min) * sigmoid(raw); smooth, so gradient checks stay exact
  Tensor s = sigmoid(raw);
  return add(scale(s, kLogStdMax - kLogStdMin),
             Tensor::scalar_value(kLogStdMin));
}

Tensor kl_to_standard_normal(const DiagGaussian& g) {
  if (g.mean.shape != g.log_std.shape)
    throw std::invalid_argument("DiagGaussian mean/log_std shape mismatch: " +
                                shape_str(g.mean.shape) + " vs " + shape_str(g.log_std.shape));
  // sum 0.5 * (mu^2 + sigma^2 - 1 - 2*log sigma)
  Tensor var = exp_op(scale(g.log_std, 2.0));
  Tensor inner = sub(sub(add(square(g.mean), var), Tensor::scalar_value(1.0)),
                     scale(g.log_std, 2.0));
  return scale(sum(inner), 0.5);
}

Tensor gaussian_log_density(const DiagGaussian& g, const Tensor& x) {
  if (x.shape != g.mean.shape)
    throw std::invalid_argument("gaussian_log_density: x shape " + shape_str(x.shape) +
                                " does not match mean " + shape_str(g.mean.shape));
  static const double kHalfLog2Pi = 0.5 * std::log(2.0 * 3.14159265358979323846);
  Tensor diff = sub(x, g.mean);
  Tensor inv_var = exp_op(scale(g.log_std, -2.0));
  Tensor quad = scale(mul(square(diff), inv_var), 0.5);
  Tensor per = negate(add(add(quad, g.log_std), Tensor::scalar_value(kHalfLog2Pi)));
  return sum(per);
}

Tensor sample_reparameterized(const DiagGaussian& g, const Tensor& noise) {
  if (noise.shape != g.mean.shape)
    throw std::invalid_argument("sample_reparameterized: noise shape " +
                                shape_str(noise.shape) + " does not match mean " +
                                shape_str(g.mean.shape));
  return add(g.mean, mul(exp_op(g.log_std), noise));
}

Tensor one_hot_rows(const std::vector<int>& labels, int num_classes) {
  int b = static_cast<int>(labels.size());
  Array d = Array::Zero(b * num_classes);
  for (int i = 0; i < b; ++i) {
    int c = labels[i];
    if (c < 0 || c >= num_classes)
      throw std::out_of_range("one_hot_rows: class " + std::to_string(c) +
                              " out of range [0," + std::to_string(num_classes) + ")");
    d[i * num_classes + c] = 1.0;
  }
  return Tensor({b, num_classes}, std::move(d));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.shape[0] != static_cast<int>(labels.size()))
    throw std::invalid_argument("cross_entropy: logits " + shape_str(logits.shape) +
                                " vs " + std::to_string(labels.size()) + " labels");
  int b = logits.shape[0], k = logits.shape[1];
  Tensor onehot = one_hot_rows(labels, k);
  // floor keeps 0 * log(0) out of saturated rows
  Tensor logp = log_op(add(softmax(logits), Tensor::scalar_value(1e-300)));
  return scale(sum(mul(logp, onehot)), -1.0 / b);
}

void ParameterStore::add(const std::string& name, Shape shape, Array init) {
  if (params_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  if (init.size() != shape_size(shape))
    throw std::invalid_argument("parameter " + name + " init size mismatch");
  Param p;
  p.shape = std::move(shape);
  p.value = std::move(init);
  p.m = Array::Zero(p.value.size());
  p.v = Array::Zero(p.value.size());
  order_.push_back(name);
  params_.emplace(name, std::move(p));
}

void ParameterStore::add_uniform(const std::string& name, Shape shape, Rng& rng) {
  int fan_in = shape.size() == 2 ? shape[0] : shape.empty() ? 1 : shape[0];
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  int n = shape_size(shape);
  Array init(n);
  for (int i = 0; i < n; ++i) init[i] = rng.uniform(-bound, bound);
  add(name, std::move(shape), std::move(init));
}

void ParameterStore::add_zeros(const std::string& name, Shape shape) {
  int n = shape_size(shape);
  add(name, std::move(shape), Array::Zero(n));
}

bool ParameterStore::has(const std::string& name) const { return params_.count(name) > 0; }

Param& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

const Param& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

std::map<std::string, Tensor> ParameterStore::leaves(Tape& tape) const {
  std::map<std::string, Tensor> out;
  for (const auto& name : order_) {
    const Param& p = params_.at(name);
    out.emplace(name, tape.leaf(p.shape, p.value));
  }
  return out;
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& name : order_) {
    mix(name.data(), name.size());
    const Param& p = params_.at(name);
    mix(p.value.data(), sizeof(double) * p.value.size());
  }
  return h;
}

GradMap collect_grads(const Tape& tape, const std::map<std::string, Tensor>& leaves) {
  GradMap out;
  for (const auto& [name, leaf] : leaves) {
    if (tape.has_grad(leaf))
      out[name] = tape.grad(leaf);
    else
      out[name] = Array::Zero(leaf.size());
  }
  return out;
}

double clip_global_norm(GradMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) sq += g.square().sum();
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto& [_, g] : grads) g *= s;
  }
  return norm;
}

void adam_step(ParameterStore& store, const GradMap& grads, const AdamConfig& cfg) {
  for (const auto& name : store.names()) {
    auto it = grads.find(name);
    if (it == grads.end())
      throw std::invalid_argument("adam_step: missing gradient for parameter " + name);
    Param& p = store.at(name);
    Array g = it->second;
    if (g.size() != p.value.size())
      throw std::invalid_argument("adam_step: gradient size mismatch for " + name);
    if (cfg.weight_decay > 0.0) g += cfg.weight_decay * p.value;
    p.step += 1;
    p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * g;
    p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * g.square();
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
    p.value -= cfg.lr * (p.m / bc1) / ((p.v / bc2).sqrt() + cfg.eps);
  }
}

void add_linear_params(ParameterStore& s, const std::string& prefix, int in, int out,
                       Rng& rng) {
  s.add_uniform(prefix + ".W", {in, out}, rng);
  s.add_zeros(prefix + ".b", {out});
}

void add_gru_params(ParameterStore& s, const std::string& prefix, int in, int hidden,
                    Rng& rng) {
  for (const char* gate : {"z", "r", "h"}) {
    s.add_uniform(prefix + ".W" + gate, {in, hidden}, rng);
    s.add_uniform(prefix + ".U" + gate, {hidden, hidden}, rng);
    s.add_zeros(prefix + ".b" + std::string(gate), {hidden});
  }
}

LinearP linear_ref(const std::map<std::string, Tensor>& p, const std::string& prefix) {
  return {p.at(prefix + ".W"), p.at(prefix + ".b")};
}

GruP gru_ref(const std::map<std::string, Tensor>& p, const std::string& prefix) {
  return {p.at(prefix + ".Wz"), p.at(prefix + ".Uz"), p.at(prefix + ".bz"),
          p.at(prefix + ".Wr"), p.at(prefix + ".Ur"), p.at(prefix + ".br"),
          p.at(prefix + ".Wh"), p.at(prefix + ".Uh"), p.at(prefix + ".bh")};
}

Tensor linear(const Tensor& x, const LinearP& p) { return add(matmul(x, p.W), p.b); }

Tensor gru_step(const Tensor& x, const Tensor& h, const GruP& p) {
  Tensor z = sigmoid(add(add(matmul(x, p.Wz), matmul(h, p.Uz)), p.bz));
  Tensor r = sigmoid(add(add(matmul(x, p.Wr), matmul(h, p.Ur)), p.br));
  Tensor hcand = tanh_op(add(add(matmul(x, p.Wh), matmul(mul(r, h), p.Uh)), p.bh));
  Tensor keep = mul(sub(Tensor::scalar_value(1.0), z), h);
  return add(keep, mul(z, hcand));
}

Tensor bigru_encode(const std::vector<Tensor>& sequence, const GruP& fwd, const GruP& bwd,
                    const LinearP& out) {
  if (sequence.empty()) throw std::invalid_argument("bigru_encode: empty sequence");
  int rows = sequence.front().rows();
  int hidden = fwd.Uz.shape[0];
  Tensor hf = Tensor::zeros({rows, hidden});
  for (const auto& x : sequence) hf = gru_step(x, hf, fwd);
  Tensor hb = Tensor::zeros({rows, hidden});
  for (auto it = sequence.rbegin(); it != sequence.rend(); ++it)
    hb = gru_step(*it, hb, bwd);
  return linear(concat(hf, hb, 1), out);
}

}  // namespace stylecal
