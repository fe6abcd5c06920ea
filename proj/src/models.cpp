#include "stylecal/models.hpp"

#include <cmath>
#include <stdexcept>

namespace stylecal {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "tvae") return ModelKind::Tvae;
  if (s == "ctvae") return ModelKind::Ctvae;
  if (s == "ctvae-info") return ModelKind::CtvaeInfo;
  if (s == "ctvae-mi") return ModelKind::CtvaeMi;
  if (s == "ctvae-style") return ModelKind::CtvaeStyle;
  if (s == "rnn") return ModelKind::Rnn;
  if (s == "rnn-style") return ModelKind::RnnStyle;
  throw std::invalid_argument("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Tvae: return "tvae";
    case ModelKind::Ctvae: return "ctvae";
    case ModelKind::CtvaeInfo: return "ctvae-info";
    case ModelKind::CtvaeMi: return "ctvae-mi";
    case ModelKind::CtvaeStyle: return "ctvae-style";
    case ModelKind::Rnn: return "rnn";
    case ModelKind::RnnStyle: return "rnn-style";
  }
  throw std::logic_error("bad ModelKind");
}

bool has_latent(ModelKind k) { return k != ModelKind::Rnn && k != ModelKind::RnnStyle; }

bool is_conditional(ModelKind k) { return k != ModelKind::Tvae; }

bool encoder_conditioned(ModelKind k) {
  return k == ModelKind::Ctvae || k == ModelKind::CtvaeMi || k == ModelKind::CtvaeStyle;
}

bool uses_style_term(ModelKind k) {
  return k == ModelKind::CtvaeStyle || k == ModelKind::RnnStyle;
}

bool uses_dynamics(ModelKind k) {
  return k == ModelKind::CtvaeMi || uses_style_term(k);
}

bool uses_label_approx(ModelKind k) { return uses_style_term(k); }

Tensor detach(const Tensor& t) { return Tensor(t.shape, t.data); }

Batch make_batch(const std::vector<Trajectory>& data,
                 const std::vector<StyleLabel>* labels, const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("make_batch: empty index list");
  int b = static_cast<int>(idx.size());
  int T = data[idx[0]].horizon();
  Batch batch;
  batch.rows = b;
  for (int t = 0; t <= T; ++t) {
    Array d(b * 2);
    for (int i = 0; i < b; ++i) {
      const Vec2& s = data[idx[i]].states[t];
      d[i * 2] = s.x();
      d[i * 2 + 1] = s.y();
    }
    batch.states.push_back(Tensor({b, 2}, std::move(d)));
  }
  for (int t = 0; t < T; ++t) {
    Array d(b * 2);
    for (int i = 0; i < b; ++i) {
      const Vec2& a = data[idx[i]].actions[t];
      d[i * 2] = a.x();
      d[i * 2 + 1] = a.y();
    }
    batch.actions.push_back(Tensor({b, 2}, std::move(d)));
  }
  if (labels) {
    batch.ys.reserve(b);
    for (int i : idx) batch.ys.push_back((*labels)[i]);
  }
  return batch;
}

Tensor joint_one_hot(const std::vector<StyleLabel>& ys,
                     const std::vector<int>& class_sizes) {
  int b = static_cast<int>(ys.size());
  int width = 0;
  for (int k : class_sizes) width += k;
  Array d = Array::Zero(b * width);
  for (int i = 0; i < b; ++i) {
    if (ys[i].size() != class_sizes.size())
      throw std::invalid_argument("label tuple length mismatch in joint_one_hot");
    int off = 0;
    for (std::size_t j = 0; j < class_sizes.size(); ++j) {
      int c = ys[i][j];
      if (c < 0 || c >= class_sizes[j])
        throw std::out_of_range("label class out of range in joint_one_hot");
      d[i * width + off + c] = 1.0;
      off += class_sizes[j];
    }
  }
  return Tensor({b, width}, std::move(d));
}

int PolicyModel::label_dim() const {
  int w = 0;
  for (int k : class_sizes) w += k;
  return w;
}

PolicyModel PolicyModel::create(ModelKind kind, const ModelSizes& sizes,
                                const std::vector<int>& class_sizes, std::uint64_t seed) {
  PolicyModel m;
  m.kind = kind;
  m.sizes = sizes;
  m.class_sizes = class_sizes;
  if (is_conditional(kind) && class_sizes.empty())
    throw std::invalid_argument("conditional model kind requires labeling functions");
  Rng rng = derive_rng(seed, "policy-init");
  int ld = m.label_dim();
  if (has_latent(kind)) {
    int enc_in = sizes.state_dim + sizes.action_dim + (encoder_conditioned(kind) ? ld : 0);
    add_gru_params(m.params, "enc.fwd", enc_in, sizes.enc_hidden, rng);
    add_gru_params(m.params, "enc.bwd", enc_in, sizes.enc_hidden, rng);
    add_linear_params(m.params, "enc.out", 2 * sizes.enc_hidden, 2 * sizes.latent_dim, rng);
  }
  int dec_in = sizes.state_dim + (has_latent(kind) ? sizes.latent_dim : 0) +
               (is_conditional(kind) ? ld : 0);
  add_gru_params(m.params, "dec.gru", dec_in, sizes.dec_hidden, rng);
  add_linear_params(m.params, "dec.mlp", sizes.dec_hidden, sizes.dec_mlp, rng);
  add_linear_params(m.params, "dec.mean", sizes.dec_mlp, sizes.action_dim, rng);
  if (sizes.state_dependent_log_std) {
    add_linear_params(m.params, "dec.logstd", sizes.dec_mlp, sizes.action_dim, rng);
  } else {
    m.params.add_zeros("dec.logstd_raw", {sizes.action_dim});
  }
  if (kind == ModelKind::CtvaeInfo) {
    Rng arng = derive_rng(seed, "aux-init");
    add_linear_params(m.aux_params, "aux.l1", sizes.latent_dim, sizes.aux_hidden, arng);
    for (std::size_t i = 0; i < class_sizes.size(); ++i)
      add_linear_params(m.aux_params, "aux.head" + std::to_string(i), sizes.aux_hidden,
                        class_sizes[i], arng);
  }
  return m;
}

std::map<std::string, Tensor> value_map(const ParameterStore& store) {
  std::map<std::string, Tensor> out;
  for (const auto& name : store.names()) {
    const Param& p = store.at(name);
    out.emplace(name, Tensor(p.shape, p.value));
  }
  return out;
}

DiagGaussian encode(const PolicyModel& m, const std::map<std::string, Tensor>& p,
                    const Batch& batch) {
  if (!has_latent(m.kind)) throw std::logic_error("encode on a latent-free model kind");
  Tensor y1h;
  bool with_y = encoder_conditioned(m.kind);
  if (with_y) y1h = joint_one_hot(batch.ys, m.class_sizes);
  std::vector<Tensor> seq;
  seq.reserve(batch.horizon());
  for (int t = 0; t < batch.horizon(); ++t) {
    Tensor x = concat(batch.states[t], batch.actions[t], 1);
    if (with_y) x = concat(x, y1h, 1);
    seq.push_back(std::move(x));
  }
  Tensor out = bigru_encode(seq, gru_ref(p, "enc.fwd"), gru_ref(p, "enc.bwd"),
                            linear_ref(p, "enc.out"));
  int zd = m.sizes.latent_dim;
  DiagGaussian g;
  g.mean = slice(out, 1, 0, zd);
  g.log_std = bounded_log_std(slice(out, 1, zd, zd));
  return g;
}

DiagGaussian decode_step(const PolicyModel& m, const std::map<std::string, Tensor>& p,
                         const Tensor& s, const Tensor& z, const Tensor& y_onehot,
                         Tensor& h) {
  Tensor x = s;
  if (has_latent(m.kind)) x = concat(x, z, 1);
  if (is_conditional(m.kind)) x = concat(x, y_onehot, 1);
  h = gru_step(x, h, gru_ref(p, "dec.gru"));
  Tensor feat = tanh_op(linear(h, linear_ref(p, "dec.mlp")));
  DiagGaussian g;
  g.mean = linear(feat, linear_ref(p, "dec.mean"));
  if (m.sizes.state_dependent_log_std) {
    g.log_std = bounded_log_std(linear(feat, linear_ref(p, "dec.logstd")));
  } else {
    Tensor raw = bounded_log_std(p.at("dec.logstd_raw"));
    g.log_std = add(Tensor::zeros({s.shape[0], m.sizes.action_dim}), raw);
  }
  return g;
}

LossParts imitation_loss(const PolicyModel& m, const std::map<std::string, Tensor>& p,
                         const Batch& batch, Rng& rng) {
  int b = batch.rows;
  int T = batch.horizon();
  double inv_b = 1.0 / b;
  LossParts parts;
  Tensor z, y1h;
  if (is_conditional(m.kind)) y1h = joint_one_hot(batch.ys, m.class_sizes);
  if (has_latent(m.kind)) {
    DiagGaussian post = encode(m, p, batch);
    int zd = m.sizes.latent_dim;
    Array noise(b * zd);
    for (int i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
    z = sample_reparameterized(post, Tensor({b, zd}, std::move(noise)));
    parts.kl = scale(kl_to_standard_normal(post), inv_b);
  } else {
    parts.kl = Tensor::scalar_value(0.0);
  }
  Tensor h = Tensor::zeros({b, m.sizes.dec_hidden});
  Tensor logp;
  for (int t = 0; t < T; ++t) {
    DiagGaussian dist = decode_step(m, p, batch.states[t], z, y1h, h);
    Tensor lp = gaussian_log_density(dist, batch.actions[t]);
    logp = (t == 0) ? lp : add(logp, lp);
  }
  parts.nld = scale(logp, -inv_b);
  parts.total = add(parts.nld, parts.kl);
  return parts;
}

Tensor aux_logits_joint(const PolicyModel& m, const std::map<std::string, Tensor>& aux_p,
                        const Tensor& z, int lf_index) {
  Tensor feat = tanh_op(linear(z, linear_ref(aux_p, "aux.l1")));
  return linear(feat, linear_ref(aux_p, "aux.head" + std::to_string(lf_index)));
}

InfoLosses info_losses(const PolicyModel& m, const std::map<std::string, Tensor>& p,
                       const std::map<std::string, Tensor>& aux_p, const Batch& batch,
                       Rng& rng) {
  if (m.kind != ModelKind::CtvaeInfo)
    throw std::logic_error("info_losses requires kind ctvae-info");
  int b = batch.rows;
  DiagGaussian post = encode(m, p, batch);
  int zd = m.sizes.latent_dim;
  Array noise(b * zd);
  for (int i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
  Tensor z = sample_reparameterized(post, Tensor({b, zd}, std::move(noise)));

  // reconstruction with the shared z sample
  Tensor y1h = joint_one_hot(batch.ys, m.class_sizes);
  Tensor h = Tensor::zeros({b, m.sizes.dec_hidden});
  Tensor logp;
  for (int t = 0; t < batch.horizon(); ++t) {
    DiagGaussian dist = decode_step(m, p, batch.states[t], z, y1h, h);
    Tensor lp = gaussian_log_density(dist, batch.actions[t]);
    logp = (t == 0) ? lp : add(logp, lp);
  }
  InfoLosses out;
  out.imitation.nld = scale(logp, -1.0 / b);
  out.imitation.kl = scale(kl_to_standard_normal(post), 1.0 / b);
  out.imitation.total = add(out.imitation.nld, out.imitation.kl);

  // adversarial term: encoder maximizes the adversary's loss. The policy side
  // treats the adversary as fixed, so its parameters enter detached there.
  std::map<std::string, Tensor> aux_frozen;
  for (const auto& [name, leaf] : aux_p) aux_frozen.emplace(name, detach(leaf));
  Tensor adv;
  Tensor z_detached = detach(z);
  Tensor aux;
  std::vector<int> yi(b);
  for (std::size_t i = 0; i < m.class_sizes.size(); ++i) {
    for (int r = 0; r < b; ++r) yi[r] = batch.ys[r][i];
    Tensor ce_live =
        cross_entropy(aux_logits_joint(m, aux_frozen, z, static_cast<int>(i)), yi);
    Tensor ce_det =
        cross_entropy(aux_logits_joint(m, aux_p, z_detached, static_cast<int>(i)), yi);
    adv = (i == 0) ? ce_live : add(adv, ce_live);
    aux = (i == 0) ? ce_det : add(aux, ce_det);
  }
  out.policy_side = sub(out.imitation.total, adv);
  out.aux_side = aux;
  return out;
}

LabelApproximator LabelApproximator::create(const std::vector<int>& class_sizes, int hidden,
                                            int state_dim, int action_dim,
                                            std::uint64_t seed) {
  if (class_sizes.empty())
    throw std::invalid_argument("label approximator needs at least one labeling function");
  LabelApproximator c;
  c.class_sizes = class_sizes;
  c.state_dim = state_dim;
  c.action_dim = action_dim;
  c.hidden = hidden;
  Rng rng = derive_rng(seed, "label-approx-init");
  int in = state_dim + action_dim;
  for (std::size_t i = 0; i < class_sizes.size(); ++i) {
    std::string prefix = "lf" + std::to_string(i);
    add_gru_params(c.params, prefix + ".fwd", in, hidden, rng);
    add_gru_params(c.params, prefix + ".bwd", in, hidden, rng);
    add_linear_params(c.params, prefix + ".out", 2 * hidden, class_sizes[i], rng);
  }
  return c;
}

std::vector<Tensor> label_logits(const LabelApproximator& c,
                                 const std::map<std::string, Tensor>& p,
                                 const std::vector<Tensor>& states,
                                 const std::vector<Tensor>& actions) {
  if (states.size() != actions.size() + 1)
    throw std::invalid_argument("label_logits: states must be one longer than actions");
  int b = states.front().shape[0];
  std::vector<Tensor> seq;
  seq.reserve(states.size());
  for (std::size_t t = 0; t < actions.size(); ++t)
    seq.push_back(concat(states[t], actions[t], 1));
  seq.push_back(concat(states.back(), Tensor::zeros({b, c.action_dim}), 1));
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < c.class_sizes.size(); ++i) {
    std::string prefix = "lf" + std::to_string(i);
    out.push_back(bigru_encode(seq, gru_ref(p, prefix + ".fwd"), gru_ref(p, prefix + ".bwd"),
                               linear_ref(p, prefix + ".out")));
  }
  return out;
}

Tensor label_approx_loss(const LabelApproximator& c, const std::map<std::string, Tensor>& p,
                         const std::vector<Tensor>& states,
                         const std::vector<Tensor>& actions,
                         const std::vector<StyleLabel>& ys) {
  auto logits = label_logits(c, p, states, actions);
  int b = static_cast<int>(ys.size());
  std::vector<int> yi(b);
  Tensor loss;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    for (int r = 0; r < b; ++r) yi[r] = ys[r][i];
    Tensor ce = cross_entropy(logits[i], yi);
    loss = (i == 0) ? ce : add(loss, ce);
  }
  return loss;
}

DynamicsModel DynamicsModel::create(const std::vector<int>& hidden, bool stochastic,
                                    int state_dim, int action_dim, std::uint64_t seed) {
  DynamicsModel m;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  m.hidden = hidden;
  m.stochastic = stochastic;
  Rng rng = derive_rng(seed, "dynamics-init");
  int in = state_dim + action_dim;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    add_linear_params(m.params, "l" + std::to_string(i), in, hidden[i], rng);
    in = hidden[i];
  }
  add_linear_params(m.params, "mean", in, state_dim, rng);
  if (stochastic) add_linear_params(m.params, "logstd", in, state_dim, rng);
  return m;
}

namespace {
Tensor dynamics_trunk(const DynamicsModel& m, const std::map<std::string, Tensor>& p,
                      const Tensor& s, const Tensor& a) {
  Tensor x = concat(s, a, 1);
  for (std::size_t i = 0; i < m.hidden.size(); ++i)
    x = tanh_op(linear(x, linear_ref(p, "l" + std::to_string(i))));
  return x;
}
}  // namespace

Tensor dynamics_delta(const DynamicsModel& m, const std::map<std::string, Tensor>& p,
                      const Tensor& s, const Tensor& a, const Tensor* noise) {
  Tensor feat = dynamics_trunk(m, p, s, a);
  Tensor mu = linear(feat, linear_ref(p, "mean"));
  if (!m.stochastic || noise == nullptr) return mu;
  Tensor ls = bounded_log_std(linear(feat, linear_ref(p, "logstd")));
  return sample_reparameterized({mu, ls}, *noise);
}

Tensor dynamics_loss(const DynamicsModel& m, const std::map<std::string, Tensor>& p,
                     const Batch& batch) {
  double inv_b = 1.0 / batch.rows;
  Tensor loss;
  for (int t = 0; t < batch.horizon(); ++t) {
    Tensor ds = sub(batch.states[t + 1], batch.states[t]);
    Tensor feat = dynamics_trunk(m, p, batch.states[t], batch.actions[t]);
    Tensor mu = linear(feat, linear_ref(p, "mean"));
    Tensor term;
    if (m.stochastic) {
      Tensor ls = bounded_log_std(linear(feat, linear_ref(p, "logstd")));
      term = negate(gaussian_log_density({mu, ls}, ds));
    } else {
      term = sum(square(sub(mu, ds)));
    }
    loss = (t == 0) ? term : add(loss, term);
  }
  return scale(loss, inv_b);
}

double dynamics_test_mse(const DynamicsModel& m, const std::vector<Trajectory>& data) {
  auto p = value_map(m.params);
  double sq = 0.0;
  long count = 0;
  const int chunk = 256;
  std::vector<int> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i)
      idx.push_back(static_cast<int>(i));
    Batch b = make_batch(data, nullptr, idx);
    for (int t = 0; t < b.horizon(); ++t) {
      Tensor mu = dynamics_delta(m, p, b.states[t], b.actions[t]);
      Array diff = mu.data - (b.states[t + 1].data - b.states[t].data);
      sq += diff.square().sum();
      count += diff.size();
    }
  }
  return sq / static_cast<double>(count);
}

RolloutTensors rollout_model(const PolicyModel& m, const std::map<std::string, Tensor>& pp,
                             const DynamicsModel& dyn, const std::map<std::string, Tensor>& dp,
                             const std::vector<StyleLabel>& ys, const Tensor& z,
                             const Tensor& s1, int T, Rng& rng) {
  int b = s1.shape[0];
  Tensor y1h;
  if (is_conditional(m.kind)) y1h = joint_one_hot(ys, m.class_sizes);
  Tensor h = Tensor::zeros({b, m.sizes.dec_hidden});
  RolloutTensors out;
  out.states.push_back(s1);
  Tensor s = s1;
  for (int t = 0; t < T; ++t) {
    DiagGaussian dist = decode_step(m, pp, s, z, y1h, h);
    Array noise(b * m.sizes.action_dim);
    for (int i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
    Tensor a = sample_reparameterized(dist, Tensor({b, m.sizes.action_dim}, std::move(noise)));
    Tensor delta;
    if (dyn.stochastic) {
      Array dn(b * dyn.state_dim);
      for (int i = 0; i < dn.size(); ++i) dn[i] = rng.normal();
      Tensor dnoise({b, dyn.state_dim}, std::move(dn));
      delta = dynamics_delta(dyn, dp, s, a, &dnoise);
    } else {
      delta = dynamics_delta(dyn, dp, s, a);
    }
    s = add(s, delta);
    if (!s.data.allFinite())
      throw DivergenceError("model rollout diverged to non-finite state at step " +
                               std::to_string(t));
    out.actions.push_back(std::move(a));
    out.states.push_back(s);
  }
  return out;
}

std::vector<Trajectory> rollout_env(const PolicyModel& m,
                                    const std::vector<StyleLabel>& ys, const Array& z_rows,
                                    const std::vector<Vec2>& s1, const EnvConfig& env,
                                    Rng& rng) {
  int b = static_cast<int>(s1.size());
  auto p = value_map(m.params);
  Tensor y1h, z;
  if (is_conditional(m.kind)) y1h = joint_one_hot(ys, m.class_sizes);
  if (has_latent(m.kind)) {
    if (z_rows.size() != b * m.sizes.latent_dim)
      throw std::invalid_argument("rollout_env: z size mismatch");
    z = Tensor({b, m.sizes.latent_dim}, z_rows);
  }
  Tensor h = Tensor::zeros({b, m.sizes.dec_hidden});
  Array sdata(b * 2);
  for (int i = 0; i < b; ++i) {
    sdata[i * 2] = s1[i].x();
    sdata[i * 2 + 1] = s1[i].y();
  }
  std::vector<Trajectory> out(b);
  for (int i = 0; i < b; ++i) out[i].states.push_back(s1[i]);
  Tensor s({b, 2}, sdata);
  for (int t = 0; t < env.T; ++t) {
    DiagGaussian dist = decode_step(m, p, s, z, y1h, h);
    Array a = dist.mean.data;
    for (int i = 0; i < a.size(); ++i)
      a[i] += std::exp(dist.log_std.data[i]) * rng.normal();
    Array next = s.data + a;
    if (env.stochastic && env.noise_std > 0.0)
      for (int i = 0; i < next.size(); ++i) next[i] += env.noise_std * rng.normal();
    for (int i = 0; i < b; ++i) {
      out[i].actions.emplace_back(a[i * 2], a[i * 2 + 1]);
      out[i].states.emplace_back(next[i * 2], next[i * 2 + 1]);
    }
    s = Tensor({b, 2}, next);
  }
  return out;
}

Array sample_prior_z(const PolicyModel& m, int rows, Rng& rng) {
  if (!has_latent(m.kind)) return Array();
  Array z(rows * m.sizes.latent_dim);
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return z;
}

}  // namespace stylecal
