#include "stylecal/training.hpp"

#include <json.hpp>
#include <cmath>
#include <stdexcept>

namespace stylecal {

namespace {

using nlohmann::json;

std::vector<int> draw_batch(Rng& rng, int n, int batch_size) {
  int b = std::min(n, batch_size);
  std::vector<int> idx(b);
  for (int i = 0; i < b; ++i)
    idx[i] = static_cast<int>(rng.uniform() * n);
  return idx;
}

void require_finite(double v, const char* phase, int iter,
                    std::vector<std::string>* metrics) {
  if (std::isfinite(v)) return;
  if (metrics) {
    json line = {{"phase", phase}, {"iter", iter}, {"error", "non-finite loss"}};
    metrics->push_back(line.dump());
  }
  throw DivergenceError(std::string(phase) + " loss went non-finite at iteration " +
                        std::to_string(iter));
}

}  // namespace

bool style_machinery_active(ModelKind kind, double style_weight) {
  return uses_style_term(kind) && style_weight != 0.0;
}

int batches_per_pass(int n, int batch_size) {
  return std::max(1, (n + batch_size - 1) / batch_size);
}

void pretrain_dynamics(DynamicsModel& dyn, const std::vector<Trajectory>& data,
                       const TrainConfig& cfg, std::vector<std::string>* metrics) {
  int n = static_cast<int>(data.size());
  int iters = cfg.n_dynamics >= 0 ? cfg.n_dynamics
                                  : 10 * batches_per_pass(n, cfg.batch_size);
  Rng rng_batch = derive_rng(cfg.seed, "dynamics-batch");
  AdamConfig adam;
  adam.lr = cfg.dynamics_lr;
  adam.weight_decay = cfg.dynamics_weight_decay;
  for (int it = 0; it < iters; ++it) {
    Batch batch = make_batch(data, nullptr, draw_batch(rng_batch, n, cfg.batch_size));
    Tape tape;
    auto leaves = dyn.params.leaves(tape);
    Tensor loss = dynamics_loss(dyn, leaves, batch);
    require_finite(loss.data[0], "dynamics", it, metrics);
    tape.backward(loss);
    GradMap grads = collect_grads(tape, leaves);
    double norm = clip_global_norm(grads, cfg.clip_norm);
    adam_step(dyn.params, grads, adam);
    if (metrics) {
      json line = {{"phase", "dynamics"},
                   {"iter", it},
                   {"loss", loss.data[0]},
                   {"grad_norm", norm}};
      metrics->push_back(line.dump());
    }
  }
}

void pretrain_label_approximator(LabelApproximator& c, const std::vector<Trajectory>& data,
                                 const AnnotatedDataset& ann, const TrainConfig& cfg,
                                 std::vector<std::string>* metrics) {
  int n = static_cast<int>(data.size());
  int iters = cfg.n_label >= 0 ? cfg.n_label
                               : 20 * batches_per_pass(n, cfg.batch_size);
  Rng rng_batch = derive_rng(cfg.seed, "label-batch");
  Rng rng_aug = derive_rng(cfg.seed, "label-augment");
  AdamConfig adam;
  adam.lr = cfg.label_lr;
  for (int it = 0; it < iters; ++it) {
    std::vector<int> idx = draw_batch(rng_batch, n, cfg.batch_size);
    std::vector<Trajectory> rows;
    std::vector<StyleLabel> ys;
    rows.reserve(2 * idx.size());
    ys.reserve(2 * idx.size());
    for (int i : idx) {
      rows.push_back(data[i]);
      ys.push_back(ann.labels[i]);
    }
    if (cfg.label_augment_noise > 0.0) {
      // Rotated, rescaled and noised re-integrated copies, relabeled from
      // scratch. Across these transforms only the true trajectory geometry
      // predicts the class, so the approximator cannot lean on incidental
      // demonstration features that a trained policy would exploit.
      for (int i : idx) {
        Trajectory t = data[i];
        double angle = 6.283185307179586 * rng_aug.uniform();
        double ca = std::cos(angle), sa = std::sin(angle);
        // The scale stays mild: it multiplies the magnitude-based scores
        // directly, and a wide range floods the class boundaries with
        // samples, softening the decision surface on the demonstrations.
        // Off-distribution score magnitudes are covered by the refresh
        // rounds instead.
        double scale_f = rng_aug.uniform(0.9, 1.1);
        double sigma = cfg.label_augment_noise * rng_aug.uniform();
        for (auto& a : t.actions) {
          Vec2 r(ca * a.x() - sa * a.y(), sa * a.x() + ca * a.y());
          a = scale_f * r + sigma * Vec2(rng_aug.normal(), rng_aug.normal());
        }
        for (int s = 0; s < t.horizon(); ++s)
          t.states[s + 1] = t.states[s] + t.actions[s];
        StyleLabel y;
        for (const auto& lf : ann.lfs) y.push_back(apply(lf, t, &rng_aug));
        rows.push_back(std::move(t));
        ys.push_back(std::move(y));
      }
    }
    std::vector<int> all(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) all[i] = static_cast<int>(i);
    Batch batch = make_batch(rows, &ys, all);
    Tape tape;
    auto leaves = c.params.leaves(tape);
    Tensor loss = label_approx_loss(c, leaves, batch.states, batch.actions, batch.ys);
    require_finite(loss.data[0], "label", it, metrics);
    tape.backward(loss);
    GradMap grads = collect_grads(tape, leaves);
    double norm = clip_global_norm(grads, cfg.clip_norm);
    adam_step(c.params, grads, adam);
    if (metrics) {
      json line = {{"phase", "label"},
                   {"iter", it},
                   {"loss", loss.data[0]},
                   {"grad_norm", norm}};
      metrics->push_back(line.dump());
    }
  }
}

namespace {

// One label-approximator refresh: roll the current policy out in the true
// environment, relabel the rollouts with the labeling functions, and take
// n_label_refresh steps on minibatches mixing demonstrations with the new
// rollouts. The approximator thus tracks the policy's distribution while all
// of its updates stay inside label-phase steps.
void refresh_label_approximator(LabelApproximator& c, const PolicyModel& policy,
                                const std::vector<Trajectory>& data,
                                const AnnotatedDataset& ann, const EnvConfig& env,
                                const TrainConfig& cfg, int round,
                                std::vector<std::string>* metrics) {
  int n = static_cast<int>(data.size());
  int pool_n = cfg.n_refresh_rollouts;
  Rng rng_collect = derive_rng(cfg.seed, "refresh-collect", round);
  std::vector<StyleLabel> ys(pool_n);
  for (auto& y : ys) y = ann.sample_label(rng_collect);
  std::vector<Vec2> s1(pool_n);
  for (auto& s : s1) s = sample_initial_state(rng_collect);
  Array z = sample_prior_z(policy, pool_n, rng_collect);
  std::vector<Trajectory> pool = rollout_env(policy, ys, z, s1, env, rng_collect);

  Rng rng_annotate = derive_rng(cfg.seed, "refresh-annotate", round);
  std::vector<StyleLabel> pool_ys(pool_n);
  for (int i = 0; i < pool_n; ++i)
    for (const auto& lf : ann.lfs) pool_ys[i].push_back(apply(lf, pool[i], &rng_annotate));

  Rng rng_batch = derive_rng(cfg.seed, "refresh-batch", round);
  AdamConfig adam;
  adam.lr = cfg.label_lr;
  int half = std::max(1, cfg.batch_size / 2);
  for (int it = 0; it < cfg.n_label_refresh; ++it) {
    std::vector<Trajectory> rows;
    std::vector<StyleLabel> bys;
    rows.reserve(2 * half);
    bys.reserve(2 * half);
    for (int k = 0; k < half; ++k) {
      int i = static_cast<int>(rng_batch.uniform() * n);
      rows.push_back(data[i]);
      bys.push_back(ann.labels[i]);
    }
    for (int k = 0; k < half; ++k) {
      int i = static_cast<int>(rng_batch.uniform() * pool_n);
      rows.push_back(pool[i]);
      bys.push_back(pool_ys[i]);
    }
    std::vector<int> all(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) all[i] = static_cast<int>(i);
    Batch batch = make_batch(rows, &bys, all);
    Tape tape;
    auto leaves = c.params.leaves(tape);
    Tensor loss = label_approx_loss(c, leaves, batch.states, batch.actions, batch.ys);
    require_finite(loss.data[0], "label-refresh", it, metrics);
    tape.backward(loss);
    GradMap grads = collect_grads(tape, leaves);
    double norm = clip_global_norm(grads, cfg.clip_norm);
    adam_step(c.params, grads, adam);
    if (metrics) {
      json line = {{"phase", "label-refresh"},
                   {"round", round},
                   {"iter", it},
                   {"loss", loss.data[0]},
                   {"grad_norm", norm}};
      metrics->push_back(line.dump());
    }
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<Trajectory>& data,
                  const AnnotatedDataset& ann) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  int n = static_cast<int>(data.size());
  int T = data.front().horizon();
  bool conditional = is_conditional(cfg.kind);
  if (conditional && ann.labels.size() != data.size())
    throw std::invalid_argument("train: labels do not cover the dataset");

  TrainResult out;
  out.policy = PolicyModel::create(cfg.kind, cfg.sizes,
                                   conditional ? ann.class_sizes : std::vector<int>{},
                                   cfg.seed);

  bool style_active = style_machinery_active(cfg.kind, cfg.style_weight);
  bool mi_active = cfg.kind == ModelKind::CtvaeMi && cfg.style_weight != 0.0;
  bool need_dynamics = style_active || mi_active;

  if (need_dynamics) {
    out.dynamics = DynamicsModel::create(cfg.sizes.dyn_hidden, cfg.stochastic_env,
                                         cfg.sizes.state_dim, cfg.sizes.action_dim,
                                         cfg.seed);
    out.has_dynamics = true;
    pretrain_dynamics(out.dynamics, data, cfg, &out.metrics);
  }
  if (style_active) {
    out.label_approx =
        LabelApproximator::create(ann.class_sizes, cfg.sizes.label_hidden,
                                  cfg.sizes.state_dim, cfg.sizes.action_dim, cfg.seed);
    out.has_label_approx = true;
    pretrain_label_approximator(out.label_approx, data, ann, cfg, &out.metrics);
  }

  // r in the mutual-information bound has the same shape as a label
  // approximator but is trained on the policy's own rollouts.
  LabelApproximator mi_r;
  AdamConfig mi_adam;
  if (mi_active) {
    mi_r = LabelApproximator::create(ann.class_sizes, cfg.sizes.label_hidden,
                                     cfg.sizes.state_dim, cfg.sizes.action_dim,
                                     cfg.seed + 1);
    mi_adam.lr = cfg.label_lr;
  }

  int iters = cfg.n_policy >= 0 ? cfg.n_policy
                                : 30 * batches_per_pass(n, cfg.batch_size);
  Rng rng_batch = derive_rng(cfg.seed, "policy-batch");
  Rng rng_imit = derive_rng(cfg.seed, "policy-noise");
  Rng rng_collect = derive_rng(cfg.seed, "collect");
  Rng rng_env = derive_rng(cfg.seed, "env-fine-tune");
  AdamConfig adam;
  adam.lr = cfg.lr;
  AdamConfig aux_adam;
  aux_adam.lr = cfg.lr;
  AdamConfig dyn_adam;
  dyn_adam.lr = cfg.dynamics_lr;
  dyn_adam.weight_decay = cfg.dynamics_weight_decay;

  EnvConfig env;
  env.T = T;
  env.stochastic = cfg.stochastic_env;
  env.noise_std = cfg.env_noise_std;

  bool refresh_active = style_active && cfg.n_rounds > 1 && cfg.n_label_refresh > 0 &&
                        cfg.n_refresh_rollouts > 0;

  for (int it = 0; it < iters; ++it) {
    if (refresh_active && it > 0) {
      for (int r = 1; r < cfg.n_rounds; ++r) {
        if (it == static_cast<int>(static_cast<std::int64_t>(iters) * r / cfg.n_rounds)) {
          refresh_label_approximator(out.label_approx, out.policy, data, ann, env, cfg, r,
                                     &out.metrics);
          break;
        }
      }
    }
    std::vector<int> idx = draw_batch(rng_batch, n, cfg.batch_size);
    Batch batch = make_batch(data, conditional ? &ann.labels : nullptr, idx);

    if (cfg.kind == ModelKind::CtvaeInfo) {
      {
        Tape tape;
        auto leaves = out.policy.params.leaves(tape);
        auto aux_leaves = out.policy.aux_params.leaves(tape);
        InfoLosses losses = info_losses(out.policy, leaves, aux_leaves, batch, rng_imit);
        require_finite(losses.aux_side.data[0], "policy", it, &out.metrics);
        tape.backward(losses.aux_side);
        GradMap grads = collect_grads(tape, aux_leaves);
        clip_global_norm(grads, cfg.clip_norm);
        adam_step(out.policy.aux_params, grads, aux_adam);
      }
      Tape tape;
      auto leaves = out.policy.params.leaves(tape);
      auto aux_leaves = out.policy.aux_params.leaves(tape);
      InfoLosses losses = info_losses(out.policy, leaves, aux_leaves, batch, rng_imit);
      require_finite(losses.policy_side.data[0], "policy", it, &out.metrics);
      tape.backward(losses.policy_side);
      GradMap grads = collect_grads(tape, leaves);
      double norm = clip_global_norm(grads, cfg.clip_norm);
      adam_step(out.policy.params, grads, adam);
      json line = {{"phase", "policy"},
                   {"iter", it},
                   {"loss", losses.policy_side.data[0]},
                   {"nld", losses.imitation.nld.data[0]},
                   {"kl", losses.imitation.kl.data[0]},
                   {"aux_ce", losses.aux_side.data[0]},
                   {"grad_norm", norm}};
      out.metrics.push_back(line.dump());
      continue;
    }

    Tape tape;
    auto leaves = out.policy.params.leaves(tape);
    LossParts parts = imitation_loss(out.policy, leaves, batch, rng_imit);
    Tensor total = parts.total;
    double style_ce = 0.0;

    if (style_active || mi_active) {
      int rows = cfg.n_collect;
      std::vector<StyleLabel> ys(rows);
      for (auto& y : ys) y = ann.sample_label(rng_collect);
      Array s1_rows(rows * cfg.sizes.state_dim);
      for (int r = 0; r < rows; ++r) {
        const Vec2& s0 = data[static_cast<int>(rng_collect.uniform() * n)].states[0];
        s1_rows[r * 2] = s0.x();
        s1_rows[r * 2 + 1] = s0.y();
      }
      Tensor s1({rows, cfg.sizes.state_dim}, std::move(s1_rows));
      Tensor z;
      if (has_latent(cfg.kind)) {
        z = Tensor({rows, cfg.sizes.latent_dim},
                   sample_prior_z(out.policy, rows, rng_collect));
      }
      auto dp = value_map(out.dynamics.params);
      RolloutTensors roll = rollout_model(out.policy, leaves, out.dynamics, dp, ys, z,
                                          s1, T, rng_collect);
      Tensor ce;
      if (mi_active) {
        // one r update on the detached rollout, then score with r frozen
        std::vector<Tensor> det_s, det_a;
        for (const auto& t : roll.states) det_s.push_back(detach(t));
        for (const auto& t : roll.actions) det_a.push_back(detach(t));
        Tape r_tape;
        auto r_leaves = mi_r.params.leaves(r_tape);
        Tensor r_loss = label_approx_loss(mi_r, r_leaves, det_s, det_a, ys);
        require_finite(r_loss.data[0], "policy", it, &out.metrics);
        r_tape.backward(r_loss);
        GradMap r_grads = collect_grads(r_tape, r_leaves);
        clip_global_norm(r_grads, cfg.clip_norm);
        adam_step(mi_r.params, r_grads, mi_adam);
        ce = label_approx_loss(mi_r, value_map(mi_r.params), roll.states, roll.actions,
                               ys);
      } else {
        ce = label_approx_loss(out.label_approx, value_map(out.label_approx.params),
                               roll.states, roll.actions, ys);
      }
      style_ce = ce.data[0];
      total = add(total, scale(ce, cfg.style_weight));
    }

    require_finite(total.data[0], "policy", it, &out.metrics);
    tape.backward(total);
    GradMap grads = collect_grads(tape, leaves);
    double norm = clip_global_norm(grads, cfg.clip_norm);
    adam_step(out.policy.params, grads, adam);

    if (out.has_dynamics && cfg.n_env > 0) {
      std::vector<StyleLabel> ys(cfg.n_env);
      for (auto& y : ys)
        y = conditional ? ann.sample_label(rng_env) : StyleLabel{};
      std::vector<Vec2> s1(cfg.n_env);
      for (auto& s : s1) s = sample_initial_state(rng_env);
      Array z = sample_prior_z(out.policy, cfg.n_env, rng_env);
      auto rolls = rollout_env(out.policy, ys, z, s1, env, rng_env);
      std::vector<int> all(cfg.n_env);
      for (int i = 0; i < cfg.n_env; ++i) all[i] = i;
      Batch env_batch = make_batch(rolls, nullptr, all);
      Tape dtape;
      auto dleaves = out.dynamics.params.leaves(dtape);
      Tensor dloss = dynamics_loss(out.dynamics, dleaves, env_batch);
      require_finite(dloss.data[0], "policy", it, &out.metrics);
      dtape.backward(dloss);
      GradMap dgrads = collect_grads(dtape, dleaves);
      clip_global_norm(dgrads, cfg.clip_norm);
      adam_step(out.dynamics.params, dgrads, dyn_adam);
    }

    json line = {{"phase", "policy"},
                 {"iter", it},
                 {"loss", total.data[0]},
                 {"nld", parts.nld.data[0]},
                 {"kl", parts.kl.data[0]},
                 {"grad_norm", norm}};
    if (style_active || mi_active) line["style_ce"] = style_ce;
    out.metrics.push_back(line.dump());
  }
  return out;
}

}  // namespace stylecal
