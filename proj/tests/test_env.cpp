#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "stylecal/env.hpp"
#include "stylecal/labeling.hpp"

using namespace stylecal;

TEST_CASE("deterministic step adds the action") {
  EnvConfig cfg;
  Vec2 s(0.1, 0.2), a(0.05, -0.1);
  Vec2 next = step(s, a, cfg);
  CHECK(next.x() == doctest::Approx(0.15));
  CHECK(next.y() == doctest::Approx(0.1));
  CHECK((step(s, Vec2::Zero(), cfg) - s).norm() == 0.0);
}

TEST_CASE("stochastic step noise has zero mean") {
  EnvConfig cfg;
  cfg.stochastic = true;
  cfg.noise_std = 0.01;
  Rng rng = derive_rng(0, "test-noise");
  Vec2 s(0.5, 0.5), a(0.01, 0.01);
  const int n = 100000;
  Vec2 acc = Vec2::Zero();
  for (int i = 0; i < n; ++i) acc += step(s, a, cfg, &rng) - s - a;
  double se = cfg.noise_std / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(acc.x() / n) < 3 * se);
  CHECK(std::abs(acc.y() / n) < 3 * se);
}

TEST_CASE("initial states are uniform over the inner court") {
  Rng rng = derive_rng(1, "test-init");
  const int n = 100000;
  Vec2 acc = Vec2::Zero();
  for (int i = 0; i < n; ++i) {
    Vec2 s = sample_initial_state(rng);
    CHECK(s.x() >= 0.1);
    CHECK(s.x() <= 0.9);
    CHECK(s.y() >= 0.1);
    CHECK(s.y() <= 0.9);
    acc += s;
  }
  // sd of U[0.1,0.9] is 0.8/sqrt(12)
  double se = 0.8 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(acc.x() / n - 0.5) < 3 * se);
  CHECK(std::abs(acc.y() / n - 0.5) < 3 * se);

  Rng r1 = derive_rng(42, "test-init");
  Rng r2 = derive_rng(42, "test-init");
  for (int i = 0; i < 10; ++i)
    CHECK(sample_initial_state(r1) == sample_initial_state(r2));
}

TEST_CASE("generated demonstrations obey the deterministic dynamics exactly") {
  EnvConfig env;
  DemonstratorConfig demo;
  auto data = generate_demonstrations(50, env, demo, 7);
  for (const auto& traj : data) {
    REQUIRE(traj.states.size() == static_cast<std::size_t>(env.T + 1));
    REQUIRE(traj.actions.size() == static_cast<std::size_t>(env.T));
    for (int t = 0; t < env.T; ++t) {
      Vec2 expect = traj.states[t] + traj.actions[t];
      CHECK((traj.states[t + 1] - expect).norm() == 0.0);
    }
  }
}

TEST_CASE("regeneration with the same seed is bit identical, parallel or serial") {
  EnvConfig env;
  DemonstratorConfig demo;
  auto a = generate_demonstrations(64, env, demo, 3, 1);
  auto b = generate_demonstrations(64, env, demo, 3, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t t = 0; t < a[i].states.size(); ++t)
      CHECK(a[i].states[t] == b[i].states[t]);
    for (std::size_t t = 0; t < a[i].actions.size(); ++t)
      CHECK(a[i].actions[t] == b[i].actions[t]);
  }
}

TEST_CASE("score marginals are non-degenerate across the corpus") {
  EnvConfig env;
  DemonstratorConfig demo;
  auto data = generate_demonstrations(20000, env, demo, 11, 4);
  for (ScoreKind kind : {ScoreKind::Speed, ScoreKind::Displacement, ScoreKind::Destination,
                         ScoreKind::Direction, ScoreKind::Curvature}) {
    LabelingFunction lf;
    lf.kind = kind;
    lf.name = to_string(kind);
    std::vector<double> scores;
    scores.reserve(data.size());
    for (const auto& traj : data) scores.push_back(score(lf, traj));
    std::sort(scores.begin(), scores.end());
    std::set<double> quantiles;
    for (int q = 1; q < 6; ++q) quantiles.insert(scores[scores.size() * q / 6]);
    INFO("kind: " << to_string(kind));
    CHECK(quantiles.size() >= 3);
  }
}

TEST_CASE("3-class quantile splits are roughly uniform on a fresh sample") {
  EnvConfig env;
  DemonstratorConfig demo;
  auto fit_set = generate_demonstrations(10000, env, demo, 13, 4);
  auto fresh = generate_demonstrations(10000, env, demo, 14, 4);
  for (ScoreKind kind : {ScoreKind::Speed, ScoreKind::Displacement, ScoreKind::Destination,
                         ScoreKind::Direction, ScoreKind::Curvature}) {
    LabelingFunction lf;
    lf.kind = kind;
    lf.name = to_string(kind);
    std::vector<double> scores;
    for (const auto& traj : fit_set) scores.push_back(score(lf, traj));
    lf.thresholds = fit_thresholds(scores, 3);
    std::array<int, 3> counts{0, 0, 0};
    for (const auto& traj : fresh) counts[apply(lf, traj)]++;
    for (int c = 0; c < 3; ++c) {
      INFO("kind " << to_string(kind) << " class " << c);
      CHECK(counts[c] / 10000.0 == doctest::Approx(1.0 / 3).epsilon(0.15));
    }
  }
}

TEST_CASE("zero curvature gain and zero action noise give straight-line scores") {
  EnvConfig env;
  DemonstratorConfig demo;
  demo.curvature_gain_max = 0.0;
  demo.action_noise_std = 0.0;
  auto data = generate_demonstrations(200, env, demo, 5);
  LabelingFunction lf;
  lf.kind = ScoreKind::Curvature;
  lf.name = "curvature";
  for (const auto& traj : data) CHECK(score(lf, traj) < 1e-6);
}
