#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stylecal/env.hpp"
#include "stylecal/labeling.hpp"

using namespace stylecal;

namespace {

Trajectory line(Vec2 start, Vec2 per_step, int T) {
  Trajectory traj;
  traj.states.push_back(start);
  for (int t = 0; t < T; ++t) {
    traj.actions.push_back(per_step);
    traj.states.push_back(traj.states.back() + per_step);
  }
  return traj;
}

}  // namespace

TEST_CASE("speed score of a constant-velocity line is the step length") {
  Trajectory traj = line({0.2, 0.2}, {0.03, 0.04}, 10);
  LabelingFunction lf;
  lf.kind = ScoreKind::Speed;
  CHECK(score(lf, traj) == doctest::Approx(0.05));
}

TEST_CASE("displacement and destination scores match hand geometry") {
  Trajectory traj = line({0.1, 0.1}, {0.02, 0.0}, 20);  // ends at (0.5, 0.1)
  LabelingFunction disp;
  disp.kind = ScoreKind::Displacement;
  CHECK(score(disp, traj) == doctest::Approx(0.4));

  LabelingFunction dest;
  dest.kind = ScoreKind::Destination;
  dest.destination = Vec2(0.5, 1.0);
  CHECK(score(dest, traj) == doctest::Approx(0.9));
}

TEST_CASE("direction score is the displacement angle") {
  Trajectory traj = line({0.3, 0.3}, {0.0, 0.02}, 10);  // straight up
  LabelingFunction lf;
  lf.kind = ScoreKind::Direction;
  CHECK(score(lf, traj) == doctest::Approx(M_PI / 2));
}

TEST_CASE("curvature score is zero on a line and positive on a right angle") {
  Trajectory straight = line({0.2, 0.2}, {0.02, 0.01}, 12);
  LabelingFunction lf;
  lf.kind = ScoreKind::Curvature;
  CHECK(score(lf, straight) == doctest::Approx(0.0));

  Trajectory corner;
  corner.states = {{0.2, 0.2}, {0.4, 0.2}, {0.4, 0.4}};
  corner.actions = {{0.2, 0.0}, {0.0, 0.2}};
  // one pi/2 heading change over path length 0.4
  CHECK(score(lf, corner) == doctest::Approx(M_PI / 2 / 0.4));
}

TEST_CASE("fitted thresholds split scores into equal classes with ties going up") {
  std::vector<double> scores;
  for (int i = 0; i < 9; ++i) scores.push_back(static_cast<double>(i));
  auto th = fit_thresholds(scores, 3);
  REQUIRE(th.size() == 2);
  CHECK(th[0] == doctest::Approx(3.0));
  CHECK(th[1] == doctest::Approx(6.0));

  LabelingFunction lf;
  lf.kind = ScoreKind::Displacement;
  lf.thresholds = th;
  auto make = [](double d) { return line({0.0, 0.0}, {d, 0.0}, 1); };
  CHECK(apply(lf, make(2.9)) == 0);
  CHECK(apply(lf, make(3.0)) == 1);  // tie goes to the higher class
  CHECK(apply(lf, make(5.9)) == 1);
  CHECK(apply(lf, make(6.0)) == 2);
  CHECK(apply(lf, make(7.0)) == 2);
}

TEST_CASE("fit_thresholds rejects degenerate score distributions") {
  std::vector<double> flat(100, 1.0);
  CHECK_THROWS_AS(fit_thresholds(flat, 3), std::invalid_argument);
}

TEST_CASE("noise-free labeling is deterministic and idempotent") {
  EnvConfig env;
  DemonstratorConfig demo;
  auto data = generate_demonstrations(500, env, demo, 21, 2);
  LabelingFunction lf;
  lf.kind = ScoreKind::Speed;
  std::vector<double> scores;
  for (const auto& t : data) scores.push_back(score(lf, t));
  lf.thresholds = fit_thresholds(scores, 3);

  auto a = annotate({lf}, data, 1);
  auto b = annotate({lf}, data, 2);  // different seed must not matter at sigma=0
  CHECK(a.labels == b.labels);
  CHECK(disagreement(lf, lf, data) == 0.0);
}

TEST_CASE("disagreement grows with noise and approaches the 3-class limit") {
  EnvConfig env;
  DemonstratorConfig demo;
  auto data = generate_demonstrations(4000, env, demo, 22, 4);
  LabelingFunction truth;
  truth.kind = ScoreKind::Displacement;
  std::vector<double> scores;
  for (const auto& t : data) scores.push_back(score(truth, t));
  truth.thresholds = fit_thresholds(scores, 3);

  double prev = 0.0;
  std::vector<double> sigmas = {0.005, 0.02, 0.08, 0.4, 100.0};
  for (double s : sigmas) {
    LabelingFunction noisy = truth;
    noisy.noise_std = s;
    double d = disagreement(noisy, truth, data, 9);
    CHECK(d >= prev - 0.01);
    prev = d;
  }
  // with overwhelming noise the noisy class is essentially the marginal draw
  LabelingFunction swamped = truth;
  swamped.noise_std = 1e6;
  double d = disagreement(swamped, truth, data, 9);
  CHECK(d > 0.45);
}

TEST_CASE("joint marginal indexing round-trips and sampling matches frequencies") {
  EnvConfig env;
  DemonstratorConfig demo;
  auto data = generate_demonstrations(3000, env, demo, 23, 4);
  std::vector<LabelingFunction> lfs(2);
  lfs[0].kind = ScoreKind::Speed;
  lfs[1].kind = ScoreKind::Direction;
  for (auto& lf : lfs) {
    lf.name = to_string(lf.kind);
    std::vector<double> scores;
    for (const auto& t : data) scores.push_back(score(lf, t));
    lf.thresholds = fit_thresholds(scores, 3);
  }
  auto ann = annotate(lfs, data, 0);
  REQUIRE(ann.num_joint() == 9);
  for (int i = 0; i < 9; ++i) CHECK(ann.joint_index(ann.joint_unindex(i)) == i);

  std::vector<double> freq(9, 0.0);
  Rng rng = derive_rng(4, "test-sample");
  const int n = 200000;
  for (int i = 0; i < n; ++i) freq[ann.joint_index(ann.sample_label(rng))] += 1.0 / n;
  for (int i = 0; i < 9; ++i)
    CHECK(std::abs(freq[i] - ann.joint_marginal[i]) < 0.007);
}
