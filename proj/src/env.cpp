#include "stylecal/env.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

namespace stylecal {

namespace {
constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
  while (a > kPi) a -= 2 * kPi;
  while (a <= -kPi) a += 2 * kPi;
  return a;
}
}  // namespace

Vec2 step(const Vec2& s, const Vec2& a, const EnvConfig& cfg, Rng* rng) {
  Vec2 next = s + a;
  if (cfg.stochastic && cfg.noise_std > 0.0) {
    if (!rng) throw std::invalid_argument("stochastic step requires an rng");
    next.x() += cfg.noise_std * rng->normal();
    next.y() += cfg.noise_std * rng->normal();
  }
  return next;
}

Vec2 sample_initial_state(Rng& rng) {
  return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
}

Trajectory generate_demonstration(const EnvConfig& env, const DemonstratorConfig& demo,
                                  Rng& rng) {
  // latent style tuple for this trajectory
  Vec2 target(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9));
  double speed = std::exp(rng.uniform(std::log(demo.speed_min), std::log(demo.speed_max)));
  double gain = rng.uniform(0.0, demo.curvature_gain_max);
  double phase = rng.uniform(0.0, 2 * kPi);
  double freq = rng.uniform(1.0, 2.5);
  double sector_offset = gain * rng.uniform(-1.0, 1.0);

  Trajectory traj;
  Vec2 s = sample_initial_state(rng);
  traj.states.push_back(s);
  double heading = wrap_angle(std::atan2(target.y() - s.y(), target.x() - s.x()) +
                              sector_offset);
  for (int t = 0; t < env.T; ++t) {
    Vec2 a;
    Vec2 to_target = target - s;
    double dist = to_target.norm();
    double step_speed = speed * (1.0 + 0.1 * rng.normal());
    if (step_speed < 1e-4) step_speed = 1e-4;
    if (dist <= step_speed) {
      a = to_target;  // arrive and hold
    } else {
      double goal_heading = std::atan2(to_target.y(), to_target.x());
      heading = wrap_angle(heading + demo.heading_blend * wrap_angle(goal_heading - heading));
      double bend = gain * std::sin(2 * kPi * freq * t / env.T + phase);
      double th = heading + bend;
      a = step_speed * Vec2(std::cos(th), std::sin(th));
    }
    if (demo.action_noise_std > 0.0) {
      a.x() += demo.action_noise_std * rng.normal();
      a.y() += demo.action_noise_std * rng.normal();
    }
    traj.actions.push_back(a);
    s = step(s, a, env, &rng);
    traj.states.push_back(s);
  }
  return traj;
}

std::vector<Trajectory> generate_demonstrations(int n, const EnvConfig& env,
                                                const DemonstratorConfig& demo,
                                                std::uint64_t seed, int workers) {
  if (n < 1) throw std::invalid_argument("generate_demonstrations: n must be >= 1");
  std::vector<Trajectory> out(n);
  auto work = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      Rng rng = derive_rng(seed, "demo", static_cast<std::uint64_t>(i));
      out[i] = generate_demonstration(env, demo, rng);
    }
  };
  if (workers <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> threads;
    int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      int lo = w * chunk, hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      threads.emplace_back(work, lo, hi);
    }
    for (auto& t : threads) t.join();
  }
  return out;
}

}  // namespace stylecal
