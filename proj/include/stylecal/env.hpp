#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "stylecal/rng.hpp"

namespace stylecal {

using Vec2 = Eigen::Vector2d;

/// T state-action pairs plus the final state, on the unit court.
struct Trajectory {
  std::vector<Vec2> states;   // length T+1
  std::vector<Vec2> actions;  // length T
  int horizon() const { return static_cast<int>(actions.size()); }
};

struct EnvConfig {
  int T = 24;
  int state_dim = 2;
  int action_dim = 2;
  bool stochastic = false;
  double noise_std = 0.0;  // transition noise sigma, used when stochastic
};

/// Per-trajectory latent style draws for the scripted demonstrator. Ranges
/// are chosen so every built-in labeling score has a spread-out marginal.
struct DemonstratorConfig {
  double speed_min = 0.008;
  double speed_max = 0.045;
  double curvature_gain_max = 1.2;  // lateral heading oscillation amplitude (rad)
  double action_noise_std = 0.008;
  double heading_blend = 0.25;  // per-step pull of heading toward the target
};

/// s' = s + a, plus N(0, sigma^2 I) transition noise when stochastic.
/// Positions are never clipped; labeling uses the raw geometry.
Vec2 step(const Vec2& s, const Vec2& a, const EnvConfig& cfg, Rng* rng = nullptr);

/// Uniform over [0.1, 0.9]^2.
Vec2 sample_initial_state(Rng& rng);

/// Scripted waypoint controller: steers toward a drawn target destination at
/// a drawn mean speed, with a sinusoidal lateral heading perturbation scaled
/// by a drawn curvature gain. All transitions go through step().
Trajectory generate_demonstration(const EnvConfig& env, const DemonstratorConfig& demo,
                                  Rng& rng);

/// n trajectories with per-index rng streams derived from (seed, index), so
/// parallel and serial generation agree bit for bit.
std::vector<Trajectory> generate_demonstrations(int n, const EnvConfig& env,
                                                const DemonstratorConfig& demo,
                                                std::uint64_t seed, int workers = 1);

}  // namespace stylecal
