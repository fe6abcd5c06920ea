#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "stylecal/eval.hpp"
#include "stylecal/training.hpp"

namespace stylecal {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A labeling function as it appears in the run config. Thresholds may be
/// empty before `fit-labels` has run.
struct LfSpec {
  std::string name;
  ScoreKind kind = ScoreKind::Speed;
  int classes = 3;
  double noise_std = 0.0;
  Vec2 destination{0.5, 1.0};
  std::vector<double> thresholds;

  LabelingFunction to_labeling_function() const;
};

/// Everything a run needs, with every field defaulted. Unknown keys anywhere
/// in the file are rejected with the offending section and key named.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string model = "ctvae";
  int workers = 1;
  int n_train = 20000;
  int n_test = 2500;
  EnvConfig env;
  DemonstratorConfig demo;
  std::vector<LfSpec> lfs;
  ModelSizes sizes;
  TrainConfig train;
  EvalConfig eval;
  std::vector<double> noise_multipliers{1.0, 2.0, 3.0, 4.0};

  std::vector<LabelingFunction> labeling_functions() const;
  void validate() const;  // throws ConfigError
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Full round-trippable JSON with every default filled in.
std::string resolved_config_json(const RunConfig& cfg);

}  // namespace stylecal
