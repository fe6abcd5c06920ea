#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylecal/env.hpp"
#include "stylecal/labeling.hpp"

namespace stylecal {

struct DatasetMeta {
  int T = 24;
  int state_dim = 2;
  int action_dim = 2;
  std::uint64_t seed = 0;
  std::string generator_version = "1";
  int count = 0;
};

/// One trajectory per line: {"states":[...],"actions":[...]} with flattened
/// row-major coordinates. A sidecar <path>.meta.json records T, dims, seed
/// and generator version.
void save_trajectories(const std::string& path, const std::vector<Trajectory>& data,
                       const DatasetMeta& meta);
std::vector<Trajectory> load_trajectories(const std::string& path, DatasetMeta* meta = nullptr);

/// One label tuple per line, space-separated classes.
void save_labels(const std::string& path, const std::vector<StyleLabel>& labels);
std::vector<StyleLabel> load_labels(const std::string& path);

}  // namespace stylecal
