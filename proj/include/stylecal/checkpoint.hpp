#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stylecal/nn.hpp"

namespace stylecal {

/// Single-file checkpoint: a text header (format version, model kind, layer
/// dimensions, seed, arbitrary key=value metadata), a plain-text index of
/// parameter names and shapes, then the raw 64-bit little-endian values in
/// index order. Round-trips bit-exactly.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> header;
  // store name -> parameters; order preserved
  std::vector<std::pair<std::string, ParameterStore>> stores;

  std::string header_value(const std::string& key) const;
  bool has_store(const std::string& name) const;
  const ParameterStore& store(const std::string& name) const;
  ParameterStore& store(const std::string& name);
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stylecal
