#pragma once

#include <string>
#include <vector>

#include "stylecal/eval.hpp"

namespace stylecal {

/// Court view of rollouts: unit-square bounds, one polyline per trajectory,
/// a diamond at the start, an end dot colored by style consistency, and —
/// for destination labeling functions — the threshold circles separating the
/// style classes.
std::string trajectory_svg(const std::vector<Trajectory>& trajs,
                           const std::vector<bool>& consistent,
                           const LabelingFunction* regions = nullptr);

/// Relative style-consistency change against label disagreement, with the
/// one-to-one reference line through the origin.
std::string noise_svg(const std::vector<NoisePoint>& points);

}  // namespace stylecal
