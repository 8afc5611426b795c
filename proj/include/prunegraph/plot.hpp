#pragma once

#include <string>
#include <vector>

#include "prunegraph/prune.hpp"

namespace prunegraph {

/// Static SVG line chart of metric against sparsity level, one line per mode.
std::string curve_svg(const std::vector<CurvePoint>& points, const std::string& metric_label);

}  // namespace prunegraph
