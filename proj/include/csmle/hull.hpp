#pragma once

#include <array>
#include <vector>

#include "csmle/common.hpp"

namespace csmle::detail {

// Vertex tuples (d+1 used) of the lower hull facets of the lifted points (x_i, y_i).
// Ties are broken by a fixed symbolic perturbation of the heights.
std::vector<std::array<int, 4>> lower_hull_simplices(const PointSet& X, const std::vector<double>& y);

}  // namespace csmle::detail
