#pragma once

#include <Eigen/Dense>

#include "mapdistill/common.hpp"

namespace mapdistill {

// Ordered polyline of 2D points in ego-frame meters, one point per row.
using Polyline = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

double polyline_length(const Polyline& p);

// Resamples to exactly n points equally spaced by arc length; endpoints are
// preserved exactly. Throws GeometryError on a degenerate (zero-length) input.
Polyline resample_polyline(const Polyline& p, Eigen::Index n);

}  // namespace mapdistill
