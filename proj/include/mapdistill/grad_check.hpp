#pragma once

#include <functional>

#include "mapdistill/tensor.hpp"

namespace mapdistill {

// Scalar-valued function of a single tensor, rebuilt on a fresh tape per call.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

// Compares the analytic gradient of f at x0 against central finite
// differences and returns the max over coordinates of
//   |analytic - numeric| / max(1, |analytic|).
// If max_coords > 0, a deterministic random subset of coordinates is checked
// (rng_seed selects it); otherwise every coordinate is.
double check_gradient(const ScalarFn& f, const Shape& shape, const VecXd& x0, double step,
                      Index max_coords = -1, std::uint64_t rng_seed = 0);

}  // namespace mapdistill
