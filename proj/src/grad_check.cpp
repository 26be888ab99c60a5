#include "mapdistill/grad_check.hpp"

#include <algorithm>
#include <numeric>

namespace mapdistill {

double check_gradient(const ScalarFn& f, const Shape& shape, const VecXd& x0, double step,
                      Index max_coords, std::uint64_t rng_seed) {
  if (step <= 0.0) throw ConfigError("check_gradient: step must be positive");
  if (numel(shape) != x0.size())
    throw DimensionError("check_gradient: shape/data mismatch");

  VecXd analytic;
  {
    Tape tape;
    Tensor x = tape.leaf(shape, x0, true);
    Tensor loss = f(tape, x);
    tape.backward(loss);
    analytic = x.grad();
  }

  auto eval = [&](const VecXd& xv) {
    Tape tape;
    Tensor x = tape.leaf(shape, xv, false);
    return f(tape, x).scalar();
  };

  std::vector<Index> coords(static_cast<std::size_t>(x0.size()));
  std::iota(coords.begin(), coords.end(), Index{0});
  if (max_coords > 0 && max_coords < x0.size()) {
    Rng rng(rng_seed);
    // Fisher-Yates prefix shuffle, then keep the prefix.
    for (Index i = 0; i < max_coords; ++i) {
      Index j = i + rng.uniform_int(0, static_cast<int>(x0.size() - 1 - i));
      std::swap(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
    }
    coords.resize(static_cast<std::size_t>(max_coords));
  }

  double worst = 0.0;
  VecXd xv = x0;
  for (Index i : coords) {
    const double orig = xv[i];
    xv[i] = orig + step;
    const double fp = eval(xv);
    xv[i] = orig - step;
    const double fm = eval(xv);
    xv[i] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mapdistill
