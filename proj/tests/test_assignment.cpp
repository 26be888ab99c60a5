#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "mapdistill/assignment.hpp"

using namespace mapdistill;

namespace {

// Factorial enumeration oracle: minimum assignment cost over all n! column
// permutations.
double brute_force_min_cost(const MatXd& cost) {
  const Index n = cost.rows();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Index i = 0; i < n; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("identity-optimal matrix") {
  MatXd cost(3, 3);
  cost << 0, 5, 5, 5, 0, 5, 5, 5, 0;
  std::vector<Index> a = solve_assignment(cost);
  CHECK(a == std::vector<Index>{0, 1, 2});
  CHECK(assignment_cost(cost, a) == 0.0);
}

TEST_CASE("2x2 crossed costs force the swap") {
  MatXd cost(2, 2);
  cost << 10, 1, 1, 10;
  std::vector<Index> a = solve_assignment(cost);
  CHECK(a == std::vector<Index>{1, 0});
  CHECK(assignment_cost(cost, a) == 2.0);
}

TEST_CASE("result is a permutation") {
  Rng rng(21);
  for (int it = 0; it < 50; ++it) {
    const Index n = 1 + rng.uniform_int(0, 7);
    MatXd cost(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) cost(i, j) = rng.uniform(-10.0, 10.0);
    std::vector<Index> a = solve_assignment(cost);
    REQUIRE(static_cast<Index>(a.size()) == n);
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (Index col : a) {
      REQUIRE(col >= 0);
      REQUIRE(col < n);
      CHECK(!used[static_cast<std::size_t>(col)]);
      used[static_cast<std::size_t>(col)] = true;
    }
  }
}

TEST_CASE("cost equals factorial brute force for n <= 6") {
  Rng rng(22);
  for (int it = 0; it < 300; ++it) {
    const Index n = 1 + rng.uniform_int(0, 5);
    MatXd cost(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) cost(i, j) = rng.uniform(-5.0, 5.0);
    std::vector<Index> a = solve_assignment(cost);
    CHECK(assignment_cost(cost, a) == brute_force_min_cost(cost));
  }
}

TEST_CASE("cost shifted by a row constant keeps the same optimal permutation cost structure") {
  // Adding a constant to one row changes every assignment's total equally,
  // so the optimal permutation's cost shifts by exactly that constant.
  Rng rng(23);
  MatXd cost(5, 5);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) cost(i, j) = rng.uniform(0.0, 9.0);
  const double base = assignment_cost(cost, solve_assignment(cost));
  MatXd shifted = cost;
  shifted.row(2).array() += 4.25;
  const double after = assignment_cost(shifted, solve_assignment(shifted));
  CHECK(after == doctest::Approx(base + 4.25).epsilon(1e-12));
}

TEST_CASE("non-square matrix is rejected") {
  MatXd cost(2, 3);
  cost.setZero();
  CHECK_THROWS_AS(solve_assignment(cost), DimensionError);
}
