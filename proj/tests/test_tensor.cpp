#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "mapdistill/grad_check.hpp"
#include "mapdistill/tensor.hpp"

using namespace mapdistill;

namespace {
MatXd random_mat(Rng& rng, Index r, Index c, double lo = -2.0, double hi = 2.0) {
  MatXd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}
}  // namespace

TEST_CASE("matmul identity cases") {
  Tape tape;
  MatXd a(2, 2);
  a << 1, 2, 3, 4;
  MatXd eye = MatXd::Identity(2, 2);
  Tensor out = matmul(tape, tape.constant(a), tape.constant(eye));
  CHECK(out.matrix().isApprox(a, 0.0));
  Tensor out2 = matmul(tape, tape.constant(eye), tape.constant(eye));
  CHECK(out2.matrix().isApprox(eye, 0.0));
}

TEST_CASE("matmul gradient of sum(A*B) w.r.t. A is row-broadcast of B row sums") {
  Rng rng(1);
  MatXd a0 = random_mat(rng, 3, 4);
  MatXd b = random_mat(rng, 4, 5);
  Tape tape;
  Tensor a = tape.leaf(a0, true);
  tape.backward(sum(tape, matmul(tape, a, tape.constant(b))));
  // d sum(AB) / dA = ones(3,5) * B^T; row i of the gradient equals B's row sums.
  MatXd expect = MatXd::Ones(3, 5) * b.transpose();
  Eigen::Map<const MatXd> g(a.grad().data(), 3, 4);
  CHECK((g - expect).cwiseAbs().maxCoeff() < 1e-14);

  ScalarFn f = [&b](Tape& t, const Tensor& x) { return sum(t, matmul(t, x, t.constant(b))); };
  VecXd x0(Eigen::Map<VecXd>(a0.data(), a0.size()));
  CHECK(check_gradient(f, {3, 4}, x0, 1e-5) < 1e-7);
}

TEST_CASE("matmul rejects incompatible shapes") {
  Tape tape;
  Tensor a = tape.constant(MatXd::Zero(2, 3));
  Tensor b = tape.constant(MatXd::Zero(2, 3));
  CHECK_THROWS_AS(matmul(tape, a, b), DimensionError);
}

TEST_CASE("transpose2d examples and involution") {
  Tape tape;
  MatXd a(1, 3);
  a << 1, 2, 3;
  Tensor t = transpose2d(tape, tape.constant(a));
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 1);
  CHECK(t.value()[0] == 1.0);
  CHECK(t.value()[1] == 2.0);
  CHECK(t.value()[2] == 3.0);

  Rng rng(2);
  MatXd r = random_mat(rng, 3, 5);
  Tensor back = transpose2d(tape, transpose2d(tape, tape.constant(r)));
  CHECK(back.matrix().isApprox(r, 0.0));
}

TEST_CASE("transpose2d gradient check on random 2x4 input") {
  Rng rng(3);
  MatXd x0 = random_mat(rng, 2, 4);
  MatXd w = random_mat(rng, 4, 2);
  ScalarFn f = [&w](Tape& t, const Tensor& x) {
    return sum(t, hadamard(t, transpose2d(t, x), t.constant(w)));
  };
  CHECK(check_gradient(f, {2, 4}, VecXd(Eigen::Map<VecXd>(x0.data(), x0.size())), 1e-5) < 1e-7);
}

TEST_CASE("softmax_rows closed-form examples") {
  Tape tape;
  MatXd one_col(3, 1);
  one_col << -5, 0, 7;
  Tensor s1 = softmax_rows(tape, tape.constant(one_col));
  for (Index i = 0; i < 3; ++i) CHECK(s1.value()[i] == 1.0);

  MatXd sym(1, 2);
  sym << 0, 0;
  Tensor s2 = softmax_rows(tape, tape.constant(sym));
  CHECK(s2.value()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s2.value()[1] == doctest::Approx(0.5).epsilon(1e-15));

  MatXd logs(1, 2);
  logs << std::log(1.0), std::log(3.0);
  Tensor s3 = softmax_rows(tape, tape.constant(logs));
  CHECK(s3.value()[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s3.value()[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax_rows rows sum to 1 over random matrices") {
  Rng rng(4);
  for (int it = 0; it < 200; ++it) {
    Tape tape;
    const Index r = 1 + rng.uniform_int(0, 5), c = 1 + rng.uniform_int(0, 7);
    Tensor s = softmax_rows(tape, tape.constant(random_mat(rng, r, c, -30.0, 30.0)));
    for (Index i = 0; i < r; ++i) {
      double row_sum = 0.0;
      for (Index j = 0; j < c; ++j) {
        const double v = s.value()[i * c + j];
        CHECK(v > 0.0);
        CHECK(v < 1.0 + 1e-15);
        row_sum += v;
      }
      CHECK(std::abs(row_sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("softmax_rows rejects non-finite input") {
  Tape tape;
  MatXd bad(1, 2);
  bad << 0.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(softmax_rows(tape, tape.constant(bad)), NumericError);
}

TEST_CASE("backward: sum gives all-ones gradient") {
  Tape tape;
  Rng rng(5);
  Tensor x = tape.leaf(random_mat(rng, 3, 4), true);
  tape.backward(sum(tape, x));
  for (Index i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == 1.0);
}

TEST_CASE("mse convention pin: mean of squares, factor 2 in the gradient") {
  // mse = mean((a-b)^2). For x=[2] against 0: value 4, gradient 4.
  Tape tape;
  MatXd x0(1, 1);
  x0 << 2.0;
  Tensor x = tape.leaf(x0, true);
  Tensor loss = mse(tape, x, tape.constant(MatXd::Zero(1, 1)));
  CHECK(loss.scalar() == 4.0);
  tape.backward(loss);
  CHECK(x.grad()[0] == 4.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  Tensor x = tape.leaf(MatXd::Zero(2, 2), true);
  CHECK_THROWS_AS(tape.backward(x), DimensionError);
}

TEST_CASE("backward is bit-identical across fresh tapes") {
  auto run = [](VecXd& grad_out) {
    Tape tape;
    Rng rng(6);
    Tensor x = tape.leaf(random_mat(rng, 4, 4), true);
    Tensor y = softmax_rows(tape, matmul(tape, x, transpose2d(tape, x)));
    tape.backward(mse(tape, y, tape.constant(MatXd::Constant(4, 4, 0.25))));
    grad_out = x.grad();
  };
  VecXd g1, g2;
  run(g1);
  run(g2);
  REQUIRE(g1.size() == g2.size());
  for (Index i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("check_gradient on sum of squares") {
  ScalarFn f = [](Tape& t, const Tensor& x) { return sum(t, hadamard(t, x, x)); };
  VecXd x0(3);
  x0 << 1, 2, 3;
  CHECK(check_gradient(f, {3, 1}, x0, 1e-5) < 1e-7);
}

TEST_CASE("check_gradient on constant function is zero") {
  ScalarFn f = [](Tape& t, const Tensor&) { return t.scalar_constant(3.5); };
  VecXd x0(4);
  x0 << 1, 2, 3, 4;
  CHECK(check_gradient(f, {4, 1}, x0, 1e-5) == 0.0);
}

TEST_CASE("check_gradient rejects non-positive step") {
  ScalarFn f = [](Tape& t, const Tensor& x) { return sum(t, x); };
  VecXd x0(1);
  x0 << 1;
  CHECK_THROWS_AS(check_gradient(f, {1, 1}, x0, 0.0), ConfigError);
}

TEST_CASE("elementwise ops pass gradient checks") {
  Rng rng(7);
  struct Probe {
    const char* name;
    double lo, hi;
    Tensor (*op)(Tape&, const Tensor&);
  };
  const Probe probes[] = {
      {"tanh", -2.0, 2.0, [](Tape& t, const Tensor& x) { return tanh_op(t, x); }},
      {"sigmoid", -3.0, 3.0, [](Tape& t, const Tensor& x) { return sigmoid(t, x); }},
      {"log", 0.2, 4.0, [](Tape& t, const Tensor& x) { return log_op(t, x); }},
      {"sqrt", 0.2, 4.0, [](Tape& t, const Tensor& x) { return sqrt_op(t, x); }},
      {"abs_shifted", 0.5, 3.0, [](Tape& t, const Tensor& x) { return abs_op(t, x); }},
      {"pow_1.7", 0.2, 3.0, [](Tape& t, const Tensor& x) { return pow_const(t, x, 1.7); }},
  };
  for (const Probe& p : probes) {
    CAPTURE(p.name);
    MatXd x0 = random_mat(rng, 3, 4, p.lo, p.hi);
    MatXd w = random_mat(rng, 3, 4, -1.0, 1.0);
    auto op = p.op;
    ScalarFn f = [&w, op](Tape& t, const Tensor& x) {
      return mean(t, hadamard(t, op(t, x), t.constant(w)));
    };
    CHECK(check_gradient(f, {3, 4}, VecXd(Eigen::Map<VecXd>(x0.data(), x0.size())), 1e-5) < 1e-6);
  }
}

TEST_CASE("log rejects non-positive input") {
  Tape tape;
  MatXd bad(1, 1);
  bad << 0.0;
  CHECK_THROWS_AS(log_op(tape, tape.constant(bad)), NumericError);
}

TEST_CASE("select_rows, slice_cols, reshape, gather gradient checks") {
  Rng rng(8);
  MatXd x0 = random_mat(rng, 4, 5);
  VecXd flat(Eigen::Map<VecXd>(x0.data(), x0.size()));

  ScalarFn sel = [](Tape& t, const Tensor& x) {
    return sum(t, hadamard(t, select_rows(t, x, {2, 0}), select_rows(t, x, {1, 3})));
  };
  CHECK(check_gradient(sel, {4, 5}, flat, 1e-5) < 1e-6);

  ScalarFn sli = [](Tape& t, const Tensor& x) {
    return mean(t, hadamard(t, slice_cols(t, x, 1, 3), slice_cols(t, x, 2, 3)));
  };
  CHECK(check_gradient(sli, {4, 5}, flat, 1e-5) < 1e-6);

  ScalarFn rsh = [](Tape& t, const Tensor& x) {
    Tensor y = reshape(t, x, {2, 10});
    return mean(t, hadamard(t, y, y));
  };
  CHECK(check_gradient(rsh, {4, 5}, flat, 1e-5) < 1e-6);

  // Gather with repeated indices must scatter-add in the backward pass.
  ScalarFn gat = [](Tape& t, const Tensor& x) {
    Tensor y = gather(t, x, {0, 0, 7, 19, 7, 3}, {2, 3});
    return sum(t, hadamard(t, y, y));
  };
  CHECK(check_gradient(gat, {4, 5}, flat, 1e-5) < 1e-6);
}

TEST_CASE("tensor blob round trip") {
  Rng rng(9);
  MatXd m = random_mat(rng, 3, 7);
  std::stringstream ss;
  write_tensor_blob(ss, {3, 7}, VecXd(Eigen::Map<VecXd>(m.data(), m.size())));
  Shape shape;
  VecXd data;
  read_tensor_blob(ss, shape, data);
  REQUIRE(shape == Shape{3, 7});
  REQUIRE(data.size() == m.size());
  for (Index i = 0; i < data.size(); ++i) CHECK(data[i] == m.data()[i]);
}
