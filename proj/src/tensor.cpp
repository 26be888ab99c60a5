#include "mapdistill/tensor.hpp"

#include <cstring>
#include <ostream>
#include <istream>
#include <sstream>

namespace mapdistill {

Index numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

double Tensor::scalar() const {
  if (size() != 1) throw DimensionError("scalar() on tensor of shape " + shape_str(shape()));
  return n_->value[0];
}

Eigen::Map<MatXd> Tensor::matrix() {
  if (rank() != 2) throw DimensionError("matrix() on tensor of rank != 2: " + shape_str(shape()));
  return {n_->value.data(), rows(), cols()};
}

Eigen::Map<const MatXd> Tensor::matrix() const {
  if (rank() != 2) throw DimensionError("matrix() on tensor of rank != 2: " + shape_str(shape()));
  return {n_->value.data(), rows(), cols()};
}

Tensor Tape::leaf(Shape shape, VecXd data, bool requires_grad) {
  if (numel(shape) != data.size())
    throw DimensionError("leaf: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->grad = VecXd::Zero(n->value.size());
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tape::leaf(const MatXd& m, bool requires_grad) {
  VecXd flat(m.size());
  Eigen::Map<MatXd>(flat.data(), m.rows(), m.cols()) = m;
  return leaf({m.rows(), m.cols()}, std::move(flat), requires_grad);
}

Tensor Tape::scalar_constant(double v) {
  VecXd d(1);
  d[0] = v;
  return leaf({1}, std::move(d), false);
}

Tensor Tape::detach(const Tensor& t) {
  auto n = std::make_shared<detail::Node>();
  n->shape = t.shape();
  n->value = t.value();
  n->grad = VecXd::Zero(n->value.size());
  n->requires_grad = false;
  return Tensor(std::move(n));
}

Tensor Tape::make_result(Shape shape, VecXd data) { return leaf(std::move(shape), std::move(data), true); }

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw DimensionError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  Tensor root = loss;  // non-const handle to the shared node
  root.grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

// Ops capture Tensor handles by value (shared ownership of the nodes).

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  MatXd c = a.matrix() * b.matrix();
  Tensor out = tape.make_result({c.rows(), c.cols()}, VecXd(Eigen::Map<VecXd>(c.data(), c.size())));
  Tensor ac = a, bc = b;
  tape.record([ac, bc, out]() mutable {
    Eigen::Map<const MatXd> dc(out.grad().data(), out.rows(), out.cols());
    if (ac.requires_grad())
      Eigen::Map<MatXd>(ac.grad().data(), ac.rows(), ac.cols()).noalias() += dc * bc.matrix().transpose();
    if (bc.requires_grad())
      Eigen::Map<MatXd>(bc.grad().data(), bc.rows(), bc.cols()).noalias() += ac.matrix().transpose() * dc;
  });
  return out;
}

Tensor transpose2d(Tape& tape, const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose2d: rank != 2: " + shape_str(a.shape()));
  MatXd t = a.matrix().transpose();
  Tensor out = tape.make_result({t.rows(), t.cols()}, VecXd(Eigen::Map<VecXd>(t.data(), t.size())));
  Tensor ac = a;
  tape.record([ac, out]() mutable {
    if (!ac.requires_grad()) return;
    Eigen::Map<const MatXd> dc(out.grad().data(), out.rows(), out.cols());
    Eigen::Map<MatXd>(ac.grad().data(), ac.rows(), ac.cols()) += dc.transpose();
  });
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("softmax_rows: rank != 2: " + shape_str(a.shape()));
  if (!a.value().allFinite()) throw NumericError("softmax_rows: non-finite input");
  MatXd y = a.matrix();
  for (Index i = 0; i < y.rows(); ++i) {
    auto row = y.row(i);
    row = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  Tensor out = tape.make_result({y.rows(), y.cols()}, VecXd(Eigen::Map<VecXd>(y.data(), y.size())));
  Tensor ac = a;
  tape.record([ac, out]() mutable {
    if (!ac.requires_grad()) return;
    Eigen::Map<const MatXd> yv(out.value().data(), out.rows(), out.cols());
    Eigen::Map<const MatXd> dy(out.grad().data(), out.rows(), out.cols());
    Eigen::Map<MatXd> dx(ac.grad().data(), ac.rows(), ac.cols());
    for (Index i = 0; i < yv.rows(); ++i) {
      double dot = dy.row(i).cwiseProduct(yv.row(i)).sum();
      dx.row(i).array() += yv.row(i).array() * (dy.row(i).array() - dot);
    }
  });
  return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Elementwise binary op helper: out = f(a, b), with df/da and df/db vectors.
template <typename Fwd, typename Back>
Tensor elementwise2(Tape& tape, const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Back back) {
  check_same_shape(a, b, name);
  VecXd v = fwd(a.value(), b.value());
  Tensor out = tape.make_result(a.shape(), std::move(v));
  Tensor ac = a, bc = b;
  tape.record([ac, bc, out, back]() mutable { back(ac, bc, out); });
  return out;
}

template <typename Fwd, typename Back>
Tensor elementwise1(Tape& tape, const Tensor& a, Fwd fwd, Back back) {
  VecXd v = fwd(a.value());
  Tensor out = tape.make_result(a.shape(), std::move(v));
  Tensor ac = a;
  tape.record([ac, out, back]() mutable {
    if (ac.requires_grad()) back(ac, out);
  });
  return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return elementwise2(
      tape, a, b, "add", [](const VecXd& x, const VecXd& y) { return VecXd(x + y); },
      [](Tensor& ac, Tensor& bc, Tensor& out) {
        if (ac.requires_grad()) ac.grad() += out.grad();
        if (bc.requires_grad()) bc.grad() += out.grad();
      });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return elementwise2(
      tape, a, b, "sub", [](const VecXd& x, const VecXd& y) { return VecXd(x - y); },
      [](Tensor& ac, Tensor& bc, Tensor& out) {
        if (ac.requires_grad()) ac.grad() += out.grad();
        if (bc.requires_grad()) bc.grad() -= out.grad();
      });
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
  return elementwise2(
      tape, a, b, "hadamard",
      [](const VecXd& x, const VecXd& y) { return VecXd(x.cwiseProduct(y)); },
      [](Tensor& ac, Tensor& bc, Tensor& out) {
        if (ac.requires_grad()) ac.grad() += out.grad().cwiseProduct(bc.value());
        if (bc.requires_grad()) bc.grad() += out.grad().cwiseProduct(ac.value());
      });
}

Tensor scale(Tape& tape, const Tensor& a, double s) {
  return elementwise1(
      tape, a, [s](const VecXd& x) { return VecXd(s * x); },
      [s](Tensor& ac, Tensor& out) { ac.grad() += s * out.grad(); });
}

Tensor add_scalar(Tape& tape, const Tensor& a, double s) {
  return elementwise1(
      tape, a, [s](const VecXd& x) { return VecXd(x.array() + s); },
      [](Tensor& ac, Tensor& out) { ac.grad() += out.grad(); });
}

Tensor tanh_op(Tape& tape, const Tensor& a) {
  return elementwise1(
      tape, a, [](const VecXd& x) { return VecXd(x.array().tanh()); },
      [](Tensor& ac, Tensor& out) {
        ac.grad().array() += out.grad().array() * (1.0 - out.value().array().square());
      });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return elementwise1(
      tape, a, [](const VecXd& x) { return VecXd(0.5 * (0.5 * x.array()).tanh() + 0.5); },
      [](Tensor& ac, Tensor& out) {
        ac.grad().array() += out.grad().array() * out.value().array() * (1.0 - out.value().array());
      });
}

Tensor log_op(Tape& tape, const Tensor& a) {
  if ((a.value().array() <= 0.0).any()) throw NumericError("log: non-positive input");
  return elementwise1(
      tape, a, [](const VecXd& x) { return VecXd(x.array().log()); },
      [](Tensor& ac, Tensor& out) {
        ac.grad().array() += out.grad().array() / ac.value().array();
      });
}

Tensor pow_const(Tape& tape, const Tensor& a, double p) {
  return elementwise1(
      tape, a, [p](const VecXd& x) { return VecXd(x.array().pow(p)); },
      [p](Tensor& ac, Tensor& out) {
        ac.grad().array() += out.grad().array() * p * ac.value().array().pow(p - 1.0);
      });
}

Tensor abs_op(Tape& tape, const Tensor& a) {
  return elementwise1(
      tape, a, [](const VecXd& x) { return VecXd(x.array().abs()); },
      [](Tensor& ac, Tensor& out) {
        ac.grad().array() += out.grad().array() * ac.value().array().sign();
      });
}

Tensor sqrt_op(Tape& tape, const Tensor& a) {
  if ((a.value().array() < 0.0).any()) throw NumericError("sqrt: negative input");
  return elementwise1(
      tape, a, [](const VecXd& x) { return VecXd(x.array().sqrt()); },
      [](Tensor& ac, Tensor& out) {
        ac.grad().array() += out.grad().array() / (2.0 * out.value().array());
      });
}

Tensor sum(Tape& tape, const Tensor& a) {
  VecXd v(1);
  v[0] = a.value().sum();
  Tensor out = tape.make_result({1}, std::move(v));
  Tensor ac = a;
  tape.record([ac, out]() mutable {
    if (ac.requires_grad()) ac.grad().array() += out.grad()[0];
  });
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  VecXd v(1);
  v[0] = a.value().sum() * inv;
  Tensor out = tape.make_result({1}, std::move(v));
  Tensor ac = a;
  tape.record([ac, out, inv]() mutable {
    if (ac.requires_grad()) ac.grad().array() += out.grad()[0] * inv;
  });
  return out;
}

Tensor mse(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  Tensor d = sub(tape, a, b);
  return mean(tape, hadamard(tape, d, d));
}

Tensor select_rows(Tape& tape, const Tensor& a, const std::vector<Index>& rows) {
  if (a.rank() != 2) throw DimensionError("select_rows: rank != 2: " + shape_str(a.shape()));
  const Index c = a.cols();
  MatXd m(static_cast<Index>(rows.size()), c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw DimensionError("select_rows: index out of range");
    m.row(static_cast<Index>(i)) = a.matrix().row(rows[i]);
  }
  Tensor out = tape.make_result({m.rows(), m.cols()}, VecXd(Eigen::Map<VecXd>(m.data(), m.size())));
  Tensor ac = a;
  tape.record([ac, out, rows]() mutable {
    if (!ac.requires_grad()) return;
    Eigen::Map<const MatXd> dy(out.grad().data(), out.rows(), out.cols());
    Eigen::Map<MatXd> dx(ac.grad().data(), ac.rows(), ac.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) dx.row(rows[i]) += dy.row(static_cast<Index>(i));
  });
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& a, Index start, Index count) {
  if (a.rank() != 2) throw DimensionError("slice_cols: rank != 2: " + shape_str(a.shape()));
  if (start < 0 || count < 0 || start + count > a.cols())
    throw DimensionError("slice_cols: range out of bounds");
  MatXd m = a.matrix().middleCols(start, count);
  Tensor out = tape.make_result({m.rows(), m.cols()}, VecXd(Eigen::Map<VecXd>(m.data(), m.size())));
  Tensor ac = a;
  tape.record([ac, out, start, count]() mutable {
    if (!ac.requires_grad()) return;
    Eigen::Map<const MatXd> dy(out.grad().data(), out.rows(), out.cols());
    Eigen::Map<MatXd>(ac.grad().data(), ac.rows(), ac.cols()).middleCols(start, count) += dy;
  });
  return out;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw DimensionError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                         shape_str(shape));
  Tensor out = tape.make_result(std::move(shape), a.value());
  Tensor ac = a;
  tape.record([ac, out]() mutable {
    if (ac.requires_grad()) ac.grad() += out.grad();
  });
  return out;
}

Tensor gather(Tape& tape, const Tensor& a, const std::vector<Index>& flat_idx, Shape out_shape) {
  if (static_cast<Index>(flat_idx.size()) != numel(out_shape))
    throw DimensionError("gather: index count does not match output shape");
  VecXd v(static_cast<Index>(flat_idx.size()));
  for (std::size_t i = 0; i < flat_idx.size(); ++i) {
    if (flat_idx[i] < 0 || flat_idx[i] >= a.size()) throw DimensionError("gather: index out of range");
    v[static_cast<Index>(i)] = a.value()[flat_idx[i]];
  }
  Tensor out = tape.make_result(std::move(out_shape), std::move(v));
  Tensor ac = a;
  tape.record([ac, out, flat_idx]() mutable {
    if (!ac.requires_grad()) return;
    for (std::size_t i = 0; i < flat_idx.size(); ++i)
      ac.grad()[flat_idx[i]] += out.grad()[static_cast<Index>(i)];
  });
  return out;
}

// ---- serialization ---------------------------------------------------------

namespace {
void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("tensor blob: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

void write_tensor_blob(std::ostream& os, const Shape& shape, const VecXd& data) {
  put_u64(os, shape.size());
  for (Index d : shape) put_u64(os, static_cast<std::uint64_t>(d));
  static_assert(sizeof(double) == 8);
  for (Index i = 0; i < data.size(); ++i) {
    double v = data[i];
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
  }
}

void read_tensor_blob(std::istream& is, Shape& shape, VecXd& data) {
  const std::uint64_t rank = get_u64(is);
  if (rank > 8) throw ParseError("tensor blob: implausible rank");
  shape.clear();
  for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<Index>(get_u64(is)));
  data.resize(numel(shape));
  for (Index i = 0; i < data.size(); ++i) {
    std::uint64_t bits = get_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    data[i] = v;
  }
}

}  // namespace mapdistill
