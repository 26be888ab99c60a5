#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "mapdistill/common.hpp"

namespace mapdistill {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using VecXd = Eigen::VectorXd;
using MatXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct Node {
  Shape shape;
  VecXd value;  // flat, row-major
  VecXd grad;   // same length as value, zero-initialized
  bool requires_grad = false;
};
}  // namespace detail

class Tape;

// Value-semantic handle to a tensor node. Copies alias the same storage;
// a fresh node is made by Tape::leaf/constant or by an operation.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const { return n_->shape; }
  Index rank() const { return static_cast<Index>(n_->shape.size()); }
  Index size() const { return n_->value.size(); }
  Index rows() const { return n_->shape.at(0); }
  Index cols() const { return n_->shape.at(1); }
  bool requires_grad() const { return n_->requires_grad; }

  VecXd& value() { return n_->value; }
  const VecXd& value() const { return n_->value; }
  VecXd& grad() { return n_->grad; }
  const VecXd& grad() const { return n_->grad; }
  double scalar() const;

  Eigen::Map<MatXd> matrix();
  Eigen::Map<const MatXd> matrix() const;

  bool defined() const { return n_ != nullptr; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}
  std::shared_ptr<detail::Node> n_;
};

// Define-by-run tape: every operation pushes one backward closure; backward()
// replays them in strict reverse order.
class Tape {
 public:
  Tensor leaf(Shape shape, VecXd data, bool requires_grad);
  Tensor leaf(const MatXd& m, bool requires_grad);
  Tensor constant(const MatXd& m) { return leaf(m, false); }
  Tensor scalar_constant(double v);

  // Fresh node carrying the same value, requires_grad=false; gradients never
  // flow through it. Used to freeze teacher-side operands.
  Tensor detach(const Tensor& t);

  void record(std::function<void()> back) { ops_.push_back(std::move(back)); }
  Tensor make_result(Shape shape, VecXd data);

  // Seeds d(loss)/d(loss)=1 and accumulates gradients into every
  // participating node. loss must be a scalar (shape {1} or {1,1}).
  void backward(const Tensor& loss);

  std::size_t num_ops() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
};

// ---- primitive operations ------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose2d(Tape& tape, const Tensor& a);
Tensor softmax_rows(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double s);
Tensor add_scalar(Tape& tape, const Tensor& a, double s);
Tensor tanh_op(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor log_op(Tape& tape, const Tensor& a);
Tensor pow_const(Tape& tape, const Tensor& a, double p);
Tensor abs_op(Tape& tape, const Tensor& a);
Tensor sqrt_op(Tape& tape, const Tensor& a);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
// Mean over all elements of the squared difference.
Tensor mse(Tape& tape, const Tensor& a, const Tensor& b);
Tensor select_rows(Tape& tape, const Tensor& a, const std::vector<Index>& rows);
Tensor slice_cols(Tape& tape, const Tensor& a, Index start, Index count);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
// out.value[i] = a.value[flat_idx[i]]; backward scatter-adds. flat_idx length
// must equal numel(out_shape).
Tensor gather(Tape& tape, const Tensor& a, const std::vector<Index>& flat_idx, Shape out_shape);

// ---- serialization (grad-check repro blobs) -------------------------------

// Flat binary blob: u64 LE rank, u64 LE dims, f64 LE values row-major.
void write_tensor_blob(std::ostream& os, const Shape& shape, const VecXd& data);
void read_tensor_blob(std::istream& is, Shape& shape, VecXd& data);

}  // namespace mapdistill
