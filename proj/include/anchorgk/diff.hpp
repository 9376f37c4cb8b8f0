#pragma once

// Small eager reverse-mode differentiation over dense double matrices.
//
// A Tape owns every node created during one forward pass. Values are computed
// immediately; when any input requires a gradient the op also records a
// backward rule. Tape::backward walks the tape in reverse creation order,
// which is a valid reverse topological order because inputs always precede
// their consumers.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace anchorgk::diff {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  /// Gradient accumulated by the last backward call(s); zero-sized if the
  /// node never received one.
  const Matrix& grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input.
  Var param(Matrix value) { return leaf(std::move(value), true); }
  /// Input that never receives a gradient.
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var leaf(Matrix value, bool requires_grad);

  /// Records an op result. `backprop` is dropped when no input needs a gradient.
  Var record(Matrix value, std::vector<std::size_t> inputs, Backprop backprop);

  /// Reverse accumulation from a 1x1 loss. Intermediate gradients are reset
  /// on every call; leaf gradients accumulate until zero_grad().
  void backward(const Var& loss);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Adds g into the gradient of node id (allocating it) if it requires one.
  void accumulate(std::size_t id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(std::size_t id, const Expr& g) {
    if (!nodes_[id].requires_grad) return;
    auto& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::size_t> inputs;
    Backprop backprop;
  };
  std::deque<Node> nodes_;  // stable addresses for value() references
};

// Forward ops. Shape mismatches throw ShapeError naming both shapes.
// Elementwise binary ops broadcast a 1 x c row or an r x 1 column operand.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softmax_rows(const Var& a);
/// Row-major reshape.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var concat_cols(std::span<const Var> parts);
Var col(const Var& a, Eigen::Index c);
Var sum(const Var& a);
Var mean(const Var& a);
Var square(const Var& a);
Var sqrt_scalar(const Var& a);

/// Forward value `replacement`, identity Jacobian back to `a`.
Var straight_through(const Var& a, Matrix replacement);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one per parameter
  double worst = 0.0;
  bool passed = false;
};

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Compares analytic gradients with central differences. The relative error
/// of an entry is |a - n| / max(|a|, |n|, 1e-5).
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Matrix>& params, double step, double tol);

}  // namespace anchorgk::diff
