#include "anchorgk/diff.hpp"

#include <algorithm>
#include <cmath>

#include "anchorgk/error.hpp"

namespace anchorgk::diff {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<std::size_t> inputs, Backprop backprop) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = false;
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) { accumulate_expr(id, g); }

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.resize(0, 0);
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw ArgumentError("backward: loss belongs to another tape");
  const auto& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ArgumentError("backward needs a scalar loss, got " + shape_string(lv.rows(), lv.cols()));
  }
  for (auto& n : nodes_) {
    if (!n.is_leaf) n.grad.resize(0, 0);
  }
  if (!nodes_[loss.id()].requires_grad) return;
  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.is_leaf || !n.backprop || n.grad.size() == 0) continue;
    n.backprop(*this, i);
  }
}

namespace {

Tape* same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw ArgumentError("operands live on different tapes");
  return a.tape();
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.rows(), a.cols()) + " and " +
                   shape_string(b.rows(), b.cols()));
}

bool broadcastable(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  return (m.rows() == rows || m.rows() == 1) && (m.cols() == cols || m.cols() == 1);
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a full-shape gradient back down to the shape of a broadcast operand.
Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

enum class Binary { Add, Sub, Mul };

Var binary(const Var& a, const Var& b, Binary op, const char* name) {
  Tape* t = same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Eigen::Index rows = std::max(av.rows(), bv.rows());
  const Eigen::Index cols = std::max(av.cols(), bv.cols());
  if (!broadcastable(av, rows, cols) || !broadcastable(bv, rows, cols)) shape_fail(name, av, bv);
  Matrix ae = expand(av, rows, cols), be = expand(bv, rows, cols);
  Matrix out;
  switch (op) {
    case Binary::Add: out = ae + be; break;
    case Binary::Sub: out = ae - be; break;
    case Binary::Mul: out = ae.cwiseProduct(be); break;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t->record(std::move(out), {ia, ib}, [ia, ib, op](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& av = tp.value(ia);
    const Matrix& bv = tp.value(ib);
    const Eigen::Index rows = g.rows(), cols = g.cols();
    switch (op) {
      case Binary::Add:
        tp.accumulate(ia, reduce_to(g, av.rows(), av.cols()));
        tp.accumulate(ib, reduce_to(g, bv.rows(), bv.cols()));
        break;
      case Binary::Sub:
        tp.accumulate(ia, reduce_to(g, av.rows(), av.cols()));
        tp.accumulate(ib, reduce_to(-g, bv.rows(), bv.cols()));
        break;
      case Binary::Mul:
        if (tp.requires_grad(ia)) {
          tp.accumulate(ia, reduce_to(g.cwiseProduct(expand(bv, rows, cols)), av.rows(), av.cols()));
        }
        if (tp.requires_grad(ib)) {
          tp.accumulate(ib, reduce_to(g.cwiseProduct(expand(av, rows, cols)), bv.rows(), bv.cols()));
        }
        break;
    }
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape* t = same_tape(a, b);
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t->record(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate_expr(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate_expr(ib, tp.value(ia).transpose() * g);
  });
}

Var add(const Var& a, const Var& b) { return binary(a, b, Binary::Add, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, Binary::Sub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, Binary::Mul, "mul"); }

Var scale(const Var& a, double s) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value() * s, {ia}, [ia, s](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, tp.grad(self) * s);
  });
}

Var add_scalar(const Var& a, double s) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value().array() + s, {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
  });
}

Var relu(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value().cwiseMax(0.0), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix mask = (tp.value(ia).array() > 0.0).cast<double>().matrix();
    tp.accumulate_expr(ia, tp.grad(self).cwiseProduct(mask));
  });
}

Var sigmoid(const Var& a) {
  const std::size_t ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& s = tp.value(self);
    tp.accumulate_expr(ia, tp.grad(self).cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var softmax_rows(const Var& a) {
  const std::size_t ia = a.id();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& s = tp.value(self);
    const Matrix& g = tp.grad(self);
    // d x_j = s_j (g_j - sum_k g_k s_k)
    const Eigen::VectorXd dots = g.cwiseProduct(s).rowwise().sum();
    Matrix gin = s.cwiseProduct((g.colwise() - dots));
    tp.accumulate(ia, gin);
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.rows(), a.cols()) + " as " + shape_string(rows, cols));
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor src = a.value();
  Matrix out = Eigen::Map<RowMajor>(src.data(), rows, cols);
  const std::size_t ia = a.id();
  const Eigen::Index in_rows = a.rows(), in_cols = a.cols();
  return a.tape()->record(std::move(out), {ia}, [ia, in_rows, in_cols](Tape& tp, std::size_t self) {
    RowMajor g = tp.grad(self);
    tp.accumulate(ia, Matrix(Eigen::Map<RowMajor>(g.data(), in_rows, in_cols)));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols needs at least one input");
  Tape* t = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    if (p.tape() != t) throw ArgumentError("concat_cols: operands live on different tapes");
    if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return t->record(std::move(out), ids, [ids, widths](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      tp.accumulate_expr(ids[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var col(const Var& a, Eigen::Index c) {
  if (c < 0 || c >= a.cols()) throw ShapeError("col: index out of range for " + shape_string(a.rows(), a.cols()));
  const std::size_t ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return a.tape()->record(Matrix(a.value().col(c)), {ia}, [ia, c, rows, cols](Tape& tp, std::size_t self) {
    Matrix g = Matrix::Zero(rows, cols);
    g.col(c) = tp.grad(self);
    tp.accumulate(ia, g);
  });
}

Var sum(const Var& a) {
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& v = tp.value(ia);
    tp.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), tp.grad(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var square(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value().array().square().matrix(), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, 2.0 * tp.grad(self).cwiseProduct(tp.value(ia)));
  });
}

Var sqrt_scalar(const Var& a) {
  if (a.value().size() != 1) throw ShapeError("sqrt_scalar expects 1x1, got " + shape_string(a.rows(), a.cols()));
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = std::sqrt(a.scalar());
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const double r = tp.value(self)(0, 0);
    Matrix g(1, 1);
    g(0, 0) = r > 0.0 ? tp.grad(self)(0, 0) / (2.0 * r) : 0.0;
    tp.accumulate(ia, g);
  });
}

Var straight_through(const Var& a, Matrix replacement) {
  if (replacement.rows() != a.rows() || replacement.cols() != a.cols()) {
    shape_fail("straight_through", a.value(), replacement);
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(replacement), {ia}, [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
  });
}

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Matrix>& params, double step, double tol) {
  if (!(step > 0.0)) throw ArgumentError("grad_check step must be positive");

  auto evaluate = [&](const std::vector<Matrix>& ps, std::vector<Matrix>* grads) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(ps.size());
    for (const auto& p : ps) vars.push_back(tape.param(p));
    Var loss = f(tape, vars);
    if (grads != nullptr) {
      tape.backward(loss);
      grads->clear();
      for (std::size_t k = 0; k < vars.size(); ++k) {
        const Matrix& g = vars[k].grad();
        grads->push_back(g.size() == 0 ? Matrix::Zero(ps[k].rows(), ps[k].cols()) : g);
      }
    }
    return loss.scalar();
  };

  std::vector<Matrix> analytic;
  evaluate(params, &analytic);

  GradCheckReport report;
  std::vector<Matrix> work = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < params[k].size(); ++i) {
      const double orig = work[k](i);
      work[k](i) = orig + step;
      const double up = evaluate(work, nullptr);
      work[k](i) = orig - step;
      const double down = evaluate(work, nullptr);
      work[k](i) = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k](i);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-5});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    report.max_rel_error.push_back(worst);
    report.worst = std::max(report.worst, worst);
  }
  report.passed = report.worst < tol;
  return report;
}

}  // namespace anchorgk::diff
