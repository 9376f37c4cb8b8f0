#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "anchorgk/diff.hpp"
#include "anchorgk/error.hpp"

using namespace anchorgk;
using namespace anchorgk::diff;

namespace {

Matrix uniform(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Weighted sum so that every output entry reaches the loss with a distinct weight.
Var probe(Tape& t, const Var& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(v, t.constant(uniform(rng, v.rows(), v.cols()))));
}

void expect_grad_ok(const ScalarFn& f, const std::vector<Matrix>& params, const char* what) {
  GradCheckReport r = grad_check(f, params, 1e-5, 1e-4);
  EXPECT_TRUE(r.passed) << what << " worst relative error " << r.worst;
}

}  // namespace

TEST(DiffOps, MatmulIdentity) {
  Tape t;
  Matrix x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(matmul(t.constant(Matrix::Identity(3, 3)), t.constant(x)).value(), x);
}

TEST(DiffOps, SoftmaxOfZeroRowIsUniform) {
  Tape t;
  Var s = softmax_rows(t.constant(Matrix::Zero(2, 4)));
  for (Eigen::Index i = 0; i < s.value().size(); ++i) EXPECT_DOUBLE_EQ(s.value().data()[i], 0.25);
}

TEST(DiffOps, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(1);
  Tape t;
  Var s = softmax_rows(t.constant(uniform(rng, 20, 7, -30.0, 30.0)));
  for (Eigen::Index i = 0; i < 20; ++i) EXPECT_NEAR(s.value().row(i).sum(), 1.0, 1e-12);
}

TEST(DiffOps, ReluDefinition) {
  Tape t;
  Matrix x(1, 2);
  x << -2.0, 3.0;
  Var r = relu(t.constant(x));
  EXPECT_EQ(r.value()(0, 0), 0.0);
  EXPECT_EQ(r.value()(0, 1), 3.0);
}

TEST(DiffOps, ShapeMismatchNamesBothShapes) {
  Tape t;
  try {
    matmul(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(2, 3)));
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2x3)"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(3, 2))), ShapeError);
}

TEST(DiffOps, ReshapeIsRowMajor) {
  Tape t;
  Matrix x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  Var r = reshape(t.constant(x), 1, 6);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(r.value()(0, i), i + 1);
}

TEST(Backward, SumGivesOnes) {
  Tape t;
  Var w = t.param(Matrix::Constant(2, 3, 0.7));
  t.backward(sum(w));
  EXPECT_EQ(w.grad(), Matrix::Ones(2, 3));
}

TEST(Backward, MeanSquaredDifference) {
  std::mt19937_64 rng(2);
  Matrix wv = uniform(rng, 3, 4), tv = uniform(rng, 3, 4);
  Tape t;
  Var w = t.param(wv);
  t.backward(mean(square(sub(w, t.constant(tv)))));
  EXPECT_LT((w.grad() - 2.0 * (wv - tv) / 12.0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Backward, NonScalarLossThrows) {
  Tape t;
  Var w = t.param(Matrix::Ones(2, 2));
  EXPECT_THROW(t.backward(w), ArgumentError);
}

TEST(Backward, ConstantsGetNoGradient) {
  Tape t;
  Var c = t.constant(Matrix::Ones(2, 2));
  Var w = t.param(Matrix::Ones(2, 2));
  t.backward(sum(mul(c, w)));
  EXPECT_EQ(c.grad().size(), 0);
  EXPECT_FALSE(c.requires_grad());
}

TEST(Backward, AccumulatesUntilZeroed) {
  Tape t;
  Var w = t.param(Matrix::Constant(2, 2, 1.5));
  Var loss = sum(square(w));
  t.backward(loss);
  const Matrix once = w.grad();
  t.backward(loss);
  EXPECT_EQ(w.grad(), 2.0 * once);
  t.zero_grad();
  t.backward(loss);
  EXPECT_EQ(w.grad(), once);
}

TEST(GradCheck, QuadraticIsExact) {
  ScalarFn f = [](Tape& t, const std::vector<Var>& p) { return sum(square(add_scalar(p[0], -0.3))); };
  Matrix x(1, 1);
  x << 1.7;
  EXPECT_LT(grad_check(f, {x}, 1e-5, 1e-8).worst, 1e-8);
}

TEST(GradCheck, SigmoidChain) {
  ScalarFn f = [](Tape& t, const std::vector<Var>& p) { return sum(sigmoid(sigmoid(sigmoid(p[0])))); };
  std::mt19937_64 rng(3);
  expect_grad_ok(f, {uniform(rng, 3, 2)}, "sigmoid chain");
}

TEST(GradCheck, ZeroStepThrows) {
  ScalarFn f = [](Tape&, const std::vector<Var>& p) { return sum(p[0]); };
  EXPECT_THROW(grad_check(f, {Matrix::Ones(1, 1)}, 0.0, 1e-4), ArgumentError);
}

TEST(GradCheck, EveryOpOverSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix a = uniform(rng, 3, 4), b = uniform(rng, 4, 2), c = uniform(rng, 3, 4);
    const Matrix row = uniform(rng, 1, 4);
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, matmul(p[0], p[1]), seed); }, {a, b},
                   "matmul");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, add(p[0], p[1]), seed); }, {a, c}, "add");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, add(p[0], p[1]), seed); }, {a, row},
                   "add broadcast");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, sub(p[0], p[1]), seed); }, {a, c}, "sub");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, mul(p[0], p[1]), seed); }, {a, c}, "mul");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, mul(p[0], p[1]), seed); }, {a, row},
                   "mul broadcast");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, scale(p[0], -1.3), seed); }, {a}, "scale");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, sigmoid(p[0]), seed); }, {a}, "sigmoid");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, softmax_rows(p[0]), seed); }, {a},
                   "softmax");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, reshape(p[0], 2, 6), seed); }, {a},
                   "reshape");
    expect_grad_ok(
        [&](Tape& t, const std::vector<Var>& p) {
          const std::vector<Var> parts{p[0], p[1]};
          return probe(t, concat_cols(parts), seed);
        },
        {a, c}, "concat");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, col(p[0], 2), seed); }, {a}, "col");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, square(p[0]), seed); }, {a}, "square");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return mean(mul(p[0], p[0])); }, {a}, "mean");
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return sqrt_scalar(add_scalar(sum(square(p[0])), 0.1)); },
                   {a}, "sqrt");
    // ReLU is checked away from its kink.
    Matrix away = a;
    for (Eigen::Index i = 0; i < away.size(); ++i) {
      if (std::abs(away.data()[i]) < 1e-3) away.data()[i] = 0.5;
    }
    expect_grad_ok([&](Tape& t, const std::vector<Var>& p) { return probe(t, relu(p[0]), seed); }, {away}, "relu");
  }
}

TEST(GradCheck, ComposedGcnFfnLoss) {
  std::mt19937_64 rng(4);
  const Matrix adj = uniform(rng, 5, 5, 0.0, 1.0);
  const Matrix x = uniform(rng, 5, 6);
  ScalarFn f = [&](Tape& t, const std::vector<Var>& p) {
    Var h = add(matmul(matmul(t.constant(adj), t.constant(x)), p[0]), p[1]);
    Var z = add(matmul(sigmoid(h), p[2]), p[3]);
    return mean(square(z));
  };
  expect_grad_ok(f, {uniform(rng, 6, 4), uniform(rng, 1, 4), uniform(rng, 4, 2), uniform(rng, 1, 2)}, "gcn+ffn");
}

TEST(StraightThrough, ForwardReplacementBackwardIdentity) {
  Tape t;
  Var a = t.param(Matrix::Constant(2, 2, 1.0));
  Var s = straight_through(a, Matrix::Constant(2, 2, 5.0));
  EXPECT_EQ(s.value(), Matrix::Constant(2, 2, 5.0));
  t.backward(sum(scale(s, 3.0)));
  EXPECT_EQ(a.grad(), Matrix::Constant(2, 2, 3.0));
}

TEST(Tape, InputsPrecedeConsumers) {
  Tape t;
  Var a = t.param(Matrix::Ones(2, 2));
  Var b = t.constant(Matrix::Ones(2, 2));
  Var c = sum(sigmoid(matmul(a, b)));
  (void)c;
  for (std::size_t id = 0; id < t.size(); ++id) {
    for (std::size_t in : t.inputs(id)) EXPECT_LT(in, id);
  }
}
