#include "anchorgk/gll.hpp"

#include <cmath>
#include <random>

#include "anchorgk/error.hpp"

namespace anchorgk {

Matrix normalized_adjacency(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("adjacency must be square, got " + shape_string(a.rows(), a.cols()));
  Matrix hat = a + Matrix::Identity(a.rows(), a.cols());
  const Eigen::VectorXd deg = hat.rowwise().sum();
  if ((deg.array() <= 0.0).any()) throw NumericError("adjacency has a node with non-positive degree");
  const Eigen::VectorXd inv_sqrt = deg.array().rsqrt();
  return inv_sqrt.asDiagonal() * hat * inv_sqrt.asDiagonal();
}

Matrix gcn_forward(const Matrix& adjacency, const Matrix& x, const GcnLayer& layer) {
  if (x.rows() != adjacency.rows()) {
    throw ShapeError("gcn: adjacency " + shape_string(adjacency.rows(), adjacency.cols()) + " vs features " +
                     shape_string(x.rows(), x.cols()));
  }
  if (x.cols() != layer.weight.rows()) {
    throw ShapeError("gcn: features " + shape_string(x.rows(), x.cols()) + " vs weight " +
                     shape_string(layer.weight.rows(), layer.weight.cols()));
  }
  Matrix h = normalized_adjacency(adjacency) * x * layer.weight;
  h.rowwise() += layer.bias.row(0);
  return h;
}

Var gcn_forward(diff::Tape& tape, const Matrix& normalized_adj, const Matrix& x, const Var& weight, const Var& bias) {
  Var propagated = tape.constant(normalized_adj * x);
  return diff::add(diff::matmul(propagated, weight), bias);
}

// ---------------------------------------------------------------------------

void SigmaConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("sigma alpha must lie in (0, 1]");
  if (dim < 1) throw ArgumentError("sigma state dimension must be >= 1");
  if (!(static_cast<double>(dim) + xi() > 0.0)) throw ArgumentError("sigma config has j + xi <= 0");
}

SigmaWeights sigma_weights(const SigmaConfig& cfg) {
  cfg.validate();
  const double j = static_cast<double>(cfg.dim);
  const double xi = cfg.xi();
  const auto n = static_cast<Eigen::Index>(2 * cfg.dim + 1);
  SigmaWeights w{Eigen::VectorXd::Constant(n, 1.0 / (2.0 * (j + xi))), Eigen::VectorXd::Constant(n, 1.0 / (2.0 * (j + xi)))};
  w.mean(0) = xi / (j + xi);
  w.cov(0) = xi / (j + xi) + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
  return w;
}

namespace {

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Eigen::LLT<Matrix> robust_cholesky(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  Matrix fixed = symmetrized(m);
  fixed.diagonal().array() += 1e-9;
  llt.compute(fixed);
  if (llt.info() != Eigen::Success) throw NumericError("covariance is not positive definite");
  return llt;
}

}  // namespace

Matrix sigma_points(const Eigen::VectorXd& mean, const Matrix& cov, const SigmaConfig& cfg) {
  const double j = static_cast<double>(cfg.dim);
  const auto n = static_cast<Eigen::Index>(cfg.dim);
  if (mean.size() != n || cov.rows() != n || cov.cols() != n) {
    throw ShapeError("sigma points: mean " + shape_string(mean.size(), 1) + " and covariance " +
                     shape_string(cov.rows(), cov.cols()) + " for dimension " + std::to_string(cfg.dim));
  }
  const Matrix root = robust_cholesky((j + cfg.xi()) * cov).matrixL();
  Matrix pts(n, 2 * n + 1);
  pts.col(0) = mean;
  for (Eigen::Index i = 0; i < n; ++i) {
    pts.col(1 + i) = mean + root.col(i);
    pts.col(1 + n + i) = mean - root.col(i);
  }
  return pts;
}

UkfState ukf_step(const UkfState& state, const Eigen::VectorXd& z, const SigmaConfig& cfg, const Matrix& process_noise,
                  const Matrix& measurement_noise, Matrix* gain) {
  const auto n = static_cast<Eigen::Index>(cfg.dim);
  if (z.size() != n || process_noise.rows() != n || measurement_noise.rows() != n) {
    throw ShapeError("ukf_step: measurement " + shape_string(z.size(), 1) + " for state dimension " +
                     std::to_string(cfg.dim));
  }
  const SigmaWeights w = sigma_weights(cfg);

  // Predict: identity transition.
  const Eigen::VectorXd x_pred = state.mean;
  const Matrix p_pred = symmetrized(state.cov + process_noise);

  // Update: identity measurement on the sigma points.
  const Matrix chi = sigma_points(x_pred, p_pred, cfg);
  const Matrix& gamma = chi;
  const Eigen::VectorXd z_hat = gamma * w.mean;
  Matrix p_zz = measurement_noise;
  Matrix p_xz = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < chi.cols(); ++i) {
    const Eigen::VectorXd dz = gamma.col(i) - z_hat;
    const Eigen::VectorXd dx = chi.col(i) - x_pred;
    p_zz += w.cov(i) * dz * dz.transpose();
    p_xz += w.cov(i) * dx * dz.transpose();
  }
  // K = P_xz P_zz^{-1}, solved as P_zz^T K^T = P_xz^T.
  Eigen::LDLT<Matrix> ldlt(symmetrized(p_zz));
  if (ldlt.info() != Eigen::Success) throw NumericError("innovation covariance is singular");
  const Matrix k = ldlt.solve(p_xz.transpose()).transpose();
  if (!k.allFinite()) throw NumericError("Kalman gain is not finite");

  UkfState out;
  out.mean = x_pred + k * (z - z_hat);
  out.cov = symmetrized(p_pred - k * p_zz * k.transpose());
  if (gain != nullptr) *gain = k;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

Mlp init_mlp(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  const auto i = static_cast<Eigen::Index>(in), h = static_cast<Eigen::Index>(hidden),
             o = static_cast<Eigen::Index>(out);
  return Mlp{uniform_matrix(i, h, static_cast<double>(in), rng), uniform_matrix(1, h, static_cast<double>(in), rng),
             uniform_matrix(h, o, static_cast<double>(hidden), rng),
             uniform_matrix(1, o, static_cast<double>(hidden), rng)};
}

template <typename Self, typename Out>
void collect_named(Self& p, Out& out) {
  auto add_mlp = [&](const std::string& prefix, auto& m) {
    out.emplace_back(prefix + ".w1", &m.w1);
    out.emplace_back(prefix + ".b1", &m.b1);
    out.emplace_back(prefix + ".w2", &m.w2);
    out.emplace_back(prefix + ".b2", &m.b2);
  };
  for (std::size_t i = 0; i < p.gcn.size(); ++i) {
    const auto slot = i / p.dims.features, f = i % p.dims.features;
    const std::string prefix = "gcn." + std::to_string(slot) + "." + std::to_string(f);
    out.emplace_back(prefix + ".weight", &p.gcn[i].weight);
    out.emplace_back(prefix + ".bias", &p.gcn[i].bias);
  }
  add_mlp("cfe.ffn1", p.cfe.ffn1);
  add_mlp("cfe.ffn2", p.cfe.ffn2);
  out.emplace_back("cfe.w_raw", &p.cfe.w_raw);
  for (std::size_t e = 0; e < p.moe.experts.size(); ++e) add_mlp("moe.expert." + std::to_string(e), p.moe.experts[e]);
  out.emplace_back("moe.gate_w", &p.moe.gate_w);
  out.emplace_back("moe.gate_b", &p.moe.gate_b);
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> GllParams::named() {
  std::vector<std::pair<std::string, Matrix*>> out;
  collect_named(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> GllParams::named() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  collect_named(*this, out);
  return out;
}

GllParams init_gll(const GllDims& dims, std::uint64_t seed) {
  if (dims.slots < 1 || dims.features < 1 || dims.timesteps < 1 || dims.gcn_hidden < 1 || dims.experts < 1) {
    throw ArgumentError("graph layer dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  GllParams p;
  p.dims = dims;
  const auto fh = static_cast<Eigen::Index>(dims.gcn_hidden);
  for (std::size_t i = 0; i < dims.slots * dims.features; ++i) {
    p.gcn.push_back({uniform_matrix(1, fh, 1.0, rng), uniform_matrix(1, fh, 1.0, rng)});
  }
  const std::size_t j = dims.features;
  p.cfe.ffn1 = init_mlp(dims.features * dims.gcn_hidden, dims.ffn_hidden, j, rng);
  p.cfe.ffn2 = init_mlp(dims.features, dims.ffn_hidden, j, rng);
  p.cfe.w_raw = Matrix::Zero(static_cast<Eigen::Index>(dims.timesteps), static_cast<Eigen::Index>(j));
  for (std::size_t e = 0; e < dims.experts; ++e) {
    p.moe.experts.push_back(init_mlp(j, dims.expert_hidden, dims.features, rng));
  }
  p.moe.gate_w = uniform_matrix(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(dims.experts),
                                static_cast<double>(j), rng);
  p.moe.gate_b = uniform_matrix(1, static_cast<Eigen::Index>(dims.experts), static_cast<double>(j), rng);
  return p;
}

GllVars bind(diff::Tape& tape, const GllParams& params, bool trainable) {
  GllVars v;
  auto leaf = [&](const Matrix& m) {
    Var x = tape.leaf(m, trainable);
    v.flat.push_back(x);
    return x;
  };
  auto bind_mlp = [&](const Mlp& m) { return MlpVars{leaf(m.w1), leaf(m.b1), leaf(m.w2), leaf(m.b2)}; };
  // Order mirrors collect_named.
  for (const auto& g : params.gcn) {
    Var w = leaf(g.weight);
    Var b = leaf(g.bias);
    v.gcn.emplace_back(w, b);
  }
  v.ffn1 = bind_mlp(params.cfe.ffn1);
  v.ffn2 = bind_mlp(params.cfe.ffn2);
  v.w_raw = leaf(params.cfe.w_raw);
  for (const auto& e : params.moe.experts) v.experts.push_back(bind_mlp(e));
  v.gate_w = leaf(params.moe.gate_w);
  v.gate_b = leaf(params.moe.gate_b);
  return v;
}

Var mlp_forward(const MlpVars& m, const Var& x) {
  Var h = diff::relu(diff::add(diff::matmul(x, m.w1), m.b1));
  return diff::add(diff::matmul(h, m.w2), m.b2);
}

Var cfe_measurements(const Var& hidden, const Var& global, const MlpVars& ffn1, const MlpVars& ffn2, const Var& w_raw) {
  Var h = mlp_forward(ffn1, hidden);
  Var x = mlp_forward(ffn2, global);
  if (w_raw.rows() != h.rows() || w_raw.cols() != h.cols()) {
    throw ShapeError("fusion weights " + shape_string(w_raw.rows(), w_raw.cols()) + " vs FFN output " +
                     shape_string(h.rows(), h.cols()));
  }
  Var w = diff::sigmoid(w_raw);
  // w * h + (1 - w) * x == x + w * (h - x)
  return diff::add(x, diff::mul(w, diff::sub(h, x)));
}

Matrix run_filter(const Matrix& z, const CfeOptions& opts, std::vector<Matrix>* gains) {
  const auto j = static_cast<Eigen::Index>(opts.sigma.dim);
  if (z.cols() != j) throw ShapeError("filter: measurements " + shape_string(z.rows(), z.cols()) + " for dimension " + std::to_string(j));
  UkfState st{Eigen::VectorXd::Zero(j), Matrix::Identity(j, j)};
  Matrix out(z.rows(), j);
  if (gains != nullptr) gains->assign(static_cast<std::size_t>(z.rows()), Matrix());
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    Matrix k;
    st = ukf_step(st, z.row(t).transpose(), opts.sigma, opts.process_noise, opts.measurement_noise, &k);
    out.row(t) = st.mean.transpose();
    if (gains != nullptr) (*gains)[static_cast<std::size_t>(t)] = std::move(k);
  }
  return out;
}

namespace {

// Filtered states with the exact linear Jacobian: x_t = (I - K_t) x_{t-1} + K_t z_t.
Var filter_op(const Var& z, Matrix states, std::vector<Matrix> gains) {
  const std::size_t iz = z.id();
  return z.tape()->record(std::move(states), {iz}, [iz, gains = std::move(gains)](diff::Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Eigen::Index n = g.cols();
    Matrix gz(g.rows(), n);
    Eigen::VectorXd carry = Eigen::VectorXd::Zero(n);
    for (Eigen::Index t = g.rows(); t-- > 0;) {
      const Matrix& k = gains[static_cast<std::size_t>(t)];
      const Eigen::VectorXd gx = g.row(t).transpose() + carry;
      gz.row(t) = (k.transpose() * gx).transpose();
      carry = gx - k.transpose() * gx;
    }
    tp.accumulate(iz, gz);
  });
}

}  // namespace

Var cfe_forward(const Var& hidden, const Var& global, const GllVars& vars, const CfeOptions& opts) {
  Var z = cfe_measurements(hidden, global, vars.ffn1, vars.ffn2, vars.w_raw);
  if (opts.gradient == FilterGradient::StraightThrough) {
    return diff::straight_through(z, run_filter(z.value(), opts));
  }
  std::vector<Matrix> gains;
  Matrix states = run_filter(z.value(), opts, &gains);
  return filter_op(z, std::move(states), std::move(gains));
}

Var moe_gates(const Var& h, const GllVars& vars) {
  return diff::softmax_rows(diff::add(diff::matmul(h, vars.gate_w), vars.gate_b));
}

Var moe_forward(std::span<const Var> strata_outputs, const GllVars& vars) {
  if (strata_outputs.empty()) throw ArgumentError("mixture of experts needs at least one stratum output");
  Var total;
  for (std::size_t k = 0; k < strata_outputs.size(); ++k) {
    const Var& h = strata_outputs[k];
    Var gates = moe_gates(h, vars);
    Var contrib;
    for (std::size_t p = 0; p < vars.experts.size(); ++p) {
      Var term = diff::mul(diff::col(gates, static_cast<Eigen::Index>(p)), mlp_forward(vars.experts[p], h));
      contrib = p == 0 ? term : diff::add(contrib, term);
    }
    total = k == 0 ? contrib : diff::add(total, contrib);
  }
  return diff::scale(total, 1.0 / static_cast<double>(strata_outputs.size()));
}

}  // namespace anchorgk
