#pragma once

// Dual-view graph learning layer: per-stratum GCN, the cross-feature
// estimator (FFN fusion + unscented Kalman filter) and the cross-strata
// mixture of experts.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "anchorgk/diff.hpp"

namespace anchorgk {

using diff::Matrix;
using diff::Var;

// ---------------------------------------------------------------------------
// GCN

struct GcnLayer {
  Matrix weight;  // C_in x F'
  Matrix bias;    // 1 x F'
};

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
Matrix normalized_adjacency(const Matrix& adjacency);

/// H' = D^{-1/2} (A + I) D^{-1/2} X W + b for node-major X.
Matrix gcn_forward(const Matrix& adjacency, const Matrix& x, const GcnLayer& layer);

/// Tape version; the normalized adjacency and X are constants.
Var gcn_forward(diff::Tape& tape, const Matrix& normalized_adj, const Matrix& x, const Var& weight, const Var& bias);

// ---------------------------------------------------------------------------
// Unscented Kalman filter

struct SigmaConfig {
  double alpha = 0.1;
  double beta = 2.0;
  double kappa = 0.1;
  std::size_t dim = 1;

  double xi() const { return alpha * alpha * (static_cast<double>(dim) + kappa) - static_cast<double>(dim); }
  void validate() const;
};

struct SigmaWeights {
  Eigen::VectorXd mean;  // W_m, length 2j+1
  Eigen::VectorXd cov;   // W_c, length 2j+1
};

SigmaWeights sigma_weights(const SigmaConfig& cfg);

/// 2j+1 Merwe sigma points as columns.
Matrix sigma_points(const Eigen::VectorXd& mean, const Matrix& cov, const SigmaConfig& cfg);

struct UkfState {
  Eigen::VectorXd mean;
  Matrix cov;
};

/// One predict/update cycle with identity transition and measurement maps.
/// Writes the Kalman gain to `gain` when given.
UkfState ukf_step(const UkfState& state, const Eigen::VectorXd& z, const SigmaConfig& cfg, const Matrix& process_noise,
                  const Matrix& measurement_noise, Matrix* gain = nullptr);

// ---------------------------------------------------------------------------
// Parameters

/// in -> hidden (ReLU) -> out.
struct Mlp {
  Matrix w1, b1, w2, b2;
};

struct CfeParams {
  Mlp ffn1;        // F*F' -> j
  Mlp ffn2;        // F -> j
  Matrix w_raw;    // T x j, fusion weights are sigmoid(w_raw)
};

struct MoeParams {
  std::vector<Mlp> experts;  // j -> hidden -> F
  Matrix gate_w;             // j x P
  Matrix gate_b;             // 1 x P
};

struct GllDims {
  std::size_t slots = 5;          // anchor slots Q
  std::size_t features = 1;       // F (= state dimension j)
  std::size_t timesteps = 2;      // T
  std::size_t gcn_hidden = 16;    // F'
  std::size_t ffn_hidden = 16;
  std::size_t experts = 4;        // P
  std::size_t expert_hidden = 16;
};

struct GllParams {
  GllDims dims;
  std::vector<GcnLayer> gcn;  // slot-major: index k * F + f
  CfeParams cfe;
  MoeParams moe;

  GcnLayer& gcn_at(std::size_t slot, std::size_t f) { return gcn.at(slot * dims.features + f); }
  const GcnLayer& gcn_at(std::size_t slot, std::size_t f) const { return gcn.at(slot * dims.features + f); }

  /// Every trainable matrix in a fixed order with a stable name.
  std::vector<std::pair<std::string, Matrix*>> named();
  std::vector<std::pair<std::string, const Matrix*>> named() const;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; fusion logits start at 0.
GllParams init_gll(const GllDims& dims, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Tape bindings

struct MlpVars {
  Var w1, b1, w2, b2;
};

struct GllVars {
  std::vector<std::pair<Var, Var>> gcn;  // (weight, bias) per slot
  MlpVars ffn1, ffn2;
  Var w_raw;
  std::vector<MlpVars> experts;
  Var gate_w, gate_b;
  std::vector<Var> flat;  // same order as GllParams::named()
};

/// Places every parameter on the tape (as trainable or constant leaves).
GllVars bind(diff::Tape& tape, const GllParams& params, bool trainable = true);

Var mlp_forward(const MlpVars& m, const Var& x);

/// How gradients cross the Kalman filter in cfe_forward.
enum class FilterGradient {
  StraightThrough,  // identity Jacobian from filtered states to measurements
  ThroughFilter,    // exact: states are linear in the measurements given the gains
};

struct CfeOptions {
  SigmaConfig sigma;
  Matrix process_noise;      // j x j
  Matrix measurement_noise;  // j x j
  FilterGradient gradient = FilterGradient::StraightThrough;
};

/// Fused measurements z = w * FFN1(hidden) + (1 - w) * FFN2(global), T x j.
Var cfe_measurements(const Var& hidden, const Var& global, const MlpVars& ffn1, const MlpVars& ffn2, const Var& w_raw);

/// Runs the filter from x0 = 0, P0 = I over the rows of z. Returns the
/// filtered states (T x j) and the per-step gains.
Matrix run_filter(const Matrix& z, const CfeOptions& opts, std::vector<Matrix>* gains = nullptr);

/// Cross-feature estimator for one stratum group, T x j.
Var cfe_forward(const Var& hidden, const Var& global, const GllVars& vars, const CfeOptions& opts);

/// Gate probabilities (T x P) for one stratum output.
Var moe_gates(const Var& h, const GllVars& vars);

/// Mean over strata of sum_p G_p(H_k) E_p(H_k), T x F.
Var moe_forward(std::span<const Var> strata_outputs, const GllVars& vars);

}  // namespace anchorgk
