#pragma once

// Masked-location training, metrics, Adam and inductive prediction.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anchorgk/datamodel.hpp"
#include "anchorgk/gll.hpp"
#include "anchorgk/pipeline.hpp"
#include "anchorgk/sscc.hpp"

namespace anchorgk {

/// Per-location availability, M x F.
using AvailabilityMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Pooled root mean squared error over cells whose (location, feature) is
/// included by `mask`. `pred` and `truth` hold one T x F matrix per location.
double rmse_loss(std::span<const Matrix> pred, std::span<const Matrix> truth, const AvailabilityMask& mask);
double mae_metric(std::span<const Matrix> pred, std::span<const Matrix> truth, const AvailabilityMask& mask);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;
  std::size_t skipped = 0;  // steps dropped for non-finite gradients
};

/// One bias-corrected Adam update in place. Returns false (and leaves
/// parameters and moments untouched) when any gradient is non-finite.
bool adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr);

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.003;
  double mask_fraction = 0.2;
  std::uint64_t seed = 0;
  std::size_t batches_per_epoch = 16;
  std::size_t mcmc_every = 5;   // 0 disables the SCParams refresh
  std::size_t mcmc_steps = 10;
  double validation_fraction = 0.1;
  bool fixed_mask = false;
  ModelConfig model;
  SCParams sc;

  void validate() const;
};

struct TrainState {
  TrainConfig config;
  NormStats norm;
  GllParams params;
  SCParams sc;
  AdamState adam;
  std::vector<double> loss_history;
  std::string rng_state;
  std::size_t epochs_completed = 0;

  bool trained() const { return epochs_completed > 0; }
};

struct PhaseTimes {
  double sscc = 0.0;
  double kriging = 0.0;
  double gll = 0.0;
  double backward = 0.0;
};

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  SCParams sc;
  PhaseTimes seconds;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  std::size_t skipped_steps = 0;
  std::vector<std::string> warnings;
};

struct TrainResult {
  TrainState state;
  TrainReport report;
};

/// Trains on every location of `ds` (raw units); normalization statistics
/// are taken from `ds` itself.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

/// Predictions in raw units, one T x F matrix per target. `observed` supplies
/// the known locations (raw units). Never modifies `state`.
std::vector<Matrix> predict(const TrainState& state, const Dataset& observed, std::span<const GeoPoint> targets);

/// Same as predict but in normalized units.
std::vector<Matrix> predict_normalized(const TrainState& state, const Dataset& observed_normalized,
                                       std::span<const GeoPoint> targets);

}  // namespace anchorgk
