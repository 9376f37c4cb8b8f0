#pragma once

// Synthetic spatio-temporal fields: exponential-covariance Gaussian fields
// in space, AR(1) in time.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "anchorgk/datamodel.hpp"

namespace anchorgk {

struct SynthConfig {
  std::size_t locations = 30;
  std::size_t timesteps = 200;
  std::size_t features = 3;
  std::uint64_t seed = 1;
  double lat_min = 22.45;
  double lat_max = 22.85;
  double lon_min = 113.75;
  double lon_max = 114.35;
  double range_km = 20.0;
  double ar_coefficient = 0.8;
  double feature_coupling = 0.5;  // share of variance from the common latent field
  double noise_std = 0.0;
  double thinning = 0.0;  // fraction of (location, feature) pairs marked unavailable
  std::vector<double> means;   // per feature; defaults to 10 * (f + 1)
  std::vector<double> scales;  // per feature; defaults to f + 1

  void validate() const;
};

struct SynthOutput {
  Dataset data;     // with thinning applied
  Dataset full;     // every pair available
  std::vector<std::pair<LocationId, std::size_t>> thinned;
};

SynthOutput synthesize(const SynthConfig& cfg);

/// Exponential-covariance field sampler over fixed points.
class FieldSampler {
 public:
  FieldSampler(std::span<const GeoPoint> points, double range_km);
  /// One zero-mean unit-variance draw per point.
  Eigen::VectorXd draw(std::mt19937_64& rng) const;
  const Eigen::MatrixXd& covariance() const { return cov_; }

 private:
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd factor_;
};

std::string synth_truth_json(const SynthConfig& cfg, const SynthOutput& out);

/// Writes locations.csv, readings.csv and truth.json to `dir`.
void write_synth(const SynthConfig& cfg, const SynthOutput& out, const std::filesystem::path& dir);

}  // namespace anchorgk
