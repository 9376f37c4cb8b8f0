#pragma once

#include <span>

#include <Eigen/Dense>

#include "anchorgk/datamodel.hpp"
#include "anchorgk/sscc.hpp"

namespace anchorgk {

/// Exponential semivariogram gamma(d) = nugget + sill * (1 - exp(-d / range)),
/// distances in kilometres. gamma(0) = nugget.
struct Variogram {
  enum class Model { Exponential };

  Model model = Model::Exponential;
  double nugget = 0.0;
  double sill = 1.0;
  double range = 1.0;
  bool degenerate = false;  // set when fitted on a flat field
  double residual = 0.0;    // weighted RMS misfit of the fit

  double operator()(double d) const { return nugget + sill * (1.0 - std::exp(-d / range)); }
};

inline constexpr double kSillFloor = 1e-12;

/// Least-squares fit on ceil(sqrt(n(n-1)/2)) equal-width distance bins.
Variogram fit_variogram(std::span<const GeoPoint> coords, std::span<const double> values);

/// Variogram of feature f on the time-averaged series of every location
/// where f is available.
Variogram fit_feature_variogram(const Dataset& ds, std::size_t f);

struct KrigingResult {
  double estimate = 0.0;
  Eigen::VectorXd weights;
};

/// Ordinary kriging weights (sum to one) for a target.
Eigen::VectorXd ok_weights(std::span<const GeoPoint> coords, const Variogram& vg, const GeoPoint& target);

KrigingResult ok_predict(std::span<const GeoPoint> coords, std::span<const double> values, const Variogram& vg,
                         const GeoPoint& target);

double idw_predict(std::span<const GeoPoint> coords, std::span<const double> values, const GeoPoint& target,
                   double power = 2.0);

/// Kriged series at target from the stratum's members (neighbors + anchor).
Eigen::VectorXd local_kriging(const Dataset& ds, const Stratum& stratum, const Variogram& vg,
                              const GeoPoint& target);

/// T x (U+2) matrix with columns [neighbors..., anchor, xbar].
using AugmentedSeries = Eigen::MatrixXd;

AugmentedSeries build_augmented(const Dataset& ds, const Stratum& stratum, const Eigen::VectorXd& xbar);

/// Kriged series at target from every location with feature f available;
/// falls back to IDW when only one such location exists.
Eigen::VectorXd global_kriging(const Dataset& ds, std::size_t f, const Variogram& vg, const GeoPoint& target);
Eigen::VectorXd global_kriging(const Dataset& ds, std::size_t f, const GeoPoint& target);

}  // namespace anchorgk
