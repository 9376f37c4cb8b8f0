#include "anchorgk/kriging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "anchorgk/error.hpp"

namespace anchorgk {

namespace {

struct Bin {
  double distance = 0.0;  // mean pair distance
  double gamma = 0.0;     // mean semivariance
  double count = 0.0;
};

// Weighted least squares for (nugget, sill) at a fixed range, nugget >= 0.
// Returns the weighted sum of squared residuals.
double fit_linear(std::span<const Bin> bins, double range, double& nugget, double& sill) {
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& b : bins) {
    const double x = 1.0 - std::exp(-b.distance / range);
    sw += b.count;
    sx += b.count * x;
    sy += b.count * b.gamma;
    sxx += b.count * x * x;
    sxy += b.count * x * b.gamma;
  }
  const double det = sw * sxx - sx * sx;
  if (std::abs(det) > 1e-14 * sw * sxx) {
    nugget = (sxx * sy - sx * sxy) / det;
    sill = (sw * sxy - sx * sy) / det;
  } else {
    nugget = -1.0;
  }
  if (nugget < 0.0) {
    nugget = 0.0;
    sill = sxx > 0.0 ? sxy / sxx : 0.0;
  }
  sill = std::max(sill, kSillFloor);
  double sse = 0.0;
  for (const auto& b : bins) {
    const double r = nugget + sill * (1.0 - std::exp(-b.distance / range)) - b.gamma;
    sse += b.count * r * r;
  }
  return sse;
}

}  // namespace

Variogram fit_variogram(std::span<const GeoPoint> coords, std::span<const double> values) {
  const std::size_t n = coords.size();
  if (n != values.size()) throw ShapeError("variogram: coordinate/value count mismatch");
  if (n < 3) throw ArgumentError("variogram fit needs at least 3 points");
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("variogram fit on non-finite value");
  }

  std::vector<double> d;
  std::vector<double> g;
  d.reserve(n * (n - 1) / 2);
  g.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d.push_back(haversine_km(coords[i], coords[j]));
      g.push_back(0.5 * (values[i] - values[j]) * (values[i] - values[j]));
    }
  }
  const double max_d = *std::max_element(d.begin(), d.end());

  Variogram vg;
  const bool flat = std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
  if (flat || max_d <= 0.0) {
    vg.nugget = 0.0;
    vg.sill = kSillFloor;
    vg.range = max_d > 0.0 ? max_d / 3.0 : 1.0;
    vg.degenerate = true;
    return vg;
  }

  const auto nbins = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d.size()))));
  std::vector<Bin> bins(nbins);
  const double width = max_d / static_cast<double>(nbins);
  for (std::size_t k = 0; k < d.size(); ++k) {
    auto b = std::min(nbins - 1, static_cast<std::size_t>(d[k] / width));
    bins[b].distance += d[k];
    bins[b].gamma += g[k];
    bins[b].count += 1.0;
  }
  // Only bins up to half the maximum separation enter the fit; the tail is
  // dominated by few, boundary-biased pairs.
  std::vector<Bin> used;
  for (auto& b : bins) {
    if (b.count == 0.0) continue;
    b.distance /= b.count;
    b.gamma /= b.count;
    if (b.distance <= 0.5 * max_d || used.size() < 3) used.push_back(b);
  }

  // Log-spaced range scan, then golden-section refinement around the best.
  double best_range = max_d, best_sse = std::numeric_limits<double>::infinity();
  const double lo = max_d * 1e-3, hi = max_d * 10.0;
  constexpr int kScan = 80;
  for (int i = 0; i <= kScan; ++i) {
    const double r = lo * std::pow(hi / lo, static_cast<double>(i) / kScan);
    double nug, sill;
    const double sse = fit_linear(used, r, nug, sill);
    if (sse < best_sse) {
      best_sse = sse;
      best_range = r;
    }
  }
  const double step = std::pow(hi / lo, 1.0 / kScan);
  double a = std::log(best_range / step), b = std::log(best_range * step);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto sse_at = [&](double lr) {
    double nug, sill;
    return fit_linear(used, std::exp(lr), nug, sill);
  };
  double c = b - phi * (b - a), e = a + phi * (b - a);
  double fc = sse_at(c), fe = sse_at(e);
  for (int it = 0; it < 60; ++it) {
    if (fc < fe) {
      b = e;
      e = c;
      fe = fc;
      c = b - phi * (b - a);
      fc = sse_at(c);
    } else {
      a = c;
      c = e;
      fc = fe;
      e = a + phi * (b - a);
      fe = sse_at(e);
    }
  }
  const double refined = std::exp((a + b) / 2.0);
  if (sse_at(std::log(refined)) < best_sse) best_range = refined;

  vg.range = best_range;
  best_sse = fit_linear(used, vg.range, vg.nugget, vg.sill);
  double wsum = 0.0;
  for (const auto& bin : used) wsum += bin.count;
  vg.residual = std::sqrt(best_sse / wsum);
  return vg;
}

Variogram fit_feature_variogram(const Dataset& ds, std::size_t f) {
  std::vector<GeoPoint> coords;
  std::vector<double> means;
  for (std::size_t i = 0; i < ds.num_locations(); ++i) {
    if (!ds.available(i, f)) continue;
    coords.push_back(ds.location(i).point());
    means.push_back(ds.series_vec(i, f).mean());
  }
  if (coords.size() < 3) {
    // Too few points to fit; a unit-sill model with range at the network scale.
    Variogram vg;
    double max_d = 0.0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      for (std::size_t j = i + 1; j < coords.size(); ++j) max_d = std::max(max_d, haversine_km(coords[i], coords[j]));
    }
    vg.range = max_d > 0.0 ? max_d / 3.0 : 1.0;
    vg.degenerate = true;
    return vg;
  }
  return fit_variogram(coords, means);
}

Eigen::VectorXd ok_weights(std::span<const GeoPoint> coords, const Variogram& vg, const GeoPoint& target) {
  const auto n = static_cast<Eigen::Index>(coords.size());
  if (n < 2) throw ArgumentError("ordinary kriging needs at least 2 known points");
  Eigen::MatrixXd a(n + 1, n + 1);
  Eigen::VectorXd rhs(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = vg(0.0);
    for (Eigen::Index j = i + 1; j < n; ++j) a(i, j) = a(j, i) = vg(haversine_km(coords[i], coords[j]));
    a(i, n) = a(n, i) = 1.0;
    rhs(i) = vg(haversine_km(coords[i], target));
  }
  a(n, n) = 0.0;
  rhs(n) = 1.0;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) {
    Eigen::MatrixXd jittered = a;
    for (Eigen::Index i = 0; i < n; ++i) jittered(i, i) += 1e-10;
    lu.compute(jittered);
    if (!lu.isInvertible()) throw NumericError("kriging system is singular");
  }
  Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite()) throw NumericError("kriging solve produced non-finite weights");
  return sol.head(n);
}

KrigingResult ok_predict(std::span<const GeoPoint> coords, std::span<const double> values, const Variogram& vg,
                         const GeoPoint& target) {
  if (coords.size() != values.size()) throw ShapeError("kriging: coordinate/value count mismatch");
  KrigingResult r;
  r.weights = ok_weights(coords, vg, target);
  r.estimate = r.weights.dot(Eigen::Map<const Eigen::VectorXd>(values.data(), r.weights.size()));
  return r;
}

double idw_predict(std::span<const GeoPoint> coords, std::span<const double> values, const GeoPoint& target,
                   double power) {
  if (coords.empty()) throw ArgumentError("IDW needs at least one known point");
  if (coords.size() != values.size()) throw ShapeError("IDW: coordinate/value count mismatch");
  if (!(power > 0.0)) throw ArgumentError("IDW power must be positive");
  double num = 0.0, den = 0.0;
  double hit_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double d = haversine_km(coords[i], target);
    if (d == 0.0) {
      hit_sum += values[i];
      ++hits;
      continue;
    }
    const double w = std::pow(d, -power);
    num += w * values[i];
    den += w;
  }
  if (hits > 0) return hit_sum / static_cast<double>(hits);
  return num / den;
}

Eigen::VectorXd local_kriging(const Dataset& ds, const Stratum& stratum, const Variogram& vg,
                              const GeoPoint& target) {
  const auto ids = stratum.member_ids();
  std::vector<GeoPoint> coords;
  Eigen::MatrixXd series(ds.num_timesteps(), ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto row = ds.row_of(ids[k]);
    if (!ds.available(row, stratum.feature)) {
      throw AvailabilityError("stratum member " + std::to_string(ids[k]) + " lacks feature " +
                              std::to_string(stratum.feature));
    }
    coords.push_back(ds.location(row).point());
    series.col(static_cast<Eigen::Index>(k)) = ds.series_vec(row, stratum.feature);
  }
  return series * ok_weights(coords, vg, target);
}

AugmentedSeries build_augmented(const Dataset& ds, const Stratum& stratum, const Eigen::VectorXd& xbar) {
  const auto t = static_cast<Eigen::Index>(ds.num_timesteps());
  if (xbar.size() != t) {
    throw ShapeError("augmented series: xbar has length " + std::to_string(xbar.size()) + ", expected " +
                     std::to_string(t));
  }
  if (!xbar.allFinite()) throw NumericError("augmented series: non-finite interpolation");
  const auto ids = stratum.member_ids();
  AugmentedSeries out(t, static_cast<Eigen::Index>(ids.size()) + 1);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = ds.series_vec(ds.row_of(ids[k]), stratum.feature);
  }
  out.col(out.cols() - 1) = xbar;
  return out;
}

Eigen::VectorXd global_kriging(const Dataset& ds, std::size_t f, const Variogram& vg, const GeoPoint& target) {
  std::vector<GeoPoint> coords;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.num_locations(); ++i) {
    if (!ds.available(i, f)) continue;
    coords.push_back(ds.location(i).point());
    rows.push_back(i);
  }
  if (rows.empty()) throw AvailabilityError("feature " + std::to_string(f) + " is available nowhere");
  const auto t = static_cast<Eigen::Index>(ds.num_timesteps());
  if (rows.size() == 1) return ds.series_vec(rows[0], f);  // IDW with one point
  Eigen::MatrixXd series(t, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) series.col(static_cast<Eigen::Index>(k)) = ds.series_vec(rows[k], f);
  return series * ok_weights(coords, vg, target);
}

Eigen::VectorXd global_kriging(const Dataset& ds, std::size_t f, const GeoPoint& target) {
  return global_kriging(ds, f, fit_feature_variogram(ds, f), target);
}

}  // namespace anchorgk
