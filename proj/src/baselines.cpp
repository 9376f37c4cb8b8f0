#include "anchorgk/baselines.hpp"

#include "anchorgk/error.hpp"
#include "anchorgk/kriging.hpp"

namespace anchorgk {

std::string baseline_name(Baseline b) {
  switch (b) {
    case Baseline::Ok: return "ok";
    case Baseline::Idw: return "idw";
    case Baseline::Mean: return "mean";
  }
  return "?";
}

Baseline parse_baseline(const std::string& name) {
  if (name == "ok") return Baseline::Ok;
  if (name == "idw") return Baseline::Idw;
  if (name == "mean") return Baseline::Mean;
  throw ArgumentError("unknown baseline '" + name + "' (expected ok, idw or mean)");
}

std::vector<diff::Matrix> predict_baseline(Baseline b, const Dataset& observed, std::span<const GeoPoint> targets) {
  const std::size_t F = observed.num_features();
  const auto T = static_cast<Eigen::Index>(observed.num_timesteps());
  std::vector<diff::Matrix> out(targets.size(), diff::Matrix::Zero(T, static_cast<Eigen::Index>(F)));
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<std::size_t> rows;
    std::vector<GeoPoint> coords;
    for (std::size_t i = 0; i < observed.num_locations(); ++i) {
      if (!observed.available(i, f)) continue;
      rows.push_back(i);
      coords.push_back(observed.location(i).point());
    }
    if (rows.empty()) throw AvailabilityError("baseline: feature " + std::to_string(f) + " has no observed location");
    const auto fc = static_cast<Eigen::Index>(f);
    if (b == Baseline::Mean) {
      double sum = 0.0;
      for (std::size_t r : rows) sum += observed.series_vec(r, f).sum();
      const double mean = sum / static_cast<double>(rows.size() * observed.num_timesteps());
      for (auto& m : out) m.col(fc).setConstant(mean);
      continue;
    }
    if (b == Baseline::Ok) {
      Variogram vg = fit_feature_variogram(observed, f);
      if (vg.degenerate) vg.sill = 1.0;
      for (std::size_t k = 0; k < targets.size(); ++k) out[k].col(fc) = global_kriging(observed, f, vg, targets[k]);
      continue;
    }
    // IDW weights are time-invariant, so solve them once per target via unit vectors.
    for (std::size_t k = 0; k < targets.size(); ++k) {
      std::vector<double> unit(rows.size(), 0.0);
      Eigen::VectorXd w(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        unit[i] = 1.0;
        w(static_cast<Eigen::Index>(i)) = idw_predict(coords, unit, targets[k]);
        unit[i] = 0.0;
      }
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(T);
      for (std::size_t i = 0; i < rows.size(); ++i) acc += w(static_cast<Eigen::Index>(i)) * observed.series_vec(rows[i], f);
      out[k].col(fc) = acc;
    }
  }
  return out;
}

Holdout split_holdout(const Dataset& ds, const std::set<LocationId>& held_out) {
  std::vector<std::size_t> keep, drop;
  for (std::size_t i = 0; i < ds.num_locations(); ++i) {
    (held_out.contains(ds.location(i).id) ? drop : keep).push_back(i);
  }
  return {ds.subset(keep), ds.subset(drop)};
}

}  // namespace anchorgk
