#include "anchorgk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "anchorgk/error.hpp"
#include "anchorgk/geo.hpp"

namespace anchorgk {

void SynthConfig::validate() const {
  if (locations < 5) throw ArgumentError("synth: need at least 5 locations, got " + std::to_string(locations));
  if (timesteps < 10) throw ArgumentError("synth: need at least 10 timesteps, got " + std::to_string(timesteps));
  if (features < 1) throw ArgumentError("synth: need at least 1 feature");
  if (!(lat_min < lat_max) || !(lon_min < lon_max)) throw ArgumentError("synth: empty lat/lon box");
  if (lat_min < -90.0 || lat_max > 90.0 || lon_min < -180.0 || lon_max > 180.0) {
    throw ArgumentError("synth: lat/lon box out of range");
  }
  if (!(range_km > 0.0)) throw ArgumentError("synth: range_km must be > 0");
  if (!(ar_coefficient > -1.0 && ar_coefficient < 1.0)) throw ArgumentError("synth: |ar_coefficient| must be < 1");
  if (!(feature_coupling >= 0.0 && feature_coupling <= 1.0)) {
    throw ArgumentError("synth: feature_coupling must lie in [0, 1]");
  }
  if (!(noise_std >= 0.0)) throw ArgumentError("synth: noise_std must be >= 0");
  if (!(thinning >= 0.0 && thinning < 1.0)) throw ArgumentError("synth: thinning must lie in [0, 1)");
  if (!means.empty() && means.size() != features) throw ArgumentError("synth: means length differs from features");
  if (!scales.empty() && scales.size() != features) throw ArgumentError("synth: scales length differs from features");
}

FieldSampler::FieldSampler(std::span<const GeoPoint> points, double range_km) {
  const auto n = static_cast<Eigen::Index>(points.size());
  cov_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      cov_(i, j) = std::exp(-haversine_km(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]) /
                            range_km);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_);
  if (eig.info() != Eigen::Success) throw NumericError("synth: covariance eigendecomposition failed");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor_ = eig.eigenvectors() * root.asDiagonal();
}

Eigen::VectorXd FieldSampler::draw(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(factor_.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return factor_ * z;
}

SynthOutput synthesize(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> ulat(cfg.lat_min, cfg.lat_max);
  std::uniform_real_distribution<double> ulon(cfg.lon_min, cfg.lon_max);

  std::vector<Location> locs;
  std::vector<GeoPoint> pts;
  for (std::size_t i = 0; i < cfg.locations; ++i) {
    const double lat = ulat(rng);
    const double lon = ulon(rng);
    locs.push_back({static_cast<LocationId>(i), lat, lon});
    pts.push_back({lat, lon});
  }
  const FieldSampler sampler(pts, cfg.range_km);
  const std::size_t n = cfg.locations;
  const std::size_t F = cfg.features;
  const std::size_t T = cfg.timesteps;
  const double innovation = std::sqrt(1.0 - cfg.ar_coefficient * cfg.ar_coefficient);

  // Stationary AR(1) sequences of unit-variance fields.
  auto run_ar = [&](std::vector<Eigen::VectorXd>& seq) {
    seq.resize(T);
    seq[0] = sampler.draw(rng);
    for (std::size_t t = 1; t < T; ++t) seq[t] = cfg.ar_coefficient * seq[t - 1] + innovation * sampler.draw(rng);
  };
  std::vector<Eigen::VectorXd> shared;
  run_ar(shared);
  std::vector<std::vector<Eigen::VectorXd>> own(F);
  for (auto& seq : own) run_ar(seq);

  SynthOutput out;
  out.full = Dataset(locs, T, F);
  const double a = std::sqrt(cfg.feature_coupling);
  const double b = std::sqrt(1.0 - cfg.feature_coupling);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t f = 0; f < F; ++f) {
    const double mean = cfg.means.empty() ? 10.0 * static_cast<double>(f + 1) : cfg.means[f];
    const double scale = cfg.scales.empty() ? static_cast<double>(f + 1) : cfg.scales[f];
    for (std::size_t i = 0; i < n; ++i) out.full.set_available(i, f, true);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        double v = mean + scale * (a * shared[t](ii) + b * own[f][t](ii));
        if (cfg.noise_std > 0.0) v += cfg.noise_std * noise(rng);
        out.full.set_value(i, t, f, v);
      }
    }
  }

  out.data = out.full;
  const auto drop = static_cast<std::size_t>(std::floor(cfg.thinning * static_cast<double>(n * F) + 1e-9));
  if (drop > 0) {
    std::vector<std::size_t> pairs(n * F);
    for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = i;
    for (std::size_t i = 0; i < drop; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pairs.size() - 1);
      std::swap(pairs[i], pairs[pick(rng)]);
    }
    std::sort(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(drop));
    for (std::size_t k = 0; k < drop; ++k) {
      const std::size_t row = pairs[k] / F;
      const std::size_t f = pairs[k] % F;
      out.data.set_available(row, f, false);
      out.thinned.emplace_back(locs[row].id, f);
    }
  }
  return out;
}

std::string synth_truth_json(const SynthConfig& cfg, const SynthOutput& out) {
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json scales = nlohmann::json::array();
  for (std::size_t f = 0; f < cfg.features; ++f) {
    means.push_back(cfg.means.empty() ? 10.0 * static_cast<double>(f + 1) : cfg.means[f]);
    scales.push_back(cfg.scales.empty() ? static_cast<double>(f + 1) : cfg.scales[f]);
  }
  nlohmann::json thinned = nlohmann::json::array();
  for (const auto& [id, f] : out.thinned) thinned.push_back({id, f});
  nlohmann::json j{{"locations", cfg.locations},
                   {"timesteps", cfg.timesteps},
                   {"features", cfg.features},
                   {"seed", cfg.seed},
                   {"box", {{"lat_min", cfg.lat_min}, {"lat_max", cfg.lat_max}, {"lon_min", cfg.lon_min}, {"lon_max", cfg.lon_max}}},
                   {"covariance", "exponential"},
                   {"range_km", cfg.range_km},
                   {"ar_coefficient", cfg.ar_coefficient},
                   {"feature_coupling", cfg.feature_coupling},
                   {"noise_std", cfg.noise_std},
                   {"thinning", cfg.thinning},
                   {"means", means},
                   {"scales", scales},
                   {"thinned_pairs", thinned}};
  return j.dump(2) + "\n";
}

void write_synth(const SynthConfig& cfg, const SynthOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_dataset(out.data, dir / "locations.csv", dir / "readings.csv");
  std::ofstream truth(dir / "truth.json", std::ios::binary);
  if (!truth) throw ArgumentError("cannot write " + (dir / "truth.json").string());
  truth << synth_truth_json(cfg, out);
}

}  // namespace anchorgk
