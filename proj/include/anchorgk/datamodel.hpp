#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "anchorgk/geo.hpp"

namespace anchorgk {

using LocationId = std::int64_t;

struct Location {
  LocationId id = 0;
  double lat = 0.0;
  double lon = 0.0;

  GeoPoint point() const { return {lat, lon}; }
};

/// N locations x T timesteps x F features, with a per-(location, feature)
/// availability mask. Unavailable series are held at exactly zero.
///
/// Series are stored contiguously per (location, feature), which is the access
/// pattern of every consumer (Pearson, kriging, graph inputs).
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Location> locations, std::size_t timesteps, std::size_t features);

  std::size_t num_locations() const { return locations_.size(); }
  std::size_t num_timesteps() const { return timesteps_; }
  std::size_t num_features() const { return features_; }

  const std::vector<Location>& locations() const { return locations_; }
  const Location& location(std::size_t row) const { return locations_.at(row); }
  /// Row index of a location id; throws ReferenceError if absent.
  std::size_t row_of(LocationId id) const;
  bool contains(LocationId id) const { return index_.contains(id); }

  double value(std::size_t row, std::size_t t, std::size_t f) const {
    return values_[offset(row, f) + t];
  }
  void set_value(std::size_t row, std::size_t t, std::size_t f, double v) {
    values_[offset(row, f) + t] = v;
  }
  std::span<const double> series(std::size_t row, std::size_t f) const {
    return {values_.data() + offset(row, f), timesteps_};
  }
  std::span<double> series(std::size_t row, std::size_t f) {
    return {values_.data() + offset(row, f), timesteps_};
  }
  Eigen::Map<const Eigen::VectorXd> series_vec(std::size_t row, std::size_t f) const {
    return {values_.data() + offset(row, f), static_cast<Eigen::Index>(timesteps_)};
  }

  bool available(std::size_t row, std::size_t f) const { return available_[row * features_ + f] != 0; }
  /// Marks a series available or not. Marking unavailable zeroes the series.
  void set_available(std::size_t row, std::size_t f, bool on);
  std::size_t available_count(std::size_t row) const;

  /// Subset of rows in the given order (used to drop held-out locations).
  Dataset subset(std::span<const std::size_t> rows) const;

  /// Checks the mask invariant and the shape minimums; throws on violation.
  void validate() const;

 private:
  std::size_t offset(std::size_t row, std::size_t f) const { return (row * features_ + f) * timesteps_; }

  std::vector<Location> locations_;
  std::unordered_map<LocationId, std::size_t> index_;
  std::size_t timesteps_ = 0;
  std::size_t features_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> available_;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct MaskSplit {
  std::set<LocationId> observed_ids;
  std::set<LocationId> masked_ids;
};

/// Reads an `id,lat,lon` file.
std::vector<Location> load_locations(const std::filesystem::path& path);

/// Shortest round-trip decimal form.
std::string format_double(double v);

Dataset load_dataset(const std::filesystem::path& locations_path,
                     const std::filesystem::path& readings_path);

/// Writes `locations.csv` and `readings.csv` style files. Only available
/// cells are emitted; values use shortest round-trip formatting.
void write_dataset(const Dataset& ds, const std::filesystem::path& locations_path,
                   const std::filesystem::path& readings_path);

/// Per-feature population statistics over available cells of `rows`
/// (all rows when empty). Zero-variance features get std = 1.
NormStats compute_norm_stats(const Dataset& ds, std::span<const std::size_t> rows = {});
Dataset apply_normalization(const Dataset& ds, const NormStats& stats);
Dataset denormalize(const Dataset& ds, const NormStats& stats);
std::pair<Dataset, NormStats> normalize(const Dataset& ds);

std::string norm_stats_json(const NormStats& stats);
NormStats parse_norm_stats_json(const std::string& text);

MaskSplit split_masks(const Dataset& ds, double mask_fraction, std::uint64_t seed);
/// Same as split_masks but over an explicit id pool.
MaskSplit split_ids(std::span<const LocationId> ids, double mask_fraction, std::uint64_t seed);

/// Pearson correlation; any constant series yields 0.
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace anchorgk
