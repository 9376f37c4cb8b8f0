#include "anchorgk/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "anchorgk/error.hpp"

namespace anchorgk {

Dataset::Dataset(std::vector<Location> locations, std::size_t timesteps, std::size_t features)
    : locations_(std::move(locations)),
      timesteps_(timesteps),
      features_(features),
      values_(locations_.size() * timesteps * features, 0.0),
      available_(locations_.size() * features, 0) {
  for (std::size_t i = 0; i < locations_.size(); ++i) {
    if (!index_.emplace(locations_[i].id, i).second) {
      throw ConflictError("duplicate location id " + std::to_string(locations_[i].id));
    }
  }
}

std::size_t Dataset::row_of(LocationId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ReferenceError("unknown location id " + std::to_string(id));
  return it->second;
}

void Dataset::set_available(std::size_t row, std::size_t f, bool on) {
  available_[row * features_ + f] = on ? 1 : 0;
  if (!on) {
    auto s = series(row, f);
    std::fill(s.begin(), s.end(), 0.0);
  }
}

std::size_t Dataset::available_count(std::size_t row) const {
  std::size_t n = 0;
  for (std::size_t f = 0; f < features_; ++f) n += available(row, f) ? 1 : 0;
  return n;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<Location> locs;
  locs.reserve(rows.size());
  for (auto r : rows) locs.push_back(locations_.at(r));
  Dataset out(std::move(locs), timesteps_, features_);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t f = 0; f < features_; ++f) {
      out.available_[k * features_ + f] = available_[rows[k] * features_ + f];
      auto src = series(rows[k], f);
      std::copy(src.begin(), src.end(), out.series(k, f).begin());
    }
  }
  return out;
}

void Dataset::validate() const {
  if (timesteps_ < 2) throw ShapeError("dataset needs at least 2 timesteps");
  if (features_ < 1) throw ShapeError("dataset needs at least 1 feature");
  for (const auto& loc : locations_) {
    if (!(loc.lat >= -90.0 && loc.lat <= 90.0) || !(loc.lon >= -180.0 && loc.lon <= 180.0)) {
      throw ArgumentError("location " + std::to_string(loc.id) + " has out-of-range coordinates");
    }
  }
  for (std::size_t i = 0; i < num_locations(); ++i) {
    for (std::size_t f = 0; f < features_; ++f) {
      auto s = series(i, f);
      if (!available(i, f)) {
        if (std::any_of(s.begin(), s.end(), [](double v) { return v != 0.0; })) {
          throw ArgumentError("unavailable series is not zero at row " + std::to_string(i));
        }
      } else if (std::any_of(s.begin(), s.end(), [](double v) { return !std::isfinite(v); })) {
        throw NumericError("non-finite value at row " + std::to_string(i));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  field = trim(field);
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError(std::string("malformed ") + what + " '" + std::string(field) + "'", line);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ParseError(std::string("non-finite ") + what, line);
  }
  return value;
}

// Calls fn(fields, line_no) for each non-empty data line after checking the header.
template <typename Fn>
void read_csv(const std::filesystem::path& path, std::string_view header, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header in " + path.string(), 1);
  ++line_no;
  if (trim(line) != header) {
    throw ParseError("expected header '" + std::string(header) + "' in " + path.string(), line_no);
  }
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty()) continue;
    fn(split_fields(view), line_no);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<Location> load_locations(const std::filesystem::path& path) {
  std::vector<Location> locations;
  read_csv(path, "id,lat,lon", [&](const auto& fields, std::size_t line) {
    if (fields.size() != 3) throw ParseError("expected 3 fields", line);
    Location loc{parse_number<LocationId>(fields[0], line, "id"),
                 parse_number<double>(fields[1], line, "lat"),
                 parse_number<double>(fields[2], line, "lon")};
    if (loc.lat < -90.0 || loc.lat > 90.0) throw ParseError("latitude out of range", line);
    if (loc.lon < -180.0 || loc.lon > 180.0) throw ParseError("longitude out of range", line);
    locations.push_back(loc);
  });
  return locations;
}

Dataset load_dataset(const std::filesystem::path& locations_path,
                     const std::filesystem::path& readings_path) {
  std::vector<Location> locations = load_locations(locations_path);

  std::unordered_map<LocationId, std::size_t> rows;
  for (std::size_t i = 0; i < locations.size(); ++i) {
    if (!rows.emplace(locations[i].id, i).second) {
      throw ConflictError("duplicate location id " + std::to_string(locations[i].id));
    }
  }

  struct Reading {
    std::size_t row;
    std::size_t t;
    std::size_t f;
    double v;
  };
  std::vector<Reading> readings;
  std::size_t max_t = 0, max_f = 0;
  read_csv(readings_path, "location_id,t,feature,value", [&](const auto& fields, std::size_t line) {
    if (fields.size() != 4) throw ParseError("expected 4 fields", line);
    auto id = parse_number<LocationId>(fields[0], line, "location_id");
    auto t = parse_number<std::int64_t>(fields[1], line, "t");
    auto f = parse_number<std::int64_t>(fields[2], line, "feature");
    auto v = parse_number<double>(fields[3], line, "value");
    if (t < 0) throw ParseError("negative timestep", line);
    if (f < 0) throw ParseError("negative feature index", line);
    auto it = rows.find(id);
    if (it == rows.end()) {
      throw ReferenceError("line " + std::to_string(line) + ": unknown location_id " + std::to_string(id));
    }
    readings.push_back({it->second, static_cast<std::size_t>(t), static_cast<std::size_t>(f), v});
    max_t = std::max(max_t, static_cast<std::size_t>(t));
    max_f = std::max(max_f, static_cast<std::size_t>(f));
  });
  if (readings.empty()) throw ParseError("no readings in " + readings_path.string(), 1);

  const std::size_t T = max_t + 1, F = max_f + 1;
  Dataset ds(std::move(locations), T, F);
  const std::size_t N = ds.num_locations();

  std::vector<std::uint8_t> seen(N * T * F, 0);
  for (const auto& r : readings) {
    auto& flag = seen[(r.row * F + r.f) * T + r.t];
    if (flag) {
      throw ConflictError("duplicate reading for location " + std::to_string(ds.location(r.row).id) +
                          ", t=" + std::to_string(r.t) + ", feature=" + std::to_string(r.f));
    }
    flag = 1;
    ds.set_value(r.row, r.t, r.f, r.v);
  }

  // Availability and linear gap filling; edges take the nearest reading.
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t f = 0; f < F; ++f) {
      const std::uint8_t* mark = &seen[(i * F + f) * T];
      std::vector<std::size_t> known;
      for (std::size_t t = 0; t < T; ++t) {
        if (mark[t]) known.push_back(t);
      }
      if (known.empty()) {
        ds.set_available(i, f, false);
        continue;
      }
      ds.set_available(i, f, true);
      auto s = ds.series(i, f);
      for (std::size_t t = 0; t < known.front(); ++t) s[t] = s[known.front()];
      for (std::size_t t = known.back() + 1; t < T; ++t) s[t] = s[known.back()];
      for (std::size_t k = 0; k + 1 < known.size(); ++k) {
        const std::size_t a = known[k], b = known[k + 1];
        for (std::size_t t = a + 1; t < b; ++t) {
          const double u = static_cast<double>(t - a) / static_cast<double>(b - a);
          s[t] = s[a] + u * (s[b] - s[a]);
        }
      }
    }
  }
  ds.validate();
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& locations_path,
                   const std::filesystem::path& readings_path) {
  std::ofstream loc(locations_path);
  if (!loc) throw ArgumentError("cannot write " + locations_path.string());
  loc << "id,lat,lon\n";
  for (const auto& l : ds.locations()) {
    loc << l.id << ',' << format_double(l.lat) << ',' << format_double(l.lon) << '\n';
  }
  std::ofstream rd(readings_path);
  if (!rd) throw ArgumentError("cannot write " + readings_path.string());
  rd << "location_id,t,feature,value\n";
  for (std::size_t i = 0; i < ds.num_locations(); ++i) {
    for (std::size_t t = 0; t < ds.num_timesteps(); ++t) {
      for (std::size_t f = 0; f < ds.num_features(); ++f) {
        if (!ds.available(i, f)) continue;
        rd << ds.location(i).id << ',' << t << ',' << f << ',' << format_double(ds.value(i, t, f)) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Normalization

NormStats compute_norm_stats(const Dataset& ds, std::span<const std::size_t> rows) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(ds.num_locations());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rows = all;
  }
  const std::size_t F = ds.num_features();
  NormStats st{std::vector<double>(F, 0.0), std::vector<double>(F, 1.0)};
  for (std::size_t f = 0; f < F; ++f) {
    double sum = 0.0;
    std::size_t count = 0;
    for (auto r : rows) {
      if (!ds.available(r, f)) continue;
      for (double v : ds.series(r, f)) sum += v;
      count += ds.num_timesteps();
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (auto r : rows) {
      if (!ds.available(r, f)) continue;
      for (double v : ds.series(r, f)) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    st.mean[f] = mean;
    st.std[f] = sd > 0.0 ? sd : 1.0;
  }
  return st;
}

Dataset apply_normalization(const Dataset& ds, const NormStats& stats) {
  if (stats.mean.size() != ds.num_features() || stats.std.size() != ds.num_features()) {
    throw ShapeError("normalization stats do not match feature count");
  }
  Dataset out = ds;
  for (std::size_t i = 0; i < out.num_locations(); ++i) {
    for (std::size_t f = 0; f < out.num_features(); ++f) {
      if (!out.available(i, f)) continue;
      for (double& v : out.series(i, f)) v = (v - stats.mean[f]) / stats.std[f];
    }
  }
  return out;
}

Dataset denormalize(const Dataset& ds, const NormStats& stats) {
  Dataset out = ds;
  for (std::size_t i = 0; i < out.num_locations(); ++i) {
    for (std::size_t f = 0; f < out.num_features(); ++f) {
      if (!out.available(i, f)) continue;
      for (double& v : out.series(i, f)) v = v * stats.std[f] + stats.mean[f];
    }
  }
  return out;
}

std::pair<Dataset, NormStats> normalize(const Dataset& ds) {
  auto stats = compute_norm_stats(ds);
  return {apply_normalization(ds, stats), stats};
}

std::string norm_stats_json(const NormStats& stats) {
  nlohmann::json j{{"mean", stats.mean}, {"std", stats.std}};
  return j.dump();
}

NormStats parse_norm_stats_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  NormStats st{j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
  if (st.mean.size() != st.std.size()) throw ShapeError("mean/std length mismatch");
  return st;
}

// ---------------------------------------------------------------------------
// Masking

MaskSplit split_ids(std::span<const LocationId> ids_in, double mask_fraction, std::uint64_t seed) {
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) {
    throw ArgumentError("mask fraction must lie in (0, 1)");
  }
  std::vector<LocationId> ids(ids_in.begin(), ids_in.end());
  std::sort(ids.begin(), ids.end());
  const std::size_t n = ids.size();
  const auto m = static_cast<std::size_t>(std::floor(mask_fraction * static_cast<double>(n) + 1e-9));
  if (m < 1 || n - m < 2) {
    throw ArgumentError("mask fraction " + std::to_string(mask_fraction) + " is infeasible for " +
                        std::to_string(n) + " locations");
  }
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first m slots become the masked set.
  for (std::size_t k = 0; k < m; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(ids[k], ids[pick(rng)]);
  }
  MaskSplit split;
  split.masked_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m));
  split.observed_ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(m), ids.end());
  return split;
}

MaskSplit split_masks(const Dataset& ds, double mask_fraction, std::uint64_t seed) {
  std::vector<LocationId> ids;
  for (const auto& l : ds.locations()) ids.push_back(l.id);
  return split_ids(ids, mask_fraction, seed);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: series length mismatch");
  const std::size_t n = a.size();
  if (n == 0) return 0.0;
  auto constant = [](std::span<const double> s) {
    return std::all_of(s.begin(), s.end(), [&](double v) { return v == s.front(); });
  };
  if (constant(a) || constant(b)) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace anchorgk
