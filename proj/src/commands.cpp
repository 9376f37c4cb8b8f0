#include "anchorgk/commands.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "anchorgk/baselines.hpp"
#include "anchorgk/checkpoint.hpp"
#include "anchorgk/error.hpp"
#include "anchorgk/synth.hpp"
#include "anchorgk/trainer.hpp"

namespace anchorgk::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kRunSchema = "anchorgk-run/1";
inline constexpr const char* kBenchSchema = "anchorgk-bench/1";

/// Carries an exit code out of a command.
struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void usage(const std::string& msg) { throw Failure{kUsageError, msg}; }

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) usage("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    usage("config " + path + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kRuntimeFailure, "cannot write " + path.string()};
  out << text;
  if (!out) throw Failure{kRuntimeFailure, "failed writing " + path.string()};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) usage("cannot create output directory " + dir.string() + ": " + ec.message());
}

/// Loads a dataset, mapping every input problem to a usage error that names the file.
Dataset load_input(const std::string& locations, const std::string& readings) {
  for (const std::string& p : {locations, readings}) {
    if (p.empty()) usage("data paths are required (locations and readings)");
    if (!fs::exists(p)) usage("data file not found: " + p);
  }
  try {
    return load_dataset(locations, readings);
  } catch (const ParseError& e) {
    usage("cannot parse data (" + locations + ", " + readings + "): " + e.what());
  } catch (const Error& e) {
    usage(std::string("invalid data: ") + e.what());
  }
}

Checkpoint load_ckpt(const std::string& path) {
  if (path.empty()) usage("--checkpoint is required");
  if (!fs::exists(path)) usage("checkpoint not found: " + path);
  try {
    return load_checkpoint(path);
  } catch (const Error& e) {
    usage(std::string("bad checkpoint ") + path + ": " + e.what());
  }
}

std::size_t checked_size(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    usage("config key '" + key + "': expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

double checked_real(const json& v, const std::string& key) {
  if (!v.is_number()) usage("config key '" + key + "': expected a number");
  return v.get<double>();
}

std::string checked_string(const json& v, const std::string& key) {
  if (!v.is_string()) usage("config key '" + key + "': expected a string");
  return v.get<std::string>();
}

void check_schema(const json& cfg, const char* expected) {
  if (cfg.contains("schema") && cfg["schema"] != expected) {
    usage(std::string("config key 'schema': expected \"") + expected + "\"");
  }
}

/// Rows of `ds` whose ids are in `ids`, kept in dataset order.
std::vector<std::size_t> rows_of(const Dataset& ds, const std::set<LocationId>& ids) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.num_locations(); ++i) {
    if (ids.contains(ds.location(i).id)) rows.push_back(i);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string config;
  std::string out = ".";
  SynthConfig cfg;
  std::uint64_t seed = 1;
};

void apply_synth_json(const json& j, SynthConfig& c) {
  if (!j.is_object()) usage("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "schema") continue;
    if (key == "locations") c.locations = checked_size(v, key);
    else if (key == "timesteps") c.timesteps = checked_size(v, key);
    else if (key == "features") c.features = checked_size(v, key);
    else if (key == "seed") c.seed = checked_size(v, key);
    else if (key == "lat_min") c.lat_min = checked_real(v, key);
    else if (key == "lat_max") c.lat_max = checked_real(v, key);
    else if (key == "lon_min") c.lon_min = checked_real(v, key);
    else if (key == "lon_max") c.lon_max = checked_real(v, key);
    else if (key == "range_km") c.range_km = checked_real(v, key);
    else if (key == "ar_coefficient") c.ar_coefficient = checked_real(v, key);
    else if (key == "feature_coupling") c.feature_coupling = checked_real(v, key);
    else if (key == "noise_std") c.noise_std = checked_real(v, key);
    else if (key == "thinning") c.thinning = checked_real(v, key);
    else if (key == "means" || key == "scales") {
      if (!v.is_array()) usage("config key '" + key + "': expected an array");
      std::vector<double> xs;
      for (const auto& x : v) xs.push_back(checked_real(x, key));
      (key == "means" ? c.means : c.scales) = xs;
    } else {
      usage("unknown config key '" + key + "'");
    }
  }
}

int cmd_synth(CLI::App& sub, SynthArgs& a, std::ostream& out) {
  SynthConfig cfg;
  if (!a.config.empty()) apply_synth_json(read_json_file(a.config), cfg);
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--n")) cfg.locations = a.cfg.locations;
  if (given("--t")) cfg.timesteps = a.cfg.timesteps;
  if (given("--f")) cfg.features = a.cfg.features;
  if (given("--seed")) cfg.seed = a.seed;
  if (given("--range-km")) cfg.range_km = a.cfg.range_km;
  if (given("--thinning")) cfg.thinning = a.cfg.thinning;
  if (given("--noise")) cfg.noise_std = a.cfg.noise_std;
  if (given("--coupling")) cfg.feature_coupling = a.cfg.feature_coupling;
  try {
    cfg.validate();
  } catch (const Error& e) {
    usage(e.what());
  }
  ensure_dir(a.out);
  const SynthOutput data = synthesize(cfg);
  write_synth(cfg, data, a.out);
  out << "wrote " << cfg.locations << " locations x " << cfg.timesteps << " timesteps x " << cfg.features
      << " features to " << a.out << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::string locations;
  std::string readings;
  std::size_t epochs = 0;
};

struct RunConfig {
  TrainConfig train;
  std::string locations;
  std::string readings;
  std::string out = ".";
  double eval_fraction = 0.2;
  std::uint64_t eval_seed = 0;
};

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) usage("config must be a JSON object");
  check_schema(j, kRunSchema);
  RunConfig rc;
  json train = json::object();
  for (const auto& [key, v] : j.items()) {
    if (key == "schema") continue;
    if (key == "locations") rc.locations = checked_string(v, key);
    else if (key == "readings") rc.readings = checked_string(v, key);
    else if (key == "out") rc.out = checked_string(v, key);
    else if (key == "eval_fraction") rc.eval_fraction = checked_real(v, key);
    else if (key == "eval_seed") rc.eval_seed = checked_size(v, key);
    else train[key] = v;
  }
  try {
    merge_train_config(train, rc.train);
  } catch (const ConfigError& e) {
    usage(e.what());
  }
  return rc;
}

int cmd_fit(CLI::App& sub, FitArgs& a, std::ostream& out) {
  RunConfig rc;
  if (!a.config.empty()) rc = parse_run_config(read_json_file(a.config));
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--seed")) rc.train.seed = a.seed;
  if (given("--out")) rc.out = a.out;
  if (given("--locations")) rc.locations = a.locations;
  if (given("--readings")) rc.readings = a.readings;
  if (given("--epochs")) rc.train.epochs = a.epochs;
  try {
    rc.train.validate();
  } catch (const Error& e) {
    usage(e.what());
  }
  if (!(rc.eval_fraction >= 0.0 && rc.eval_fraction < 1.0)) usage("config key 'eval_fraction': must lie in [0, 1)");

  const Dataset ds = load_input(rc.locations, rc.readings);
  std::vector<LocationId> ids;
  for (const Location& l : ds.locations()) ids.push_back(l.id);
  std::set<LocationId> held_out;
  if (rc.eval_fraction > 0.0) {
    try {
      held_out = split_ids(ids, rc.eval_fraction, rc.eval_seed).masked_ids;
    } catch (const Error& e) {
      usage(std::string("eval split: ") + e.what());
    }
  }
  const Holdout split = split_holdout(ds, held_out);

  TrainResult result;
  try {
    result = train(split.observed, rc.train);
  } catch (const std::exception& e) {
    throw Failure{kRuntimeFailure, std::string("training failed: ") + e.what()};
  }

  Checkpoint ck;
  ck.state = std::move(result.state);
  for (const Location& l : split.observed.locations()) ck.observed_ids.push_back(l.id);
  ck.locations_path = rc.locations;
  ck.readings_path = rc.readings;

  ensure_dir(rc.out);
  const fs::path dir(rc.out);
  save_checkpoint(ck, dir / "checkpoint.json");
  json report = report_to_json(result.report);
  report["config"] = to_json(rc.train);
  report["eval_ids"] = std::vector<LocationId>(held_out.begin(), held_out.end());
  report["final_sc"] = to_json(ck.state.sc);
  write_text(dir / "report.json", report.dump(2) + "\n");
  out << "trained " << rc.train.epochs << " epochs; final loss " << format_double(ck.state.loss_history.back())
      << "; wrote " << (dir / "checkpoint.json").string() << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------------------
// shared by predict / evaluate

struct DataArgs {
  std::string checkpoint;
  std::string locations;
  std::string readings;
  std::string out = ".";
  std::string config;
  std::uint64_t seed = 0;
};

Dataset checkpoint_data(const Checkpoint& ck, const DataArgs& a) {
  const std::string loc = a.locations.empty() ? ck.locations_path : a.locations;
  const std::string rd = a.readings.empty() ? ck.readings_path : a.readings;
  Dataset ds = load_input(loc, rd);
  if (ds.num_features() != ck.state.params.dims.features || ds.num_timesteps() != ck.state.params.dims.timesteps) {
    usage("data shape (T=" + std::to_string(ds.num_timesteps()) + ", F=" + std::to_string(ds.num_features()) +
          ") does not match the checkpoint (T=" + std::to_string(ck.state.params.dims.timesteps) +
          ", F=" + std::to_string(ck.state.params.dims.features) + ")");
  }
  return ds;
}

/// The locations the checkpoint was trained on, when present in `ds`; otherwise every location.
Dataset observed_part(const Checkpoint& ck, const Dataset& ds) {
  std::set<LocationId> ids(ck.observed_ids.begin(), ck.observed_ids.end());
  std::vector<std::size_t> rows = rows_of(ds, ids);
  if (rows.empty()) return ds;
  return ds.subset(rows);
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs : DataArgs {
  std::string targets;
  std::vector<std::string> heatmap;
  std::size_t grid = 48;
};

struct Rgb {
  unsigned char r, g, b;
};

/// Linear blue (low) to red (high).
Rgb colormap(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return {static_cast<unsigned char>(std::lround(255.0 * u)), 0, static_cast<unsigned char>(std::lround(255.0 * (1.0 - u)))};
}

std::size_t heatmap_index(const std::string& spec, char key) {
  if (spec.size() < 3 || spec[0] != key || spec[1] != '=') usage("--heatmap expects f=<i> t=<j>");
  std::size_t v = 0;
  const char* first = spec.data() + 2;
  const char* last = spec.data() + spec.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) usage("--heatmap: bad index in '" + spec + "'");
  return v;
}

void write_heatmap(const Checkpoint& ck, const Dataset& observed, std::size_t feature, std::size_t t,
                   std::size_t grid, const fs::path& dir) {
  double lat_min = 90.0, lat_max = -90.0, lon_min = 180.0, lon_max = -180.0;
  for (const Location& l : observed.locations()) {
    lat_min = std::min(lat_min, l.lat);
    lat_max = std::max(lat_max, l.lat);
    lon_min = std::min(lon_min, l.lon);
    lon_max = std::max(lon_max, l.lon);
  }
  const double pad_lat = 0.05 * std::max(lat_max - lat_min, 1e-3);
  const double pad_lon = 0.05 * std::max(lon_max - lon_min, 1e-3);
  lat_min -= pad_lat;
  lat_max += pad_lat;
  lon_min -= pad_lon;
  lon_max += pad_lon;

  std::vector<GeoPoint> cells;
  for (std::size_t r = 0; r < grid; ++r) {
    for (std::size_t c = 0; c < grid; ++c) {
      const double lat = lat_max - (static_cast<double>(r) + 0.5) * (lat_max - lat_min) / static_cast<double>(grid);
      const double lon = lon_min + (static_cast<double>(c) + 0.5) * (lon_max - lon_min) / static_cast<double>(grid);
      cells.push_back({lat, lon});
    }
  }
  const std::vector<Matrix> pred = predict(ck.state, observed, cells);
  std::vector<double> values;
  for (const Matrix& m : pred) values.push_back(m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(feature)));
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  // Spans at rounding level count as a flat field.
  const bool flat = hi - lo <= 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});

  std::string ppm = "P6\n" + std::to_string(grid) + " " + std::to_string(grid) + "\n255\n";
  for (double v : values) {
    const Rgb px = colormap(!flat ? (v - lo) / (hi - lo) : 0.0);
    ppm.push_back(static_cast<char>(px.r));
    ppm.push_back(static_cast<char>(px.g));
    ppm.push_back(static_cast<char>(px.b));
  }
  write_text(dir / "heatmap.ppm", ppm);

  std::ostringstream csv;
  csv << "row,col,lat,lon,value\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    csv << i / grid << ',' << i % grid << ',' << format_double(cells[i].lat) << ',' << format_double(cells[i].lon)
        << ',' << format_double(values[i]) << '\n';
  }
  write_text(dir / "heatmap_grid.csv", csv.str());

  json legend{{"feature", feature},
              {"t", t},
              {"width", grid},
              {"height", grid},
              {"min", lo},
              {"max", hi},
              {"colormap", "linear"},
              {"low_rgb", {0, 0, 255}},
              {"high_rgb", {255, 0, 0}},
              {"bounds", {{"lat_min", lat_min}, {"lat_max", lat_max}, {"lon_min", lon_min}, {"lon_max", lon_max}}},
              {"row_order", "north_to_south"}};
  write_text(dir / "heatmap_legend.json", legend.dump(2) + "\n");
}

int cmd_predict(PredictArgs& a, std::ostream& out) {
  const Checkpoint ck = load_ckpt(a.checkpoint);
  const Dataset ds = checkpoint_data(ck, a);
  const Dataset observed = observed_part(ck, ds);

  std::vector<Location> targets;
  if (!a.targets.empty()) {
    if (!fs::exists(a.targets)) usage("targets file not found: " + a.targets);
    try {
      targets = load_locations(a.targets);
    } catch (const Error& e) {
      usage("malformed targets " + a.targets + ": " + e.what());
    }
  }
  std::optional<std::pair<std::size_t, std::size_t>> heat;
  if (!a.heatmap.empty()) {
    if (a.heatmap.size() != 2) usage("--heatmap expects f=<i> t=<j>");
    const std::size_t f = heatmap_index(a.heatmap[0], 'f');
    const std::size_t t = heatmap_index(a.heatmap[1], 't');
    if (f >= ds.num_features()) usage("--heatmap: feature " + std::to_string(f) + " out of range");
    if (t >= ds.num_timesteps()) usage("--heatmap: timestep " + std::to_string(t) + " out of range");
    if (a.grid < 2) usage("--grid must be >= 2");
    heat = {f, t};
  }
  if (targets.empty() && !heat) usage("nothing to do: give --targets and/or --heatmap");

  ensure_dir(a.out);
  const fs::path dir(a.out);
  if (!targets.empty()) {
    std::vector<GeoPoint> pts;
    for (const Location& l : targets) pts.push_back(l.point());
    const std::vector<Matrix> pred = predict(ck.state, observed, pts);
    std::ostringstream csv;
    csv << "target_id,t,feature,value\n";
    for (std::size_t k = 0; k < targets.size(); ++k) {
      for (Eigen::Index t = 0; t < pred[k].rows(); ++t) {
        for (Eigen::Index f = 0; f < pred[k].cols(); ++f) {
          csv << targets[k].id << ',' << t << ',' << f << ',' << format_double(pred[k](t, f)) << '\n';
        }
      }
    }
    write_text(dir / "predictions.csv", csv.str());
    out << "wrote " << targets.size() << " targets to " << (dir / "predictions.csv").string() << "\n";
  }
  if (heat) {
    write_heatmap(ck, observed, heat->first, heat->second, a.grid, dir);
    out << "wrote heatmap " << a.grid << "x" << a.grid << " to " << (dir / "heatmap.ppm").string() << "\n";
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs : DataArgs {
  std::optional<std::uint64_t> mask_seed;
  double mask_fraction = 0.2;
  std::string baselines = "ok,idw";
  bool dump = false;
};

int cmd_evaluate(CLI::App& sub, EvaluateArgs& a, std::ostream& out) {
  if (sub.get_option("--seed")->count() > 0 && !a.mask_seed) a.mask_seed = a.seed;
  const Checkpoint ck = load_ckpt(a.checkpoint);
  const Dataset ds = checkpoint_data(ck, a);

  std::vector<Baseline> baselines;
  std::stringstream names(a.baselines);
  for (std::string name; std::getline(names, name, ',');) {
    if (name.empty()) continue;
    try {
      baselines.push_back(parse_baseline(name));
    } catch (const Error& e) {
      usage(e.what());
    }
  }

  std::set<LocationId> masked;
  if (a.mask_seed) {
    std::vector<LocationId> ids;
    for (const Location& l : ds.locations()) ids.push_back(l.id);
    try {
      masked = split_ids(ids, a.mask_fraction, *a.mask_seed).masked_ids;
    } catch (const Error& e) {
      usage(std::string("mask split: ") + e.what());
    }
  } else {
    const std::set<LocationId> trained(ck.observed_ids.begin(), ck.observed_ids.end());
    for (const Location& l : ds.locations()) {
      if (!trained.contains(l.id)) masked.insert(l.id);
    }
    if (masked.empty()) usage("no held-out locations in the data; pass --mask-seed");
  }
  const Holdout split = split_holdout(ds, masked);
  if (split.observed.num_locations() < ck.state.config.model.anchors) {
    usage("too few observed locations for the checkpoint's anchors");
  }

  const Dataset obs = apply_normalization(split.observed, ck.state.norm);
  const Dataset tgt = apply_normalization(split.held_out, ck.state.norm);
  std::vector<GeoPoint> pts;
  std::vector<Matrix> truth;
  AvailabilityMask mask(static_cast<Eigen::Index>(tgt.num_locations()), static_cast<Eigen::Index>(tgt.num_features()));
  for (std::size_t i = 0; i < tgt.num_locations(); ++i) {
    pts.push_back(tgt.location(i).point());
    Matrix y(static_cast<Eigen::Index>(tgt.num_timesteps()), static_cast<Eigen::Index>(tgt.num_features()));
    for (std::size_t f = 0; f < tgt.num_features(); ++f) {
      y.col(static_cast<Eigen::Index>(f)) = tgt.series_vec(i, f);
      mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = tgt.available(i, f);
    }
    truth.push_back(std::move(y));
  }
  if (!mask.any()) usage("held-out locations carry no available readings");

  std::vector<std::pair<std::string, std::vector<Matrix>>> rows;
  try {
    rows.emplace_back("anchorgk", predict_normalized(ck.state, obs, pts));
    for (Baseline b : baselines) rows.emplace_back(baseline_name(b), predict_baseline(b, obs, pts));
  } catch (const std::exception& e) {
    throw Failure{kRuntimeFailure, std::string("evaluation failed: ") + e.what()};
  }

  ensure_dir(a.out);
  const fs::path dir(a.out);
  std::ostringstream csv;
  csv << "method,mae,rmse\n";
  for (const auto& [name, pred] : rows) {
    csv << name << ',' << format_double(mae_metric(pred, truth, mask)) << ','
        << format_double(rmse_loss(pred, truth, mask)) << '\n';
  }
  write_text(dir / "metrics.csv", csv.str());
  out << csv.str();

  if (a.dump) {
    std::ostringstream d;
    d << "method,target_id,t,feature,prediction,truth\n";
    for (const auto& [name, pred] : rows) {
      for (std::size_t k = 0; k < pts.size(); ++k) {
        for (Eigen::Index f = 0; f < truth[k].cols(); ++f) {
          if (!mask(static_cast<Eigen::Index>(k), f)) continue;
          for (Eigen::Index t = 0; t < truth[k].rows(); ++t) {
            d << name << ',' << tgt.location(k).id << ',' << t << ',' << f << ',' << format_double(pred[k](t, f))
              << ',' << format_double(truth[k](t, f)) << '\n';
          }
        }
      }
    }
    write_text(dir / "predictions_dump.csv", d.str());
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 1;
};

struct BenchSweep {
  std::vector<std::size_t> q{5}, u{5}, n{30}, f{3};
  std::size_t timesteps = 50;
  std::size_t epochs = 1;
  std::size_t batches_per_epoch = 4;
  std::uint64_t seed = 1;
};

BenchSweep parse_sweep(const json& j) {
  if (!j.is_object()) usage("config must be a JSON object");
  check_schema(j, kBenchSchema);
  BenchSweep s;
  auto list = [&](const json& v, const std::string& key) {
    if (!v.is_array() || v.empty()) usage("config key '" + key + "': expected a non-empty array");
    std::vector<std::size_t> xs;
    for (const auto& x : v) xs.push_back(checked_size(x, key));
    return xs;
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "schema") continue;
    if (key == "Q") s.q = list(v, key);
    else if (key == "U") s.u = list(v, key);
    else if (key == "N") s.n = list(v, key);
    else if (key == "F") s.f = list(v, key);
    else if (key == "T") s.timesteps = checked_size(v, key);
    else if (key == "epochs") s.epochs = checked_size(v, key);
    else if (key == "batches_per_epoch") s.batches_per_epoch = checked_size(v, key);
    else if (key == "seed") s.seed = checked_size(v, key);
    else usage("unknown config key '" + key + "'");
  }
  if (s.epochs < 1) usage("config key 'epochs': must be >= 1");
  return s;
}

long max_rss_kb() {
  rusage ru{};
  if (getrusage(RUSAGE_SELF, &ru) != 0) return -1;
  return ru.ru_maxrss;
}

int cmd_bench(CLI::App& sub, BenchArgs& a, std::ostream& out) {
  BenchSweep s;
  if (!a.config.empty()) s = parse_sweep(read_json_file(a.config));
  if (sub.get_option("--seed")->count() > 0) s.seed = a.seed;
  ensure_dir(a.out);

  using Clock = std::chrono::steady_clock;
  std::ostringstream csv;
  csv << "Q,U,N,F,T,preprocess_seconds,epoch_seconds,max_rss_kb\n";
  std::size_t rows = 0;
  for (std::size_t n : s.n) {
    for (std::size_t f : s.f) {
      SynthConfig sc;
      sc.locations = n;
      sc.features = f;
      sc.timesteps = s.timesteps;
      sc.seed = s.seed;
      const SynthOutput data = synthesize(sc);
      const Dataset norm = normalize(data.data).first;
      for (std::size_t q : s.q) {
        for (std::size_t u : s.u) {
          TrainConfig tc;
          tc.seed = s.seed;
          tc.epochs = s.epochs;
          tc.batches_per_epoch = s.batches_per_epoch;
          tc.mcmc_every = 0;
          tc.model.anchors = q;
          tc.model.neighbors = u;
          double pre = 0.0, epoch = 0.0;
          try {
            auto t0 = Clock::now();
            const Context ctx = build_context(norm, tc.model);
            pre = std::chrono::duration<double>(Clock::now() - t0).count();
            t0 = Clock::now();
            (void)train(data.data, tc);
            epoch = std::chrono::duration<double>(Clock::now() - t0).count() / static_cast<double>(s.epochs);
          } catch (const std::exception& e) {
            throw Failure{kRuntimeFailure, "bench Q=" + std::to_string(q) + " U=" + std::to_string(u) + " N=" +
                                               std::to_string(n) + " F=" + std::to_string(f) + ": " + e.what()};
          }
          csv << q << ',' << u << ',' << n << ',' << f << ',' << s.timesteps << ',' << format_double(pre) << ','
              << format_double(epoch) << ',' << max_rss_kb() << '\n';
          ++rows;
        }
      }
    }
  }
  write_text(fs::path(a.out) / "bench.csv", csv.str());
  out << "wrote " << rows << " rows to " << (fs::path(a.out) / "bench.csv").string() << "\n";
  return kSuccess;
}

void add_data_flags(CLI::App* sub, DataArgs& a) {
  sub->add_option("--checkpoint", a.checkpoint, "checkpoint JSON from fit")->required();
  sub->add_option("--locations", a.locations, "locations CSV (defaults to the checkpoint's)");
  sub->add_option("--readings", a.readings, "readings CSV (defaults to the checkpoint's)");
  sub->add_option("--out", a.out, "output directory");
  sub->add_option("--config", a.config, "unused; accepted for a uniform surface");
  sub->add_option("--seed", a.seed, "seed");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Anchor-based inductive spatio-temporal kriging"};
  app.name("anchorgk");
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", synth_args.config, "synthesis JSON");
  synth->add_option("--out", synth_args.out, "output directory");
  synth->add_option("--seed", synth_args.seed, "random seed");
  synth->add_option("--n", synth_args.cfg.locations, "number of locations");
  synth->add_option("--t", synth_args.cfg.timesteps, "number of timesteps");
  synth->add_option("--f", synth_args.cfg.features, "number of features");
  synth->add_option("--range-km", synth_args.cfg.range_km, "spatial covariance range in km");
  synth->add_option("--thinning", synth_args.cfg.thinning, "fraction of (location, feature) pairs made unavailable");
  synth->add_option("--noise", synth_args.cfg.noise_std, "observation noise std");
  synth->add_option("--coupling", synth_args.cfg.feature_coupling, "shared-field variance share");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "train a model");
  fit->add_option("--config", fit_args.config, "run configuration JSON");
  fit->add_option("--out", fit_args.out, "output directory");
  fit->add_option("--seed", fit_args.seed, "training seed");
  fit->add_option("--locations", fit_args.locations, "locations CSV");
  fit->add_option("--readings", fit_args.readings, "readings CSV");
  fit->add_option("--epochs", fit_args.epochs, "training epochs");

  PredictArgs predict_args;
  auto* pred = app.add_subcommand("predict", "predict at target coordinates");
  add_data_flags(pred, predict_args);
  pred->add_option("--targets", predict_args.targets, "targets CSV (id,lat,lon)");
  pred->add_option("--heatmap", predict_args.heatmap, "raster of feature i at timestep j: f=<i> t=<j>")->expected(2);
  pred->add_option("--grid", predict_args.grid, "heatmap side length in pixels");

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "score the model and baselines on held-out locations");
  add_data_flags(evaluate, eval_args);
  evaluate->add_option("--mask-seed", eval_args.mask_seed, "draw a fresh masked split with this seed");
  evaluate->add_option("--mask-fraction", eval_args.mask_fraction, "masked fraction with --mask-seed");
  evaluate->add_option("--baselines", eval_args.baselines, "comma list from ok,idw,mean");
  evaluate->add_flag("--dump", eval_args.dump, "also write predictions_dump.csv");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "time preprocessing and training over a sweep");
  bench->add_option("--config", bench_args.config, "sweep JSON");
  bench->add_option("--out", bench_args.out, "output directory");
  bench->add_option("--seed", bench_args.seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kSuccess;
    }
    err << "anchorgk: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (synth->parsed()) return cmd_synth(*synth, synth_args, out);
    if (fit->parsed()) return cmd_fit(*fit, fit_args, out);
    if (pred->parsed()) return cmd_predict(predict_args, out);
    if (evaluate->parsed()) return cmd_evaluate(*evaluate, eval_args, out);
    if (bench->parsed()) return cmd_bench(*bench, bench_args, out);
  } catch (const Failure& f) {
    err << "anchorgk: " << f.message << "\n";
    return f.code;
  } catch (const ConfigError& e) {
    err << "anchorgk: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "anchorgk: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsageError;
}

}  // namespace anchorgk::cli
