#include "anchorgk/sscc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "anchorgk/error.hpp"

namespace anchorgk {

std::vector<LocationId> Stratum::member_ids() const {
  std::vector<LocationId> ids = neighbor_ids;
  ids.push_back(anchor_id);
  return ids;
}

void SCParams::validate() const {
  if (!(lambda > 0.0 && lambda <= kLambdaMax)) throw ArgumentError("lambda must lie in (0, 1.6]");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("sigma must be positive");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ArgumentError("epsilon must lie in [0, 1)");
}

AnchorSet select_anchors(const Dataset& ds, std::size_t q) {
  const std::size_t n = ds.num_locations();
  if (q < 1 || q > n) {
    throw ArgumentError("anchor count " + std::to_string(q) + " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    const auto ca = ds.available_count(a), cb = ds.available_count(b);
    if (ca != cb) return ca > cb;
    return ds.location(a).id < ds.location(b).id;
  });
  AnchorSet out;
  for (std::size_t k = 0; k < q; ++k) out.anchor_ids.push_back(ds.location(rows[k]).id);
  return out;
}

std::vector<LocationId> select_relevant(const Dataset& ds, LocationId anchor, std::size_t f, std::size_t k) {
  const std::size_t arow = ds.row_of(anchor);
  if (f >= ds.num_features()) throw ArgumentError("feature index out of range");
  if (!ds.available(arow, f)) throw ArgumentError("feature not available at anchor");

  struct Candidate {
    double r;
    LocationId id;
  };
  std::vector<Candidate> cands;
  const auto anchor_series = ds.series(arow, f);
  for (std::size_t i = 0; i < ds.num_locations(); ++i) {
    if (i == arow || !ds.available(i, f)) continue;
    cands.push_back({pearson(anchor_series, ds.series(i, f)), ds.location(i).id});
  }
  if (cands.size() < k) {
    throw ArgumentError("only " + std::to_string(cands.size()) + " candidates for " + std::to_string(k) +
                        " neighbours");
  }
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end(),
                    [](const Candidate& a, const Candidate& b) {
                      if (a.r != b.r) return a.r > b.r;
                      return a.id < b.id;
                    });
  std::vector<LocationId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(cands[i].id);
  return out;
}

std::vector<GridCell> partition_grid(const Hull& hull, std::size_t rows, std::size_t cols) {
  if (hull.degenerate || hull.vertices.size() < 3) throw GeometryError("cannot grid a degenerate hull");
  if (rows < 1 || cols < 1) throw ArgumentError("grid needs at least one row and column");
  const auto bb = bounding_box(hull.vertices);
  const double dy = bb.height() / static_cast<double>(rows);
  const double dx = bb.width() / static_cast<double>(cols);
  std::vector<GridCell> cells;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      GridCell cell;
      cell.bounds.min_x = bb.min_x + dx * static_cast<double>(c);
      cell.bounds.max_x = c + 1 == cols ? bb.max_x : bb.min_x + dx * static_cast<double>(c + 1);
      cell.bounds.min_y = bb.min_y + dy * static_cast<double>(r);
      cell.bounds.max_y = r + 1 == rows ? bb.max_y : bb.min_y + dy * static_cast<double>(r + 1);
      const Point2 center{(cell.bounds.min_x + cell.bounds.max_x) / 2.0,
                          (cell.bounds.min_y + cell.bounds.max_y) / 2.0};
      if (!contains(hull, center)) continue;
      cell.center = to_geo(center);
      cells.push_back(cell);
    }
  }
  return cells;
}

double density_factor(std::span<const Point2> points, double area) {
  const std::size_t n = points.size();
  if (n < 2) throw ArgumentError("density factor needs at least 2 points");
  if (!(area > 0.0)) throw ArgumentError("density factor needs a positive area");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      best = std::min(best, std::hypot(points[i].x - points[j].x, points[i].y - points[j].y));
    }
    sum += best;
  }
  const double r_obs = sum / static_cast<double>(n);
  if (r_obs <= 0.0) throw GeometryError("density factor undefined: all points coincide");
  const double r_exp = 1.0 / (2.0 * std::sqrt(static_cast<double>(n) / area));
  return r_obs / r_exp;
}

Eigen::MatrixXd proximity_adjacency(const Eigen::MatrixXd& d, const SCParams& params) {
  if (d.rows() != d.cols()) throw ShapeError("distance matrix must be square, got " + shape_string(d.rows(), d.cols()));
  const Eigen::Index n = d.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  const double s2 = params.sigma * params.sigma;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double v = std::exp(-d(i, j) * d(i, j) / s2);
      if (v >= params.epsilon) a(i, j) = v;
    }
  }
  return a;
}

Eigen::MatrixXd proximity_adjacency(std::span<const GeoPoint> locs, const SCParams& params) {
  const auto n = static_cast<Eigen::Index>(locs.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = haversine_km(locs[i], locs[j]);
  }
  return proximity_adjacency(d, params);
}

namespace {

// Degenerate member sets (fewer than three distinct or collinear points) get
// a thin rectangle around their extent so that gridding stays defined.
Hull stratum_hull(std::span<const Point2> pts) {
  if (pts.size() >= 3) {
    Hull h = build_hull(pts);
    if (!h.degenerate) return h;
  }
  auto bb = bounding_box(pts);
  const double pad = 1e-4 * std::max({1.0, bb.width(), bb.height()});
  const Point2 corners[4] = {{bb.min_x - pad, bb.min_y - pad},
                             {bb.max_x + pad, bb.min_y - pad},
                             {bb.max_x + pad, bb.max_y + pad},
                             {bb.min_x - pad, bb.max_y + pad}};
  return build_hull(corners);
}

std::vector<Point2> hull_points_for(const Stratum& s) {
  std::vector<Point2> pts;
  for (const auto& g : s.member_points) pts.push_back(to_plane(g));
  return pts;
}

}  // namespace

Stratum build_stratum(const Dataset& ds, LocationId anchor, std::size_t f, std::size_t neighbors,
                      std::size_t grid_rows, std::size_t grid_cols) {
  Stratum s;
  s.anchor_id = anchor;
  s.feature = f;
  s.grid_rows = grid_rows;
  s.grid_cols = grid_cols;
  s.neighbor_ids = select_relevant(ds, anchor, f, neighbors);

  const auto ids = s.member_ids();
  std::vector<std::size_t> rows;
  for (auto id : ids) {
    rows.push_back(ds.row_of(id));
    s.member_points.push_back(ds.location(rows.back()).point());
  }
  const auto m = static_cast<Eigen::Index>(ids.size());
  s.member_pearson = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      s.member_pearson(i, j) = s.member_pearson(j, i) = pearson(ds.series(rows[i], f), ds.series(rows[j], f));
    }
  }
  s.hull = stratum_hull(hull_points_for(s));
  s.cells = partition_grid(s.hull, grid_rows, grid_cols);
  return s;
}

AdjacencyInputs adjacency_inputs(const Stratum& s, const GeoPoint& cell_center) {
  AdjacencyInputs in;
  in.pearson = s.member_pearson;
  const auto m = static_cast<Eigen::Index>(s.num_members());
  in.distances = Eigen::MatrixXd::Zero(m + 1, m + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      in.distances(i, j) = in.distances(j, i) = haversine_km(s.member_points[i], s.member_points[j]);
    }
    in.distances(i, m) = in.distances(m, i) = haversine_km(s.member_points[i], cell_center);
  }
  return in;
}

Eigen::MatrixXd unified_adjacency(const AdjacencyInputs& in, const SCParams& params, double alpha) {
  const Eigen::Index m = in.pearson.rows();
  if (in.pearson.cols() != m || in.distances.rows() != m + 1 || in.distances.cols() != m + 1) {
    throw ShapeError("adjacency inputs: pearson " + shape_string(in.pearson.rows(), in.pearson.cols()) +
                     " vs distances " + shape_string(in.distances.rows(), in.distances.cols()));
  }
  const double lambda = params.lambda;
  auto dist = [&](Eigen::Index i, Eigen::Index j) { return std::max(in.distances(i, j), kMinDistanceKm); };

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m + 1, m + 1);
  // Known-known: (P / e^{lambda/d})^P, computed in log space.
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      const double p = in.pearson(i, j);
      if (p <= 0.0) continue;
      a(i, j) = std::exp(p * (std::log(p) - lambda / dist(i, j)));
    }
  }
  // Known-cell: sum_j (P_ij e^{lambda/d_jv} / e^{lambda/d_ij})^P_ij. The j = i
  // term vanishes in the limit d_ii -> 0.
  const Eigen::Index v = m;
  for (Eigen::Index i = 0; i < m; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i) continue;
      const double p = in.pearson(i, j);
      if (p <= 0.0) continue;
      acc += std::exp(p * (std::log(p) + lambda / dist(j, v) - lambda / dist(i, j)));
    }
    if (params.apply_density) acc *= alpha;
    a(i, v) = a(v, i) = acc;
  }

  // Proximity pruning on diameter-scaled distances.
  if (params.epsilon > 0.0) {
    const double diameter = in.distances.maxCoeff();
    const Eigen::MatrixXd scaled = diameter > 0.0 ? Eigen::MatrixXd(in.distances / diameter) : in.distances;
    const Eigen::MatrixXd prox = proximity_adjacency(scaled, params);
    for (Eigen::Index i = 0; i <= m; ++i) {
      for (Eigen::Index j = 0; j <= m; ++j) {
        if (i != j && prox(i, j) == 0.0) a(i, j) = 0.0;
      }
    }
  }
  if (!a.allFinite()) throw NumericError("unified adjacency produced a non-finite entry");
  return a;
}

double cell_density(const Stratum& s, const GeoPoint& cell_center) {
  std::vector<GeoPoint> geo = s.member_points;
  geo.push_back(cell_center);
  const auto proj = LocalProjection::around(geo);
  std::vector<Point2> hull_km;
  for (const auto& v : s.hull.vertices) hull_km.push_back(proj(to_geo(v)));
  const double area = polygon_area(hull_km);
  if (!(area > 0.0)) return 1.0;
  const auto pts = proj(geo);
  try {
    return density_factor(pts, area);
  } catch (const GeometryError&) {
    return 1.0;
  }
}

SpatialCorrelation unified_adjacency(const Stratum& s, std::size_t cell_index, const SCParams& params,
                                     double alpha) {
  const auto& cell = s.cells.at(cell_index);
  SpatialCorrelation out;
  out.matrix = unified_adjacency(adjacency_inputs(s, cell.center), params, alpha);
  out.anchor_id = s.anchor_id;
  out.feature = s.feature;
  out.cell_index = cell_index;
  return out;
}

SpatialCorrelation unified_adjacency(const Stratum& s, std::size_t cell_index, const SCParams& params) {
  return unified_adjacency(s, cell_index, params, cell_density(s, s.cells.at(cell_index).center));
}

bool stratum_contains(const Stratum& s, const GeoPoint& p) { return contains(s.hull, to_plane(p)); }

std::size_t locate_cell(const Stratum& s, const GeoPoint& p) {
  if (s.cells.empty()) throw GeometryError("stratum has no grid cells");
  const Point2 q = to_plane(p);
  for (std::size_t i = 0; i < s.cells.size(); ++i) {
    const auto& b = s.cells[i].bounds;
    if (q.x >= b.min_x && q.x <= b.max_x && q.y >= b.min_y && q.y <= b.max_y) return i;
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.cells.size(); ++i) {
    const Point2 c = to_plane(s.cells[i].center);
    const double d = std::hypot(c.x - q.x, c.y - q.y);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Stratum extend_for_outside_target(const Stratum& s, const GeoPoint& target) {
  if (stratum_contains(s, target)) return s;
  std::vector<Point2> pts = s.hull.vertices;
  pts.push_back(to_plane(target));
  Stratum out = s;
  out.hull = build_hull(pts);
  out.cells = partition_grid(out.hull, s.grid_rows, s.grid_cols);
  return out;
}

// ---------------------------------------------------------------------------
// MCMC refresh of the scalar parameters

namespace {

constexpr double kLambdaMin = 1e-6;
constexpr double kSigmaMin = 1e-3;
constexpr double kSigmaMax = 1e3;
constexpr double kEpsilonMax = 0.999;

double reflect(double x, double lo, double hi) {
  for (int i = 0; i < 8 && (x < lo || x > hi); ++i) {
    if (x < lo) x = 2.0 * lo - x;
    if (x > hi) x = 2.0 * hi - x;
  }
  return std::clamp(x, lo, hi);
}

}  // namespace

SCParams mcmc_update(const SCParams& params, const ParamScore& score, std::size_t steps, std::uint64_t seed,
                     const McmcOptions& opts) {
  if (steps < 1) throw ArgumentError("mcmc needs at least one step");
  params.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SCParams current = params;
  double current_score = score(current);
  if (!std::isfinite(current_score)) current_score = std::numeric_limits<double>::infinity();
  SCParams best = current;
  double best_score = current_score;

  for (std::size_t s = 0; s < steps; ++s) {
    SCParams prop = current;
    // Steps: lambda and epsilon relative to their bounded span, sigma relative to itself.
    prop.lambda = reflect(current.lambda + opts.relative_step * SCParams::kLambdaMax * gauss(rng), kLambdaMin,
                          SCParams::kLambdaMax);
    prop.sigma = reflect(current.sigma + opts.relative_step * current.sigma * gauss(rng), kSigmaMin, kSigmaMax);
    prop.epsilon = reflect(current.epsilon + opts.relative_step * gauss(rng), 0.0, kEpsilonMax);
    const double u = unif(rng);

    const double prop_score = score(prop);
    if (!std::isfinite(prop_score)) continue;
    const double accept = std::isfinite(current_score)
                              ? std::min(1.0, std::exp((current_score - prop_score) / opts.temperature))
                              : 1.0;
    if (u < accept) {
      current = prop;
      current_score = prop_score;
      if (current_score < best_score) {
        best = current;
        best_score = current_score;
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json point_json(const Point2& p) { return nlohmann::json::array({p.x, p.y}); }

}  // namespace

std::string stratum_to_json(const Stratum& s) {
  nlohmann::json j;
  j["anchor_id"] = s.anchor_id;
  j["feature"] = s.feature;
  j["neighbor_ids"] = s.neighbor_ids;
  j["grid"] = {s.grid_rows, s.grid_cols};
  j["hull_degenerate"] = s.hull.degenerate;
  auto& hull = j["hull"] = nlohmann::json::array();
  for (const auto& v : s.hull.vertices) hull.push_back(point_json(v));
  auto& members = j["members"] = nlohmann::json::array();
  for (const auto& g : s.member_points) members.push_back({g.lat, g.lon});
  auto& cells = j["cells"] = nlohmann::json::array();
  for (const auto& c : s.cells) {
    cells.push_back({{"min_lat", c.bounds.min_y},
                     {"max_lat", c.bounds.max_y},
                     {"min_lon", c.bounds.min_x},
                     {"max_lon", c.bounds.max_x},
                     {"center", {c.center.lat, c.center.lon}}});
  }
  auto& rows = j["member_pearson"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.member_pearson.rows(); ++i) {
    std::vector<double> row(s.member_pearson.cols());
    for (Eigen::Index k = 0; k < s.member_pearson.cols(); ++k) row[k] = s.member_pearson(i, k);
    rows.push_back(row);
  }
  return j.dump();
}

Stratum stratum_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Stratum s;
  s.anchor_id = j.at("anchor_id").get<LocationId>();
  s.feature = j.at("feature").get<std::size_t>();
  s.neighbor_ids = j.at("neighbor_ids").get<std::vector<LocationId>>();
  s.grid_rows = j.at("grid").at(0).get<std::size_t>();
  s.grid_cols = j.at("grid").at(1).get<std::size_t>();
  s.hull.degenerate = j.at("hull_degenerate").get<bool>();
  for (const auto& v : j.at("hull")) s.hull.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  for (const auto& m : j.at("members")) s.member_points.push_back({m.at(0).get<double>(), m.at(1).get<double>()});
  for (const auto& c : j.at("cells")) {
    GridCell cell;
    cell.bounds = {c.at("min_lon").get<double>(), c.at("max_lon").get<double>(), c.at("min_lat").get<double>(),
                   c.at("max_lat").get<double>()};
    cell.center = {c.at("center").at(0).get<double>(), c.at("center").at(1).get<double>()};
    s.cells.push_back(cell);
  }
  const auto& rows = j.at("member_pearson");
  const auto m = static_cast<Eigen::Index>(rows.size());
  s.member_pearson.resize(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index k = 0; k < m; ++k) s.member_pearson(i, k) = rows.at(i).at(k).get<double>();
  }
  return s;
}

std::string correlation_to_json(const SpatialCorrelation& c) {
  nlohmann::json j;
  j["anchor_id"] = c.anchor_id;
  j["feature"] = c.feature;
  j["cell_index"] = c.cell_index;
  auto& rows = j["matrix"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < c.matrix.rows(); ++i) {
    std::vector<double> row(c.matrix.cols());
    for (Eigen::Index k = 0; k < c.matrix.cols(); ++k) row[k] = c.matrix(i, k);
    rows.push_back(row);
  }
  return j.dump();
}

}  // namespace anchorgk
