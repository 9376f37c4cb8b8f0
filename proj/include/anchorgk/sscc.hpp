#pragma once

// Stratified spatial correlation: anchors, strata, grid cells and the
// per-cell adjacency matrices fed to the graph layer.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "anchorgk/datamodel.hpp"
#include "anchorgk/geometry.hpp"

namespace anchorgk {

struct AnchorSet {
  std::vector<LocationId> anchor_ids;
};

/// Axis-aligned cell in lon/lat degrees (x = lon, y = lat).
struct GridCell {
  BoundingBox bounds;
  GeoPoint center;
};

/// One stratum per (anchor, feature). Member order everywhere is
/// [neighbors..., anchor]; adjacency matrices append the cell node last.
struct Stratum {
  LocationId anchor_id = 0;
  std::size_t feature = 0;
  std::vector<LocationId> neighbor_ids;
  Hull hull;  // lon/lat plane, counter-clockwise
  std::vector<GridCell> cells;
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;

  // Cached from the dataset at construction time.
  std::vector<GeoPoint> member_points;
  Eigen::MatrixXd member_pearson;  // (U+1) x (U+1), unit diagonal

  std::size_t num_neighbors() const { return neighbor_ids.size(); }
  std::size_t num_members() const { return neighbor_ids.size() + 1; }
  std::vector<LocationId> member_ids() const;
};

struct SCParams {
  double lambda = 0.5;   // distance-decay coefficient, (0, 1.6]
  double sigma = 1.0;    // Gaussian bandwidth on diameter-scaled distances
  double epsilon = 0.0;  // proximity sparsity threshold, [0, 1)
  bool apply_density = true;

  static constexpr double kLambdaMax = 1.6;
  void validate() const;
  friend bool operator==(const SCParams&, const SCParams&) = default;
};

struct SpatialCorrelation {
  Eigen::MatrixXd matrix;
  LocationId anchor_id = 0;
  std::size_t feature = 0;
  std::size_t cell_index = 0;
};

/// The q locations with most available features; ties by ascending id.
AnchorSet select_anchors(const Dataset& ds, std::size_t q);

/// Top-k Pearson-correlated locations (feature f available) for an anchor.
std::vector<LocationId> select_relevant(const Dataset& ds, LocationId anchor, std::size_t f, std::size_t k);

/// rows x cols partition of the hull's bounding box, keeping cells whose
/// centre lies inside the hull; row-major with rows running south to north.
std::vector<GridCell> partition_grid(const Hull& hull, std::size_t rows, std::size_t cols);

/// Ratio of observed mean nearest-neighbour distance to its expectation
/// under complete spatial randomness, 1 / (2 sqrt(n / area)).
double density_factor(std::span<const Point2> points, double area);

/// exp(-D^2 / sigma^2) off the diagonal where that value reaches epsilon.
Eigen::MatrixXd proximity_adjacency(const Eigen::MatrixXd& distances, const SCParams& params);
Eigen::MatrixXd proximity_adjacency(std::span<const GeoPoint> locs, const SCParams& params);

Stratum build_stratum(const Dataset& ds, LocationId anchor, std::size_t f, std::size_t neighbors,
                      std::size_t grid_rows = 4, std::size_t grid_cols = 4);

/// Inputs of the unified adjacency for one cell, all in kilometres.
struct AdjacencyInputs {
  Eigen::MatrixXd pearson;    // (U+1)^2 over members
  Eigen::MatrixXd distances;  // (U+2)^2 over members + cell centre
};

inline constexpr double kMinDistanceKm = 1e-3;

AdjacencyInputs adjacency_inputs(const Stratum& stratum, const GeoPoint& cell_center);

/// Unified correlation matrix over [neighbors..., anchor, cell]. Pairs with
/// non-positive Pearson get 0; the cell row is scaled by alpha when
/// params.apply_density is set; entries whose proximity kernel (on
/// distances scaled by the node-set diameter) falls below epsilon are pruned.
Eigen::MatrixXd unified_adjacency(const AdjacencyInputs& in, const SCParams& params, double alpha);

/// Density factor of a cell: stratum members plus the cell centre, over
/// the hull area, all in a local kilometre projection. 1 for flat hulls.
double cell_density(const Stratum& stratum, const GeoPoint& cell_center);

SpatialCorrelation unified_adjacency(const Stratum& stratum, std::size_t cell_index, const SCParams& params,
                                     double alpha);
SpatialCorrelation unified_adjacency(const Stratum& stratum, std::size_t cell_index, const SCParams& params);

bool stratum_contains(const Stratum& stratum, const GeoPoint& p);

/// Cell whose bounds contain p, else the cell with the nearest centre.
std::size_t locate_cell(const Stratum& stratum, const GeoPoint& p);

/// Grows the hull to cover target and re-partitions the grid. Identity when
/// the target is already inside.
Stratum extend_for_outside_target(const Stratum& stratum, const GeoPoint& target);

using ParamScore = std::function<double(const SCParams&)>;

struct McmcOptions {
  double relative_step = 0.05;
  double temperature = 0.05;
};

/// Metropolis-Hastings random walk over (lambda, sigma, epsilon). Returns the
/// best-scoring visited state, the input included.
SCParams mcmc_update(const SCParams& params, const ParamScore& score, std::size_t steps, std::uint64_t seed,
                     const McmcOptions& opts = {});

std::string stratum_to_json(const Stratum& s);
Stratum stratum_from_json(const std::string& text);
std::string correlation_to_json(const SpatialCorrelation& c);

}  // namespace anchorgk
