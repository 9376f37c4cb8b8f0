#pragma once

// Glue between the spatial correlation component, the kriging initializers
// and the graph layer: everything needed to predict one target location from
// one set of observed locations.

#include <optional>
#include <vector>

#include "anchorgk/datamodel.hpp"
#include "anchorgk/gll.hpp"
#include "anchorgk/kriging.hpp"
#include "anchorgk/sscc.hpp"

namespace anchorgk {

struct ModelConfig {
  std::size_t anchors = 5;    // Q
  std::size_t neighbors = 5;  // U
  std::size_t grid_rows = 4;
  std::size_t grid_cols = 4;
  std::size_t gcn_hidden = 16;
  std::size_t ffn_hidden = 16;
  std::size_t experts = 4;
  std::size_t expert_hidden = 16;
  double sigma_alpha = 0.1;
  double sigma_beta = 2.0;
  double sigma_kappa = 0.1;
  double process_noise = 1.0;
  double measurement_noise = 1e-2;
  FilterGradient filter_gradient = FilterGradient::StraightThrough;

  GllDims dims(std::size_t features, std::size_t timesteps) const;
  CfeOptions cfe_options(std::size_t features) const;
};

/// SSCC products over one observed set. Strata are slot-major (k * F + f);
/// empty slots mark (anchor, feature) pairs without a stratum.
struct Context {
  Dataset observed;
  AnchorSet anchors;
  std::vector<std::optional<Stratum>> strata;
  std::vector<Variogram> variograms;  // per feature, usable for kriging

  std::size_t num_features() const { return observed.num_features(); }
  const std::optional<Stratum>& stratum(std::size_t slot, std::size_t f) const {
    return strata.at(slot * observed.num_features() + f);
  }
};

Context build_context(Dataset observed, const ModelConfig& cfg);

/// Per-target inputs to the graph layer for fixed SSCC parameters.
struct TargetPlan {
  GeoPoint target;
  Matrix global;  // T x F global kriging
  // Slot-major; the GCN-propagated unknown-node series (T x 1) per stratum.
  std::vector<std::optional<Eigen::VectorXd>> propagated;
  std::vector<std::size_t> active_slots;
};

/// Kriging-only parts of a plan; independent of SCParams.
struct TargetBase {
  GeoPoint target;
  Matrix global;
  std::vector<std::optional<Stratum>> strata;  // extended where needed
  std::vector<std::size_t> cell;               // located cell per slot
  std::vector<std::optional<Eigen::VectorXd>> local;  // x-bar per slot
  std::vector<std::size_t> active_slots;
};

TargetBase prepare_target(const Context& ctx, const GeoPoint& target);
TargetPlan plan_target(const Context& ctx, const TargetBase& base, const SCParams& sc);
TargetPlan plan_target(const Context& ctx, const GeoPoint& target, const SCParams& sc);

/// Prediction T x F for one target on the tape.
Var forward_target(diff::Tape& tape, const GllVars& vars, const TargetPlan& plan, const ModelConfig& cfg,
                   std::size_t features);

}  // namespace anchorgk
