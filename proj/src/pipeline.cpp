#include "anchorgk/pipeline.hpp"

#include "anchorgk/error.hpp"

namespace anchorgk {

GllDims ModelConfig::dims(std::size_t features, std::size_t timesteps) const {
  GllDims d;
  d.slots = anchors;
  d.features = features;
  d.timesteps = timesteps;
  d.gcn_hidden = gcn_hidden;
  d.ffn_hidden = ffn_hidden;
  d.experts = experts;
  d.expert_hidden = expert_hidden;
  return d;
}

CfeOptions ModelConfig::cfe_options(std::size_t features) const {
  CfeOptions o;
  o.sigma = SigmaConfig{sigma_alpha, sigma_beta, sigma_kappa, features};
  const auto j = static_cast<Eigen::Index>(features);
  o.process_noise = process_noise * Matrix::Identity(j, j);
  o.measurement_noise = measurement_noise * Matrix::Identity(j, j);
  o.gradient = filter_gradient;
  return o;
}

Context build_context(Dataset observed, const ModelConfig& cfg) {
  Context ctx;
  ctx.observed = std::move(observed);
  const Dataset& ds = ctx.observed;
  const std::size_t F = ds.num_features();
  if (ds.num_locations() < cfg.anchors) {
    throw ArgumentError("observed set has " + std::to_string(ds.num_locations()) + " locations for " +
                        std::to_string(cfg.anchors) + " anchors");
  }
  ctx.anchors = select_anchors(ds, cfg.anchors);
  ctx.strata.resize(cfg.anchors * F);
  for (std::size_t k = 0; k < cfg.anchors; ++k) {
    const LocationId anchor = ctx.anchors.anchor_ids[k];
    const std::size_t row = ds.row_of(anchor);
    for (std::size_t f = 0; f < F; ++f) {
      if (!ds.available(row, f)) continue;
      std::size_t candidates = 0;
      for (std::size_t i = 0; i < ds.num_locations(); ++i) candidates += (i != row && ds.available(i, f)) ? 1 : 0;
      // Too few co-observed locations for a full neighbour set: no stratum.
      if (candidates < cfg.neighbors) continue;
      ctx.strata[k * F + f] = build_stratum(ds, anchor, f, cfg.neighbors, cfg.grid_rows, cfg.grid_cols);
    }
  }
  for (std::size_t f = 0; f < F; ++f) {
    Variogram vg = fit_feature_variogram(ds, f);
    if (vg.degenerate) vg.sill = 1.0;  // weights are invariant to sill; keep the system well scaled
    ctx.variograms.push_back(vg);
  }
  return ctx;
}

TargetBase prepare_target(const Context& ctx, const GeoPoint& target) {
  const Dataset& ds = ctx.observed;
  const std::size_t F = ds.num_features();
  const auto T = static_cast<Eigen::Index>(ds.num_timesteps());

  TargetBase base;
  base.target = target;
  base.global = Matrix::Zero(T, static_cast<Eigen::Index>(F));
  for (std::size_t f = 0; f < F; ++f) {
    bool any = false;
    for (std::size_t i = 0; i < ds.num_locations() && !any; ++i) any = ds.available(i, f);
    if (any) base.global.col(static_cast<Eigen::Index>(f)) = global_kriging(ds, f, ctx.variograms[f], target);
  }

  const std::size_t slots = ctx.strata.size() / std::max<std::size_t>(F, 1);
  std::vector<bool> inside(slots, false), present(slots, false);
  for (std::size_t k = 0; k < slots; ++k) {
    for (std::size_t f = 0; f < F; ++f) {
      const auto& s = ctx.strata[k * F + f];
      if (!s) continue;
      present[k] = true;
      if (stratum_contains(*s, target)) inside[k] = true;
    }
  }
  for (std::size_t k = 0; k < slots; ++k) {
    if (inside[k]) base.active_slots.push_back(k);
  }
  if (base.active_slots.empty()) {
    for (std::size_t k = 0; k < slots; ++k) {
      if (present[k]) base.active_slots.push_back(k);
    }
  }

  base.strata.resize(ctx.strata.size());
  base.cell.assign(ctx.strata.size(), 0);
  base.local.resize(ctx.strata.size());
  for (std::size_t k : base.active_slots) {
    for (std::size_t f = 0; f < F; ++f) {
      const auto& s = ctx.strata[k * F + f];
      if (!s) continue;
      const std::size_t idx = k * F + f;
      base.strata[idx] = extend_for_outside_target(*s, target);
      base.cell[idx] = locate_cell(*base.strata[idx], target);
      base.local[idx] = local_kriging(ds, *base.strata[idx], ctx.variograms[f], target);
    }
  }
  return base;
}

TargetPlan plan_target(const Context& ctx, const TargetBase& base, const SCParams& sc) {
  const Dataset& ds = ctx.observed;
  TargetPlan plan;
  plan.target = base.target;
  plan.global = base.global;
  plan.active_slots = base.active_slots;
  plan.propagated.resize(base.strata.size());
  for (std::size_t idx = 0; idx < base.strata.size(); ++idx) {
    if (!base.strata[idx]) continue;
    const Stratum& s = *base.strata[idx];
    const SpatialCorrelation corr = unified_adjacency(s, base.cell[idx], sc);
    // Node-major inputs: (U+2) x T with the kriged target series last.
    const Matrix x = build_augmented(ds, s, *base.local[idx]).transpose();
    const Matrix a_norm = normalized_adjacency(corr.matrix);
    plan.propagated[idx] = (a_norm.row(a_norm.rows() - 1) * x).transpose();
  }
  return plan;
}

TargetPlan plan_target(const Context& ctx, const GeoPoint& target, const SCParams& sc) {
  return plan_target(ctx, prepare_target(ctx, target), sc);
}

Var forward_target(diff::Tape& tape, const GllVars& vars, const TargetPlan& plan, const ModelConfig& cfg,
                   std::size_t features) {
  const auto T = plan.global.rows();
  const auto hidden = static_cast<Eigen::Index>(cfg.gcn_hidden);
  const CfeOptions opts = cfg.cfe_options(features);
  Var global = tape.constant(plan.global);

  std::vector<Var> outputs;
  for (std::size_t k : plan.active_slots) {
    std::vector<Var> parts;
    for (std::size_t f = 0; f < features; ++f) {
      const std::size_t idx = k * features + f;
      if (!plan.propagated[idx]) {
        parts.push_back(tape.constant(Matrix::Zero(T, hidden)));
        continue;
      }
      // GCN with one input channel per timestep; only the unknown node's row is consumed.
      const auto& [w, b] = vars.gcn.at(idx);
      parts.push_back(diff::add(diff::matmul(tape.constant(*plan.propagated[idx]), w), b));
    }
    Var cat = diff::concat_cols(parts);
    outputs.push_back(cfe_forward(cat, global, vars, opts));
  }
  if (outputs.empty()) throw StateError("no stratum available for target");
  return moe_forward(outputs, vars);
}

}  // namespace anchorgk
