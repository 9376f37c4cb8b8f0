#include "anchorgk/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>

#include "anchorgk/error.hpp"

namespace anchorgk {

namespace {

template <class Fn>
double pooled(std::span<const Matrix> pred, std::span<const Matrix> truth, const AvailabilityMask& mask, Fn&& cell) {
  if (pred.size() != truth.size()) {
    throw ShapeError("metric: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(truth.size()) +
                     " truths");
  }
  if (static_cast<std::size_t>(mask.rows()) != pred.size()) {
    throw ShapeError("metric: mask has " + std::to_string(mask.rows()) + " rows for " + std::to_string(pred.size()) +
                     " locations");
  }
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t m = 0; m < pred.size(); ++m) {
    const Matrix& p = pred[m];
    const Matrix& y = truth[m];
    if (p.rows() != y.rows() || p.cols() != y.cols() || p.cols() != mask.cols()) {
      throw ShapeError("metric: prediction " + shape_string(p.rows(), p.cols()) + " vs truth " +
                       shape_string(y.rows(), y.cols()));
    }
    for (Eigen::Index f = 0; f < p.cols(); ++f) {
      if (!mask(static_cast<Eigen::Index>(m), f)) continue;
      for (Eigen::Index t = 0; t < p.rows(); ++t) acc += cell(p(t, f) - y(t, f));
      count += static_cast<std::size_t>(p.rows());
    }
  }
  if (count == 0) throw ArgumentError("metric: no included cells");
  return acc / static_cast<double>(count);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Sample {
  std::shared_ptr<const Context> ctx;
  TargetBase base;
  Matrix truth;                 // T x F, normalized
  std::vector<bool> available;  // per feature
};

Matrix truth_of(const Dataset& ds, std::size_t row) {
  Matrix y(static_cast<Eigen::Index>(ds.num_timesteps()), static_cast<Eigen::Index>(ds.num_features()));
  for (std::size_t f = 0; f < ds.num_features(); ++f) y.col(static_cast<Eigen::Index>(f)) = ds.series_vec(row, f);
  return y;
}

AvailabilityMask mask_of(std::span<const Sample* const> samples, std::size_t features) {
  AvailabilityMask mask(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(features));
  for (std::size_t m = 0; m < samples.size(); ++m) {
    for (std::size_t f = 0; f < features; ++f) {
      mask(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(f)) = samples[m]->available[f];
    }
  }
  return mask;
}

bool any_cell(const AvailabilityMask& mask) { return mask.size() > 0 && mask.any(); }

/// Prediction for one sample with frozen parameters.
Matrix infer(const GllParams& params, const ModelConfig& model, const Sample& s, const SCParams& sc) {
  diff::Tape tape;
  GllVars vars = bind(tape, params, false);
  const TargetPlan plan = plan_target(*s.ctx, s.base, sc);
  return forward_target(tape, vars, plan, model, s.ctx->num_features()).value();
}

}  // namespace

double rmse_loss(std::span<const Matrix> pred, std::span<const Matrix> truth, const AvailabilityMask& mask) {
  return std::sqrt(pooled(pred, truth, mask, [](double e) { return e * e; }));
}

double mae_metric(std::span<const Matrix> pred, std::span<const Matrix> truth, const AvailabilityMask& mask) {
  return pooled(pred, truth, mask, [](double e) { return std::abs(e); });
}

bool adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameters vs " + std::to_string(grads.size()) +
                     " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw ShapeError("adam: parameter " + std::to_string(i) + " is " +
                       shape_string(params[i]->rows(), params[i]->cols()) + " but gradient is " +
                       shape_string(grads[i].rows(), grads[i].cols()));
    }
    if (!grads[i].allFinite()) {
      ++state.skipped;
      return false;
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (Matrix* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = AdamState::kBeta1 * state.m[i] + (1.0 - AdamState::kBeta1) * grads[i];
    state.v[i] = AdamState::kBeta2 * state.v[i] + (1.0 - AdamState::kBeta2) * grads[i].cwiseProduct(grads[i]);
    const Matrix m_hat = state.m[i] / c1;
    const Matrix v_hat = state.v[i] / c2;
    *params[i] -= lr * m_hat.cwiseQuotient((v_hat.array().sqrt() + AdamState::kEpsilon).matrix());
  }
  return true;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) throw ConfigError("mask_fraction must lie in (0, 1)");
  if (batches_per_epoch < 1) throw ConfigError("batches_per_epoch must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
  if (model.anchors < 1) throw ConfigError("anchors must be >= 1");
  if (model.neighbors < 1) throw ConfigError("neighbors must be >= 1");
  if (model.grid_rows < 1 || model.grid_cols < 1) throw ConfigError("grid rows/cols must be >= 1");
  if (model.gcn_hidden < 1 || model.ffn_hidden < 1 || model.experts < 1 || model.expert_hidden < 1) {
    throw ConfigError("layer widths must be >= 1");
  }
  if (!(model.process_noise > 0.0) || !(model.measurement_noise > 0.0)) {
    throw ConfigError("process_noise and measurement_noise must be > 0");
  }
  try {
    sc.validate();
    SigmaConfig{model.sigma_alpha, model.sigma_beta, model.sigma_kappa, 1}.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

TrainResult train(const Dataset& raw, const TrainConfig& cfg) {
  cfg.validate();
  raw.validate();
  const std::size_t F = raw.num_features();
  const std::size_t T = raw.num_timesteps();

  TrainResult result;
  TrainState& st = result.state;
  TrainReport& report = result.report;
  st.config = cfg;
  st.norm = compute_norm_stats(raw);
  st.params = init_gll(cfg.model.dims(F, T), cfg.seed);
  st.sc = cfg.sc;
  const Dataset ds = apply_normalization(raw, st.norm);

  std::vector<LocationId> ids;
  for (const Location& l : ds.locations()) ids.push_back(l.id);

  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eed5eed5eedULL);
  const std::uint64_t fixed_seed = rng();

  auto named = st.params.named();
  std::vector<Matrix*> param_ptrs;
  for (auto& [name, p] : named) param_ptrs.push_back(p);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochReport er;
    er.epoch = epoch + 1;
    std::vector<double> batch_losses;
    std::vector<Matrix> all_pred, all_truth;
    std::vector<const Sample*> all_samples;
    std::vector<std::unique_ptr<Sample>> keep;
    std::vector<const Sample*> validation;

    try {
      for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
        const std::uint64_t split_seed = cfg.fixed_mask ? fixed_seed : rng();
        const MaskSplit split = split_ids(ids, cfg.mask_fraction, split_seed);

        auto t0 = Clock::now();
        std::vector<std::size_t> rows;
        for (LocationId id : split.observed_ids) rows.push_back(ds.row_of(id));
        auto ctx = std::make_shared<const Context>(build_context(ds.subset(rows), cfg.model));
        er.seconds.sscc += seconds_since(t0);

        std::vector<LocationId> masked(split.masked_ids.begin(), split.masked_ids.end());
        std::shuffle(masked.begin(), masked.end(), rng);
        std::size_t n_val = 0;
        if (cfg.validation_fraction > 0.0 && masked.size() >= 2) {
          n_val = std::max<std::size_t>(
              1, static_cast<std::size_t>(std::ceil(cfg.validation_fraction * static_cast<double>(masked.size()) - 1e-9)));
          n_val = std::min(n_val, masked.size() - 1);
        }

        std::vector<const Sample*> fit_samples;
        for (std::size_t i = 0; i < masked.size(); ++i) {
          const std::size_t row = ds.row_of(masked[i]);
          auto s = std::make_unique<Sample>();
          s->ctx = ctx;
          t0 = Clock::now();
          s->base = prepare_target(*ctx, ds.location(row).point());
          er.seconds.kriging += seconds_since(t0);
          s->truth = truth_of(ds, row);
          for (std::size_t f = 0; f < F; ++f) s->available.push_back(ds.available(row, f));
          (i < n_val ? validation : fit_samples).push_back(s.get());
          keep.push_back(std::move(s));
        }

        // Validation targets: frozen forward for metrics only.
        for (std::size_t i = 0; i < n_val; ++i) {
          const Sample* s = validation[validation.size() - n_val + i];
          t0 = Clock::now();
          all_pred.push_back(infer(st.params, cfg.model, *s, st.sc));
          er.seconds.gll += seconds_since(t0);
          all_truth.push_back(s->truth);
          all_samples.push_back(s);
        }

        const AvailabilityMask fit_mask = mask_of(fit_samples, F);
        if (!any_cell(fit_mask)) continue;

        diff::Tape tape;
        GllVars vars = bind(tape, st.params, true);
        Var sq_sum;
        bool first = true;
        std::size_t cells = 0;
        for (const Sample* s : fit_samples) {
          t0 = Clock::now();
          const TargetPlan plan = plan_target(*s->ctx, s->base, st.sc);
          er.seconds.sscc += seconds_since(t0);
          t0 = Clock::now();
          Var pred = forward_target(tape, vars, plan, cfg.model, F);
          Matrix weight = Matrix::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(F));
          for (std::size_t f = 0; f < F; ++f) {
            if (s->available[f]) {
              weight.col(static_cast<Eigen::Index>(f)).setOnes();
              cells += T;
            }
          }
          Var err = diff::mul(diff::sub(pred, tape.constant(s->truth)), tape.constant(weight));
          Var term = diff::sum(diff::square(err));
          sq_sum = first ? term : diff::add(sq_sum, term);
          first = false;
          er.seconds.gll += seconds_since(t0);
          all_pred.push_back(pred.value());
          all_truth.push_back(s->truth);
          all_samples.push_back(s);
        }
        Var loss = diff::sqrt_scalar(diff::scale(sq_sum, 1.0 / static_cast<double>(cells)));

        t0 = Clock::now();
        tape.backward(loss);
        std::vector<Matrix> grads;
        for (std::size_t i = 0; i < vars.flat.size(); ++i) {
          // Parameters outside this batch's graph (inactive slots) get zero gradients.
          const Matrix& g = vars.flat[i].grad();
          grads.push_back(g.size() == 0 ? Matrix::Zero(param_ptrs[i]->rows(), param_ptrs[i]->cols()) : g);
        }
        if (!adam_step(param_ptrs, grads, st.adam, cfg.learning_rate)) {
          report.warnings.push_back("epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b + 1) +
                                    ": non-finite gradient, step skipped");
        }
        er.seconds.backward += seconds_since(t0);
        if (std::isfinite(loss.scalar())) batch_losses.push_back(loss.scalar());
      }

      if (batch_losses.empty()) throw NumericError("no finite batch loss");
      double sum = 0.0;
      for (double l : batch_losses) sum += l;
      er.loss = sum / static_cast<double>(batch_losses.size());
      const AvailabilityMask mask = mask_of(all_samples, F);
      er.rmse = rmse_loss(all_pred, all_truth, mask);
      er.mae = mae_metric(all_pred, all_truth, mask);

      if (cfg.mcmc_every > 0 && (epoch + 1) % cfg.mcmc_every == 0 && cfg.mcmc_steps > 0) {
        std::vector<const Sample*> scored;
        for (const Sample* s : validation) {
          if (std::find(s->available.begin(), s->available.end(), true) != s->available.end()) scored.push_back(s);
        }
        if (!scored.empty()) {
          const AvailabilityMask vmask = mask_of(scored, F);
          std::vector<Matrix> vtruth;
          for (const Sample* s : scored) vtruth.push_back(s->truth);
          const ParamScore score = [&](const SCParams& sc) {
            std::vector<Matrix> vpred;
            for (const Sample* s : scored) vpred.push_back(infer(st.params, cfg.model, *s, sc));
            return rmse_loss(vpred, vtruth, vmask);
          };
          auto t0 = Clock::now();
          st.sc = mcmc_update(st.sc, score, cfg.mcmc_steps, rng());
          er.seconds.sscc += seconds_since(t0);
        }
      }
    } catch (const Error& e) {
      throw Error("epoch " + std::to_string(epoch + 1) + ": " + e.what());
    }

    er.sc = st.sc;
    st.loss_history.push_back(er.loss);
    report.epochs.push_back(er);
    st.epochs_completed = epoch + 1;
  }

  report.skipped_steps = st.adam.skipped;
  std::ostringstream rs;
  rs << rng;
  st.rng_state = rs.str();
  return result;
}

std::vector<Matrix> predict_normalized(const TrainState& state, const Dataset& observed,
                                       std::span<const GeoPoint> targets) {
  if (!state.trained()) throw StateError("predict called on an untrained state");
  if (observed.num_features() != state.params.dims.features ||
      observed.num_timesteps() != state.params.dims.timesteps) {
    throw ShapeError("observed data is T=" + std::to_string(observed.num_timesteps()) +
                     ", F=" + std::to_string(observed.num_features()) + " but the model expects T=" +
                     std::to_string(state.params.dims.timesteps) + ", F=" + std::to_string(state.params.dims.features));
  }
  const Context ctx = build_context(observed, state.config.model);
  std::vector<Matrix> out;
  out.reserve(targets.size());
  for (const GeoPoint& target : targets) {
    diff::Tape tape;
    GllVars vars = bind(tape, state.params, false);
    const TargetPlan plan = plan_target(ctx, target, state.sc);
    Matrix y = forward_target(tape, vars, plan, state.config.model, observed.num_features()).value();
    if (!y.allFinite()) throw NumericError("non-finite prediction");
    out.push_back(std::move(y));
  }
  return out;
}

std::vector<Matrix> predict(const TrainState& state, const Dataset& observed, std::span<const GeoPoint> targets) {
  if (!state.trained()) throw StateError("predict called on an untrained state");
  std::vector<Matrix> out = predict_normalized(state, apply_normalization(observed, state.norm), targets);
  for (Matrix& y : out) {
    for (Eigen::Index f = 0; f < y.cols(); ++f) {
      const auto fi = static_cast<std::size_t>(f);
      y.col(f) = (y.col(f).array() * state.norm.std[fi] + state.norm.mean[fi]).matrix();
    }
  }
  return out;
}

}  // namespace anchorgk
