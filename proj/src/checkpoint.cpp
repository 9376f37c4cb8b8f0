#include "anchorgk/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "anchorgk/error.hpp"

namespace anchorgk {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw ConfigError("matrix " + shape_string(rows, cols) + " has " + std::to_string(data.size()) + " entries");
  }
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
  }
  return m;
}

json to_json(const SCParams& sc) {
  return json{{"lambda", sc.lambda}, {"sigma", sc.sigma}, {"epsilon", sc.epsilon}, {"apply_density", sc.apply_density}};
}

namespace {

const char* gradient_name(FilterGradient g) {
  return g == FilterGradient::StraightThrough ? "straight_through" : "through_filter";
}

FilterGradient parse_gradient(const std::string& s) {
  if (s == "straight_through") return FilterGradient::StraightThrough;
  if (s == "through_filter") return FilterGradient::ThroughFilter;
  throw ConfigError("filter_gradient: expected \"straight_through\" or \"through_filter\", got \"" + s + "\"");
}

template <class T>
T field(const json& obj, const std::string& key) {
  try {
    const json& v = obj.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          throw ConfigError("expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("expected a number");
    } else {
      if (!v.is_string()) throw ConfigError("expected a string");
    }
    return v.get<T>();
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace

json to_json(const ModelConfig& m) {
  return json{{"anchors", m.anchors},
              {"neighbors", m.neighbors},
              {"grid_rows", m.grid_rows},
              {"grid_cols", m.grid_cols},
              {"gcn_hidden", m.gcn_hidden},
              {"ffn_hidden", m.ffn_hidden},
              {"experts", m.experts},
              {"expert_hidden", m.expert_hidden},
              {"sigma_alpha", m.sigma_alpha},
              {"sigma_beta", m.sigma_beta},
              {"sigma_kappa", m.sigma_kappa},
              {"process_noise", m.process_noise},
              {"measurement_noise", m.measurement_noise},
              {"filter_gradient", gradient_name(m.filter_gradient)}};
}

json to_json(const TrainConfig& cfg) {
  json j = to_json(cfg.model);
  j.update(to_json(cfg.sc));
  j["epochs"] = cfg.epochs;
  j["learning_rate"] = cfg.learning_rate;
  j["mask_fraction"] = cfg.mask_fraction;
  j["seed"] = cfg.seed;
  j["batches_per_epoch"] = cfg.batches_per_epoch;
  j["mcmc_every"] = cfg.mcmc_every;
  j["mcmc_steps"] = cfg.mcmc_steps;
  j["validation_fraction"] = cfg.validation_fraction;
  j["fixed_mask"] = cfg.fixed_mask;
  return j;
}

void merge_train_config(const json& obj, TrainConfig& cfg) {
  if (!obj.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (key == "epochs") cfg.epochs = field<std::size_t>(obj, key);
    else if (key == "learning_rate") cfg.learning_rate = field<double>(obj, key);
    else if (key == "mask_fraction") cfg.mask_fraction = field<double>(obj, key);
    else if (key == "seed") cfg.seed = field<std::uint64_t>(obj, key);
    else if (key == "batches_per_epoch") cfg.batches_per_epoch = field<std::size_t>(obj, key);
    else if (key == "mcmc_every") cfg.mcmc_every = field<std::size_t>(obj, key);
    else if (key == "mcmc_steps") cfg.mcmc_steps = field<std::size_t>(obj, key);
    else if (key == "validation_fraction") cfg.validation_fraction = field<double>(obj, key);
    else if (key == "fixed_mask") cfg.fixed_mask = field<bool>(obj, key);
    else if (key == "anchors") cfg.model.anchors = field<std::size_t>(obj, key);
    else if (key == "neighbors") cfg.model.neighbors = field<std::size_t>(obj, key);
    else if (key == "grid_rows") cfg.model.grid_rows = field<std::size_t>(obj, key);
    else if (key == "grid_cols") cfg.model.grid_cols = field<std::size_t>(obj, key);
    else if (key == "gcn_hidden") cfg.model.gcn_hidden = field<std::size_t>(obj, key);
    else if (key == "ffn_hidden") cfg.model.ffn_hidden = field<std::size_t>(obj, key);
    else if (key == "experts") cfg.model.experts = field<std::size_t>(obj, key);
    else if (key == "expert_hidden") cfg.model.expert_hidden = field<std::size_t>(obj, key);
    else if (key == "sigma_alpha") cfg.model.sigma_alpha = field<double>(obj, key);
    else if (key == "sigma_beta") cfg.model.sigma_beta = field<double>(obj, key);
    else if (key == "sigma_kappa") cfg.model.sigma_kappa = field<double>(obj, key);
    else if (key == "process_noise") cfg.model.process_noise = field<double>(obj, key);
    else if (key == "measurement_noise") cfg.model.measurement_noise = field<double>(obj, key);
    else if (key == "filter_gradient") cfg.model.filter_gradient = parse_gradient(field<std::string>(obj, key));
    else if (key == "lambda") cfg.sc.lambda = field<double>(obj, key);
    else if (key == "sigma") cfg.sc.sigma = field<double>(obj, key);
    else if (key == "epsilon") cfg.sc.epsilon = field<double>(obj, key);
    else if (key == "apply_density") cfg.sc.apply_density = field<bool>(obj, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  const TrainState& st = ckpt.state;
  json params = json::object();
  for (const auto& [name, m] : st.params.named()) params[name] = matrix_to_json(*m);
  json j{{"schema", kCheckpointSchema},
         {"config", to_json(st.config)},
         {"dims", {{"features", st.params.dims.features}, {"timesteps", st.params.dims.timesteps}}},
         {"norm", {{"mean", st.norm.mean}, {"std", st.norm.std}}},
         {"sc", to_json(st.sc)},
         {"params", std::move(params)},
         {"epochs_completed", st.epochs_completed},
         {"loss_history", st.loss_history},
         {"observed_ids", ckpt.observed_ids},
         {"data", {{"locations", ckpt.locations_path}, {"readings", ckpt.readings_path}}}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema") || j["schema"] != kCheckpointSchema) {
    throw ConfigError(std::string("checkpoint schema mismatch: expected ") + kCheckpointSchema);
  }
  Checkpoint ck;
  TrainState& st = ck.state;
  try {
    merge_train_config(j.at("config"), st.config);
    st.config.validate();
    const json& sc = j.at("sc");
    st.sc.lambda = sc.at("lambda").get<double>();
    st.sc.sigma = sc.at("sigma").get<double>();
    st.sc.epsilon = sc.at("epsilon").get<double>();
    st.sc.apply_density = sc.at("apply_density").get<bool>();
    st.norm.mean = j.at("norm").at("mean").get<std::vector<double>>();
    st.norm.std = j.at("norm").at("std").get<std::vector<double>>();
    const std::size_t F = j.at("dims").at("features").get<std::size_t>();
    const std::size_t T = j.at("dims").at("timesteps").get<std::size_t>();
    if (st.norm.mean.size() != F || st.norm.std.size() != F) throw ConfigError("norm stats length differs from features");
    st.params = init_gll(st.config.model.dims(F, T), 0);
    const json& params = j.at("params");
    std::size_t seen = 0;
    for (auto& [name, m] : st.params.named()) {
      if (!params.contains(name)) throw ConfigError("checkpoint lacks parameter '" + name + "'");
      Matrix loaded = matrix_from_json(params[name]);
      if (loaded.rows() != m->rows() || loaded.cols() != m->cols()) {
        throw ConfigError("parameter '" + name + "' is " + shape_string(loaded.rows(), loaded.cols()) + ", expected " +
                          shape_string(m->rows(), m->cols()));
      }
      *m = std::move(loaded);
      ++seen;
    }
    if (seen != params.size()) throw ConfigError("checkpoint has unexpected parameters");
    st.epochs_completed = j.at("epochs_completed").get<std::size_t>();
    st.loss_history = j.at("loss_history").get<std::vector<double>>();
    ck.observed_ids = j.at("observed_ids").get<std::vector<LocationId>>();
    ck.locations_path = j.at("data").at("locations").get<std::string>();
    ck.readings_path = j.at("data").at("readings").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << checkpoint_to_string(ckpt);
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

json report_to_json(const TrainReport& report) {
  json epochs = json::array();
  json loss = json::array();
  for (const EpochReport& e : report.epochs) {
    loss.push_back(e.loss);
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", e.loss},
                      {"mae", e.mae},
                      {"rmse", e.rmse},
                      {"sc", to_json(e.sc)},
                      {"seconds",
                       {{"sscc", e.seconds.sscc},
                        {"kriging", e.seconds.kriging},
                        {"gll", e.seconds.gll},
                        {"backward", e.seconds.backward}}}});
  }
  return json{{"loss_history", std::move(loss)},
              {"epochs", std::move(epochs)},
              {"skipped_steps", report.skipped_steps},
              {"warnings", report.warnings}};
}

}  // namespace anchorgk
