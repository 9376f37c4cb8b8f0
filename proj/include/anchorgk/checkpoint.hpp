#pragma once

// JSON (de)serialization of configurations and trained models.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "anchorgk/trainer.hpp"

namespace anchorgk {

inline constexpr const char* kCheckpointSchema = "anchorgk-checkpoint/1";

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SCParams& sc);
nlohmann::json to_json(const ModelConfig& m);
nlohmann::json to_json(const TrainConfig& cfg);

/// Overwrites fields of `cfg` present in `obj`. Unknown keys raise
/// ConfigError naming the key.
void merge_train_config(const nlohmann::json& obj, TrainConfig& cfg);

struct Checkpoint {
  TrainState state;
  std::vector<LocationId> observed_ids;  // locations the model was trained on
  std::string locations_path;
  std::string readings_path;
};

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json report_to_json(const TrainReport& report);

}  // namespace anchorgk
