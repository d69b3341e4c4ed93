#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "pillarmamba/eval.hpp"
#include "pillarmamba/io.hpp"
#include "pillarmamba/model.hpp"

namespace pillarmamba {

enum class OptimizerKind { sgd, momentum, adam };

struct TrainConfig {
  int steps = 300;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 2e-3;
  double momentum = 0.9;  // also Adam's beta1
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t init_seed = 0;  // parameter initialization stream
};

/// Scene generator settings shared by every generated scene; counts per class are drawn per scene.
struct DataConfig {
  int min_boxes = 1;
  int max_boxes = 4;
  int points_per_box = 64;
  int background_points = 512;
  double noise_sigma = 0.02;
};

struct RunConfig {
  GridSpec grid;
  ModelConfig model;
  HeadSettings head;
  ApOptions eval;
  TrainConfig train;
  DataConfig data;

  void validate() const;
  /// Scene spec for scene `index` of a run seeded with `seed`.
  SceneSpec scene_spec(std::uint64_t seed, std::uint64_t index = 0) const;
};

/// Strict parse: only "grid" is required, unknown keys and wrong types throw ConfigError naming the key path.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Every field with its effective value; parse_config(config_to_json(c)) reproduces c.
nlohmann::json config_to_json(const RunConfig& config);

std::string to_string(OptimizerKind kind);

}  // namespace pillarmamba
