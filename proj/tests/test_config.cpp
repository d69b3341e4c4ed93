#include "doctest.h"

#include "pillarmamba/config.hpp"

using namespace pillarmamba;
using json = nlohmann::json;

namespace {

// Documented defaults, written out by hand.
const char* kDefaults = R"({
  "grid": {"x_min": 0.0, "x_max": 12.8, "y_min": -6.4, "y_max": 6.4, "z_min": -3.0, "z_max": 1.0, "pillar_size": 0.2},
  "model": {
    "channels": 32, "stages": 4,
    "encoder": {"activation": "relu", "max_points_per_pillar": 32, "max_pillars": 20000},
    "csg": {"enabled": true, "split_fraction": 0.5, "hsb_layers": 2},
    "hsb": {"reduction": 2, "dw_kernel": 3, "local_conv": true, "residual": true, "attention": true,
            "attention_additive": false},
    "ssm": {"state_dim": 8, "directions": 4, "zoh": "exact", "form": "recurrent", "partition": 64, "workers": 1}
  },
  "head": {"heatmap_prior": 0.1, "min_overlap": 0.7, "min_radius": 2, "top_k": 100, "score_threshold": 0.1,
           "regression_weight": 1.0},
  "eval": {"iou": "3d", "recall_points": 40, "thresholds": {"vehicle": 0.5, "pedestrian": 0.25, "cyclist": 0.25}},
  "train": {"steps": 300, "optimizer": "adam", "learning_rate": 0.002, "momentum": 0.9, "beta2": 0.999,
            "epsilon": 1e-8, "init_seed": 0},
  "data": {"min_boxes": 1, "max_boxes": 4, "points_per_box": 64, "background_points": 512, "noise_sigma": 0.02}
})";

std::string error_of(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

json minimal() { return json{{"grid", json::object()}}; }

}  // namespace

TEST_CASE("minimal config echoes the documented defaults") {
  const auto c = parse_config(minimal());
  CHECK(config_to_json(c) == json::parse(kDefaults));
  CHECK(parse_config(json::parse(kDefaults)).model.channels == 32);
  CHECK(config_to_json(parse_config(config_to_json(c))) == config_to_json(c));
}

TEST_CASE("overrides are applied") {
  auto j = minimal();
  j["grid"]["x_max"] = 25.6;
  j["model"]["hsb"]["attention"] = false;
  j["model"]["ssm"]["form"] = "parallel";
  j["eval"]["thresholds"]["cyclist"] = 0.5;
  j["train"]["optimizer"] = "sgd";
  j["train"]["init_seed"] = 12;
  const auto c = parse_config(j);
  CHECK(c.grid.x_extent() == 128);
  CHECK_FALSE(c.model.csg.hsb.attention);
  CHECK(c.model.csg.hsb.ss2d.scan.form == ScanForm::parallel);
  CHECK(c.eval.iou_threshold[2] == 0.5);
  CHECK(c.train.optimizer == OptimizerKind::sgd);
  CHECK(c.train.init_seed == 12);
  const auto echo = config_to_json(c);
  CHECK(echo["model"]["ssm"]["form"] == "parallel");
  CHECK(echo["grid"]["x_max"] == 25.6);
}

TEST_CASE("strict errors name the key path") {
  CHECK(error_of(json::object()).find("grid: required section is missing") != std::string::npos);

  auto unknown = minimal();
  unknown["model"]["hsb"]["atention"] = false;
  CHECK(error_of(unknown).find("model.hsb.atention: unknown key") != std::string::npos);
  auto top = minimal();
  top["extra"] = 1;
  CHECK(error_of(top).find("extra: unknown key") != std::string::npos);

  auto text = minimal();
  text["model"]["channels"] = "32x";
  CHECK(error_of(text).find("model.channels: expected integer, got string") != std::string::npos);
  auto fractional = minimal();
  fractional["model"]["ssm"]["state_dim"] = 2.5;
  CHECK(error_of(fractional).find("model.ssm.state_dim: expected integer") != std::string::npos);
  auto number = minimal();
  number["grid"]["pillar_size"] = "0.2";
  CHECK(error_of(number).find("grid.pillar_size: expected number") != std::string::npos);
  auto flag = minimal();
  flag["model"]["csg"]["enabled"] = 1;
  CHECK(error_of(flag).find("model.csg.enabled: expected boolean") != std::string::npos);
  auto choice = minimal();
  choice["model"]["ssm"]["form"] = "fft";
  CHECK(error_of(choice).find("model.ssm.form: expected one of {recurrent, parallel, conv}") != std::string::npos);
  auto section = minimal();
  section["head"] = 3;
  CHECK(error_of(section).find("head: expected object") != std::string::npos);
  auto negative = minimal();
  negative["train"]["init_seed"] = -1;
  CHECK(error_of(negative).find("train.init_seed") != std::string::npos);
}

TEST_CASE("semantic validation") {
  auto bad_grid = minimal();
  bad_grid["grid"]["x_max"] = 12.7;
  CHECK_THROWS_AS(parse_config(bad_grid), ConfigError);
  auto stages = minimal();
  stages["model"]["stages"] = 8;
  CHECK(error_of(stages).find("divisible") != std::string::npos);
  auto thr = minimal();
  thr["eval"]["thresholds"]["vehicle"] = 0.0;
  CHECK(error_of(thr).find("eval.thresholds.vehicle") != std::string::npos);
  auto conv = minimal();
  conv["model"]["ssm"]["form"] = "conv";
  CHECK(error_of(conv).find("model.ssm.form: conv") != std::string::npos);
  auto boxes = minimal();
  boxes["data"]["min_boxes"] = 5;
  CHECK(error_of(boxes).find("data.min_boxes") != std::string::npos);
}

TEST_CASE("config file parse errors") {
  const auto path = fs::temp_directory_path() / "pillarmamba_bad_config.json";
  write_text(path, R"({"grid": {"x_max": 12.8.1}})");
  CHECK_THROWS_AS(load_config(path), ConfigError);
  write_text(path, R"({"grid": {"x_max": 12.8}})");
  CHECK(load_config(path).grid.x_extent() == 64);
}

TEST_CASE("attention toggle controls SE parameters in the built network") {
  auto j = minimal();
  j["model"]["channels"] = 8;
  j["model"]["stages"] = 2;
  auto count_se = [](const RunConfig& c) {
    Model<float> model(c.model, c.grid, c.head);
    int n = 0;
    for (const auto& name : model.store().names()) n += name.find(".se.") != std::string::npos;
    return n;
  };
  CHECK(count_se(parse_config(j)) > 0);
  j["model"]["hsb"]["attention"] = false;
  CHECK(count_se(parse_config(j)) == 0);
}

TEST_CASE("scene specs follow the data section") {
  const auto c = parse_config(minimal());
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto s = c.scene_spec(3, i);
    for (int n : s.counts) {
      CHECK(n >= 1);
      CHECK(n <= 4);
    }
    CHECK(s.points_per_box == 64);
    CHECK(s.ground_z == -2.0);
  }
  CHECK(c.scene_spec(3, 0).seed == c.scene_spec(3, 0).seed);
  CHECK(c.scene_spec(3, 0).seed != c.scene_spec(3, 1).seed);
  CHECK(c.scene_spec(3, 0).seed != c.scene_spec(4, 0).seed);
}
