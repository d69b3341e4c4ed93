#include "doctest.h"

#include <cmath>
#include <numbers>

#include "json.hpp"
#include "pillarmamba/eval.hpp"
#include "pillarmamba/io.hpp"
#include "pillarmamba/rng.hpp"
#include "test_util.hpp"

using namespace pillarmamba;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "pillarmamba_test_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool same_cloud(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].z != b[i].z || a[i].r != b[i].r) return false;
  return true;
}

}  // namespace

TEST_CASE("scene generation is deterministic and well formed") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    SceneSpec spec;
    spec.seed = seed;
    spec.counts = {static_cast<int>(seed % 5), 1 + static_cast<int>(seed % 3), static_cast<int>(seed % 4)};
    const auto a = generate_scene(spec), b = generate_scene(spec);
    CHECK(same_cloud(a.cloud, b.cloud));
    CHECK(a.boxes == b.boxes);
    REQUIRE(a.boxes.size() == static_cast<std::size_t>(spec.counts[0] + spec.counts[1] + spec.counts[2]));
    CHECK(a.cloud.size() == a.boxes.size() * 64 + 512);

    for (std::size_t i = 0; i < a.boxes.size(); ++i) {
      const auto& box = a.boxes[i];
      CHECK(spec.grid.contains(Point{box.x, box.y, box.z, 0}));
      for (const auto& corner : footprint(box)) {
        CHECK(corner[0] >= spec.grid.x_min);
        CHECK(corner[0] <= spec.grid.x_max);
        CHECK(corner[1] >= spec.grid.y_min);
        CHECK(corner[1] <= spec.grid.y_max);
      }
      for (std::size_t j = 0; j < i; ++j) CHECK(rotated_iou_bev(box, a.boxes[j]) == 0.0);
      // Box points come first, 64 per box, in box order.
      for (std::size_t k = 0; k < 64; ++k) {
        const auto& p = a.cloud[i * 64 + k];
        CHECK(contains_point(box, p.x, p.y, p.z));
      }
    }
    for (const auto& p : a.cloud) CHECK(spec.grid.contains(p));
    // Float-representable coordinates.
    for (const auto& p : a.cloud) CHECK(static_cast<double>(static_cast<float>(p.x)) == p.x);
  }

  SceneSpec other;
  other.seed = 1;
  CHECK_FALSE(same_cloud(generate_scene(other).cloud, generate_scene(SceneSpec{}).cloud));
}

TEST_CASE("surface bias puts most box points near a face") {
  SceneSpec spec;
  spec.counts = {1, 0, 0};
  spec.points_per_box = 2000;
  spec.background_points = 0;
  const auto s = generate_scene(spec);
  const auto& b = s.boxes[0];
  int near_face = 0;
  for (const auto& p : s.cloud) {
    const double c = std::cos(b.yaw), sn = std::sin(b.yaw);
    const double u = c * (p.x - b.x) + sn * (p.y - b.y), v = -sn * (p.x - b.x) + c * (p.y - b.y);
    const double gap = std::min({b.l / 2 - std::abs(u), b.w / 2 - std::abs(v), b.h / 2 - (p.z - b.z)});
    near_face += gap < 0.1;
  }
  CHECK(near_face > 1500);
}

TEST_CASE("scene generation edge cases") {
  SceneSpec empty;
  empty.counts = {0, 0, 0};
  const auto s = generate_scene(empty);
  CHECK(s.boxes.empty());
  CHECK(s.cloud.size() == 512);

  SceneSpec crowded;
  crowded.counts = {40, 0, 0};
  crowded.seed = 77;
  crowded.max_retries = 50;
  const auto msg = error_of([&] { generate_scene(crowded); });
  CHECK(msg.find("could not place vehicle") != std::string::npos);
  CHECK(msg.find("SceneSpec{seed=77") != std::string::npos);

  SceneSpec bad;
  bad.counts = {-1, 0, 0};
  CHECK_THROWS_AS(generate_scene(bad), ConfigError);
}

TEST_CASE("cloud files") {
  Rng rng(3);
  PointCloud cloud;
  for (int i = 0; i < 257; ++i)
    cloud.push_back({static_cast<float>(rng.uniform(-50, 50)), static_cast<float>(rng.uniform(-50, 50)),
                     static_cast<float>(rng.uniform(-3, 1)), static_cast<float>(rng.uniform())});
  const auto path = scratch("cloud.bin");
  save_cloud(path, cloud);
  CHECK(fs::file_size(path) == 257 * 16);
  CHECK(same_cloud(load_cloud(path), cloud));

  // Little-endian float32: 1.0f is 00 00 80 3f.
  write_text(path, std::string("\x00\x00\x80\x3f\x00\x00\x00\x40\x00\x00\x40\xc0\x00\x00\x00\x00", 16));
  const auto one = load_cloud(path);
  REQUIRE(one.size() == 1);
  CHECK(one[0].x == 1.0);
  CHECK(one[0].y == 2.0);
  CHECK(one[0].z == -3.0);
  CHECK(one[0].r == 0.0);

  write_text(path, std::string(17, '\0'));
  const auto msg = error_of([&] { load_cloud(path); });
  CHECK(msg.find("17") != std::string::npos);
  CHECK_THROWS_AS(load_cloud(path), FormatError);
  write_text(path, "");
  CHECK(load_cloud(path).empty());
  CHECK_THROWS_AS(load_cloud(scratch("missing.bin")), FormatError);
}

TEST_CASE("label files") {
  const auto path = scratch("labels.json");
  write_text(path, "[]");
  CHECK(load_labels(path).empty());

  Rng rng(4);
  std::vector<Box3D> boxes;
  for (int i = 0; i < 20; ++i)
    boxes.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-3, 1), rng.uniform(0.1, 5),
                     rng.uniform(0.1, 5), rng.uniform(0.1, 5), rng.uniform(-std::numbers::pi, std::numbers::pi),
                     static_cast<int>(rng.below(3))});
  save_labels(path, boxes);
  CHECK(load_labels(path) == boxes);

  write_text(path, R"([{"class": "vehicle", "center": [1, 2, 3], "size": [4, 2, 1.5], "yaw": 3.2}])");
  const auto wrapped = load_labels(path);
  REQUIRE(wrapped.size() == 1);
  CHECK(wrapped[0].yaw == 3.2 - 2 * std::numbers::pi);

  write_text(path, R"([{"class": "truck", "center": [1, 2, 3], "size": [4, 2, 1.5], "yaw": 0}])");
  const auto msg = error_of([&] { load_labels(path); });
  CHECK(msg.find("truck") != std::string::npos);
  CHECK(msg.find("vehicle, pedestrian, cyclist") != std::string::npos);
  write_text(path, R"([{"class": "vehicle", "center": [1, 2], "size": [4, 2, 1.5], "yaw": 0}])");
  CHECK(error_of([&] { load_labels(path); }).find("center") != std::string::npos);
  write_text(path, R"({"class": "vehicle"})");
  CHECK_THROWS_AS(load_labels(path), FormatError);
  write_text(path, "[1,");
  CHECK_THROWS_AS(load_labels(path), FormatError);
}

TEST_CASE("detection files keep scores") {
  const auto path = scratch("dets.json");
  std::vector<Detection> dets{{{1, 2, -1, 4, 2, 1.5, 0.25, 0}, 0.875}, {{-3, 0.5, -1, 0.6, 0.6, 1.7, -1, 1}, 0.1}};
  save_detections(path, dets);
  const auto back = load_detections(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].box == dets[0].box);
  CHECK(back[1].score == 0.1);
  write_text(path, R"([{"class": "vehicle", "center": [1, 2, 3], "size": [4, 2, 1.5], "yaw": 0}])");
  CHECK(error_of([&] { load_detections(path); }).find("score") != std::string::npos);
}

TEST_CASE("manifest paths are relative to the manifest") {
  const auto dir = scratch("manifest_case");
  fs::create_directories(dir / "data");
  save_cloud(dir / "data" / "a.bin", {});
  save_labels(dir / "data" / "a.json", {});
  DatasetManifest m;
  m.split = "val";
  m.scenes.push_back({dir / "data" / "a.bin", dir / "data" / "a.json"});
  save_manifest(dir / "manifest.json", m);
  const auto text = read_text(dir / "manifest.json");
  CHECK(text.find("\"data/a.bin\"") != std::string::npos);
  CHECK(text.find(dir.string()) == std::string::npos);

  const auto back = load_manifest(dir / "manifest.json");
  CHECK(back.split == "val");
  REQUIRE(back.scenes.size() == 1);
  CHECK(fs::equivalent(back.scenes[0].cloud, dir / "data" / "a.bin"));

  write_text(dir / "broken.json", R"({"split": "x", "scenes": [{"cloud": "data/nope.bin", "labels": "data/a.json"}]})");
  CHECK(error_of([&] { load_manifest(dir / "broken.json"); }).find("nope.bin") != std::string::npos);
  write_text(dir / "broken.json", R"({"scenes": [], "extra": 1})");
  CHECK_THROWS_AS(load_manifest(dir / "broken.json"), FormatError);
}

TEST_CASE("weights round trip and reject mismatches") {
  ParamStore<double> store;
  store.add("a.weight", Shape{2, 3});
  store.add("b", Shape{4});
  Rng rng(5);
  for (std::size_t i = 0; i < store.size(); ++i)
    for (auto& v : store[i].value.span()) v = rng.normal();
  const auto path = scratch("w.pmwt");
  save_weights(path, store);
  CHECK(read_text(path).substr(0, 4) == "PMWT");
  CHECK(fs::file_size(path) == 4 + 4 + 8 + (4 + 8 + 4 + 16 + 48) + (4 + 1 + 4 + 8 + 32));

  ParamStore<double> copy;
  copy.add("a.weight", Shape{2, 3});
  copy.add("b", Shape{4});
  load_weights(path, copy);
  for (std::size_t i = 0; i < store.size(); ++i)
    CHECK((copy[i].value.values().array() == store[i].value.values().array()).all());

  ParamStore<float> narrow;
  narrow.add("a.weight", Shape{2, 3});
  narrow.add("b", Shape{4});
  load_weights(path, narrow);
  CHECK(narrow[1].value[2] == static_cast<float>(store[1].value[2]));

  ParamStore<double> reshaped;
  reshaped.add("a.weight", Shape{3, 2});
  reshaped.add("b", Shape{4});
  CHECK(error_of([&] { load_weights(path, reshaped); }).find("a.weight") != std::string::npos);
  ParamStore<double> fewer;
  fewer.add("b", Shape{4});
  CHECK_THROWS_AS(load_weights(path, fewer), FormatError);
  write_text(path, "PMWX");
  CHECK_THROWS_AS(load_weights(path, copy), FormatError);
}

TEST_CASE("digest") {
  CHECK(digest_hex("") == "cbf29ce484222325");
  CHECK(digest_hex("a") == "af63dc4c8601ec8c");
}
