#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "pillarmamba/box.hpp"
#include "pillarmamba/pillar.hpp"
#include "pillarmamba/tensor.hpp"

namespace pillarmamba {

namespace fs = std::filesystem;

struct SceneSpec {
  std::array<int, kNumClasses> counts = {2, 2, 2};
  // Mean (l, w, h) per class; sampled sizes vary by +-10%.
  std::array<std::array<double, 3>, kNumClasses> size_priors = {{{4.0, 1.8, 1.6}, {0.6, 0.6, 1.7}, {1.8, 0.6, 1.7}}};
  int points_per_box = 64;
  int background_points = 512;
  double noise_sigma = 0.02;
  double surface_fraction = 0.8;  // share of box points snapped to a visible face
  double ground_z = -2.0;
  double min_gap = 0.1;           // meters between any two footprints
  int max_retries = 1000;         // placement attempts per box
  GridSpec grid;
  std::uint64_t seed = 0;

  void validate() const;
  std::string describe() const;
};

struct Scene {
  PointCloud cloud;
  std::vector<Box3D> boxes;
};

/// Boxes never overlap in BEV and lie fully inside the grid; coordinates are float-representable so a
/// cloud save/load round trip is exact.
Scene generate_scene(const SceneSpec& spec);

/// Little-endian float32 rows of (x, y, z, r), no header.
void save_cloud(const fs::path& path, const PointCloud& cloud);
PointCloud load_cloud(const fs::path& path);

/// JSON array of {"class", "center": [x, y, z], "size": [l, w, h], "yaw"}.
void save_labels(const fs::path& path, const std::vector<Box3D>& boxes);
std::vector<Box3D> load_labels(const fs::path& path);

/// Same layout as labels plus a "score" per entry.
void save_detections(const fs::path& path, const std::vector<Detection>& detections);
std::vector<Detection> load_detections(const fs::path& path);

struct ManifestEntry {
  fs::path cloud;   // absolute or relative to the working directory after loading
  fs::path labels;
};

struct DatasetManifest {
  std::string split = "synthetic";
  std::vector<ManifestEntry> scenes;
};

/// Paths in the file are stored relative to the manifest's directory.
void save_manifest(const fs::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const fs::path& path);

/// "PMWT" magic, u32 version, u64 count, then per parameter: u32 name length, name, u32 rank,
/// i64 dims, f64 values. All integers and floats little-endian.
template <typename Scalar>
void save_weights(const fs::path& path, const ParamStore<Scalar>& store);

/// Every stored parameter must exist in `store` with the same shape, and vice versa.
template <typename Scalar>
void load_weights(const fs::path& path, ParamStore<Scalar>& store);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// 64-bit FNV-1a as 16 hex digits.
std::string digest_hex(const std::string& bytes);

}  // namespace pillarmamba
