#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pillarmamba/config.hpp"
#include "pillarmamba/cross_scan.hpp"

namespace pillarmamba {

/// Runs fn(0..n-1) on up to `workers` threads. The first exception by index is rethrown after all finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Writes scene_NNNN.bin / scene_NNNN.json and manifest.json under `out_dir`; returns the manifest path.
fs::path generate_dataset(const RunConfig& config, std::uint64_t seed, std::size_t scenes, const fs::path& out_dir,
                          int workers = 1);

/// <dets_dir>/<cloud stem>.dets.json
fs::path detections_path(const fs::path& dets_dir, const fs::path& cloud);

/// Decoded detections for every manifest scene, written in manifest order.
std::vector<fs::path> run_forward(const Model<float>& model, const DatasetManifest& manifest, const fs::path& out_dir,
                                  int workers = 1);

/// Per-class AP, PR samples and match counts. Key order and number formatting are deterministic.
nlohmann::json metrics_json(const std::vector<ClassAp>& results, const ApOptions& opts, std::size_t scenes);

nlohmann::json evaluate_dataset(const RunConfig& config, const fs::path& dets_dir, const DatasetManifest& manifest);

/// Model with weights from `weights` if given, else initialized from train.init_seed mixed with `seed`.
Model<float> build_model(const RunConfig& config, const fs::path& weights, std::uint64_t seed);

struct TimingStats {
  std::vector<double> seconds;
  double min = 0, median = 0, mean = 0;
};
TimingStats summarize(std::vector<double> seconds);

struct BlockBench {
  std::string name;
  std::int64_t macs = 0;
  TimingStats timing;
  std::string output_digest;  // identical across repeats and to an untimed run
  bool digest_stable = true;
};

/// Backbone forward on a fixed random BEV map with CSG on and off at otherwise identical settings.
std::vector<BlockBench> bench_backbone(const RunConfig& config, int repeat, std::uint64_t seed);

struct ScanBench {
  ScanForm form = ScanForm::recurrent;
  std::int64_t tokens = 0, channels = 0, state_dim = 0;
  TimingStats timing;
  std::string output_digest;
};

/// Time-invariant scan over X*Y tokens at the configured channel and state sizes.
ScanBench bench_scan(const RunConfig& config, ScanForm form, int repeat, std::uint64_t seed);

struct GradSuiteEntry {
  std::string op;
  int seeds = 0;
  double max_rel_error = 0;
  bool passed = true;
  double seconds = 0;
  std::string worst;
};

/// Central-difference checks of every differentiable block over `seeds` random shapes each.
std::vector<GradSuiteEntry> run_gradcheck_suite(int seeds, std::uint64_t base_seed = 0);

/// Rows of '0'/'1' (or '.'/'#'), one row per x index; blank lines ignored.
std::vector<bool> load_occupancy(const fs::path& path, std::int64_t x_extent, std::int64_t y_extent);

/// Per-direction neighbor sequence-distance histograms and empty-run statistics.
nlohmann::json diagnose_scan(std::int64_t x_extent, std::int64_t y_extent, const std::vector<bool>& occupancy);

}  // namespace pillarmamba
