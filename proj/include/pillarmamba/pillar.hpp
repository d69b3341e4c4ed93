#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pillarmamba/ops.hpp"
#include "pillarmamba/rng.hpp"

namespace pillarmamba {

struct Point {
  double x = 0, y = 0, z = 0, r = 0;
};

using PointCloud = std::vector<Point>;

/// Axis-aligned BEV grid of square pillars. Cells are half-open [min, max).
struct GridSpec {
  double x_min = 0.0, x_max = 12.8;
  double y_min = -6.4, y_max = 6.4;
  double z_min = -3.0, z_max = 1.0;
  double pillar_size = 0.2;

  /// 64 x 64 crop used for desk-scale runs.
  static GridSpec desk() { return {}; }
  /// 512 x 512 roadside range.
  static GridSpec full_range() { return {0.0, 102.4, -51.2, 51.2, -3.0, 1.0, 0.2}; }

  std::int64_t x_extent() const;
  std::int64_t y_extent() const;
  /// Throws ConfigError for empty ranges or extents that are not whole multiples of the pillar size.
  void validate() const;
  bool contains(const Point& p) const;
  std::int64_t cell_x(double x) const;
  std::int64_t cell_y(double y) const;
  double center_x(std::int64_t ix) const { return x_min + (static_cast<double>(ix) + 0.5) * pillar_size; }
  double center_y(std::int64_t iy) const { return y_min + (static_cast<double>(iy) + 0.5) * pillar_size; }
};

struct Pillar {
  std::int64_t ix = 0, iy = 0;
  std::vector<std::int64_t> members;  // indices into the source cloud, capped
  std::int64_t point_count = 0;       // before capping
};

struct PillarSet {
  std::vector<Pillar> pillars;  // ordered by flat cell index ix * Y + iy
  std::int64_t x_extent = 0, y_extent = 0;
  std::int64_t points_out_of_range = 0;
  std::int64_t points_over_cap = 0;
  std::int64_t pillars_dropped = 0;
};

struct VoxelizeOptions {
  std::int64_t max_points_per_pillar = 32;
  std::int64_t max_pillars = 20000;
  // When set, member order is shuffled with this seed before capping. Off by default (insertion order).
  std::optional<std::uint64_t> shuffle_seed;
};

PillarSet voxelize(const PointCloud& cloud, const GridSpec& grid, const VoxelizeOptions& opts = {});

inline constexpr std::int64_t kPillarFeatureDim = 9;

/// Member-point features (x, y, z, r, xc, yc, zc, xp, yp) stacked pillar by pillar.
template <typename Scalar>
struct PillarFeatures {
  Tensor<Scalar> features;             // (total members, 9)
  std::vector<std::int64_t> offsets;   // pillar p owns rows [offsets[p], offsets[p + 1])
};

template <typename Scalar>
PillarFeatures<Scalar> augment_features(const PointCloud& cloud, const PillarSet& pillars, const GridSpec& grid);

enum class EncoderActivation { relu, identity };

EncoderActivation parse_encoder_activation(const std::string& name);

template <typename Scalar>
struct PillarEncoderParams {
  Param<Scalar>* weight = nullptr;  // (C, 9)
  Param<Scalar>* bias = nullptr;    // (C)
  EncoderActivation activation = EncoderActivation::relu;

  static PillarEncoderParams create(ParamStore<Scalar>& store, const std::string& prefix, std::int64_t channels,
                                    EncoderActivation activation = EncoderActivation::relu);
  void initialize(Rng& rng);
};

/// Per-pillar channelwise max of each pillar's rows of `points` (N, C), scattered into a zero (C, X, Y) map.
/// Gradient goes to the first maximizing row.
template <typename Scalar>
Var<Scalar> pillar_max_scatter(Var<Scalar> points, const PillarSet& pillars, const std::vector<std::int64_t>& offsets);

/// Embed every member point, activate, max-pool per pillar and scatter to the BEV grid.
template <typename Scalar>
Var<Scalar> encode_scatter(Tape<Scalar>& tape, const PillarFeatures<Scalar>& features, const PillarSet& pillars,
                           const PillarEncoderParams<Scalar>& params);

/// Cloud -> F0 in one call with default voxelization.
template <typename Scalar>
Var<Scalar> encode_cloud(Tape<Scalar>& tape, const PointCloud& cloud, const GridSpec& grid,
                         const PillarEncoderParams<Scalar>& params, const VoxelizeOptions& opts = {});

}  // namespace pillarmamba
