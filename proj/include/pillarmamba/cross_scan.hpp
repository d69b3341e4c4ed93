#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "pillarmamba/ssm.hpp"

namespace pillarmamba {

enum class ScanDirection { row_forward, col_forward, row_reverse, col_reverse };

inline constexpr std::array<ScanDirection, 4> kAllDirections = {
    ScanDirection::row_forward, ScanDirection::col_forward, ScanDirection::row_reverse, ScanDirection::col_reverse};

std::string to_string(ScanDirection dir);

/// order[t] = flat grid index (ix * Y + iy) of the t-th token when scanning an X x Y grid.
std::vector<std::int64_t> scan_order(ScanDirection dir, std::int64_t x_extent, std::int64_t y_extent);

/// Four token sequences of shape (X*Y, C), indexed like kAllDirections.
template <typename Scalar>
struct DirectionalSequences {
  std::array<Tensor<Scalar>, 4> sequences;
  std::int64_t x_extent = 0;
  std::int64_t y_extent = 0;
};

/// (C, X, Y) -> four (X*Y, C) sequences.
template <typename Scalar>
DirectionalSequences<Scalar> cross_scan_flatten(const Tensor<Scalar>& bev);

/// Inverse of one direction's flattening: (X*Y, C) -> (C, X, Y).
template <typename Scalar>
Tensor<Scalar> unflatten(const Tensor<Scalar>& sequence, ScanDirection dir, std::int64_t x_extent,
                         std::int64_t y_extent);

/// Sum of the four unflattened sequences.
template <typename Scalar>
Tensor<Scalar> cross_merge(const DirectionalSequences<Scalar>& outputs);

// Differentiable counterparts used inside ss2d_block.
template <typename Scalar>
Var<Scalar> flatten_direction(Var<Scalar> bev, ScanDirection dir);

template <typename Scalar>
struct DirectionalOutput {
  ScanDirection dir;
  Var<Scalar> tokens;  // (X*Y, C)
};

template <typename Scalar>
Var<Scalar> cross_merge(const std::vector<DirectionalOutput<Scalar>>& outputs, std::int64_t x_extent,
                        std::int64_t y_extent);

struct Ss2dConfig {
  std::int64_t channels = 8;
  std::int64_t state_dim = 8;
  int directions = 4;  // 1 uses row_forward only
  SelectiveScanOptions scan;
};

/// SS2D parameters: in-projection, one selective projection per direction, norm, out-projection.
template <typename Scalar>
struct Ss2dParams {
  Ss2dConfig config;
  Param<Scalar>* in_w = nullptr;   // (C, C, 1, 1)
  Param<Scalar>* in_b = nullptr;   // (C)
  std::vector<SelectiveProjection<Scalar>> scans;
  Param<Scalar>* norm_gamma = nullptr;
  Param<Scalar>* norm_beta = nullptr;
  Param<Scalar>* out_w = nullptr;  // (C, C, 1, 1)
  Param<Scalar>* out_b = nullptr;

  static Ss2dParams create(ParamStore<Scalar>& store, const std::string& prefix, const Ss2dConfig& cfg);
  void initialize(Rng& rng);
};

/// silu(in_proj) -> four directional selective scans -> merge -> per-site norm -> out_proj.
template <typename Scalar>
Var<Scalar> ss2d_block(Tape<Scalar>& tape, Var<Scalar> bev, const Ss2dParams<Scalar>& params);

/// Counts of |seq_pos(a) - seq_pos(b)| over 4-adjacent grid cell pairs (a, b).
/// When `occupancy` is non-empty only pairs with both cells occupied are counted.
std::map<std::int64_t, std::int64_t> neighbor_distance_histogram(ScanDirection dir, std::int64_t x_extent,
                                                                 std::int64_t y_extent,
                                                                 const std::vector<bool>& occupancy = {});

struct EmptyRunStats {
  std::map<std::int64_t, std::int64_t> run_histogram;  // length of maximal empty runs -> count
  std::int64_t longest_run = 0;
  double mean_run = 0.0;
  // Empty tokens between each occupied token and the previous occupied one (or the sequence start).
  std::vector<std::int64_t> gap_before_occupied;
};

/// occupancy is row-major over the X x Y grid.
EmptyRunStats empty_run_stats(ScanDirection dir, std::int64_t x_extent, std::int64_t y_extent,
                              const std::vector<bool>& occupancy);

}  // namespace pillarmamba
