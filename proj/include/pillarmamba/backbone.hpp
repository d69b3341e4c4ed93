#pragma once

#include <vector>

#include "pillarmamba/blocks.hpp"

namespace pillarmamba {

struct BackboneConfig {
  std::int64_t channels = 64;
  int stages = 4;
  std::int64_t x_extent = 64;
  std::int64_t y_extent = 64;
  CsgConfig csg;  // channels is derived

  CsgConfig stage_csg() const;
  /// Grid extents must be divisible by 2^(stages - 1).
  void validate() const;
};

/// stages[k] is F_{k+1} at 1 / 2^k resolution; `out` is F5 at full resolution.
template <typename Scalar>
struct FeaturePyramid {
  std::vector<Var<Scalar>> stages;
  Var<Scalar> out;
};

template <typename Scalar>
struct BackboneParams {
  BackboneConfig config;
  std::vector<CsgParams<Scalar>> groups;  // one per stage
  std::vector<ConvLayer<Scalar>> downs;   // 3x3 stride 2, before stages 2..S
  std::vector<ConvLayer<Scalar>> laterals;  // 1x1 after upsampling stages 3..S to stage 2's resolution
  ConvLayer<Scalar> fuse;                 // (S - 1) C -> C
  ConvLayer<Scalar> head_up;              // 1x1 after the final x2 upsample

  static BackboneParams create(ParamStore<Scalar>& store, const std::string& prefix, const BackboneConfig& cfg);
  void initialize(Rng& rng);
};

template <typename Scalar>
FeaturePyramid<Scalar> backbone_forward(Tape<Scalar>& tape, Var<Scalar> f0, const BackboneParams<Scalar>& params);

std::int64_t backbone_macs(const BackboneConfig& cfg);

}  // namespace pillarmamba
