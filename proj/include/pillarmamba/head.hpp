#pragma once

#include <vector>

#include "pillarmamba/blocks.hpp"
#include "pillarmamba/box.hpp"
#include "pillarmamba/pillar.hpp"

namespace pillarmamba {

/// Regression channel order after the class heatmaps.
enum RegressionChannel : std::int64_t {
  kOffsetX = 0,
  kOffsetY,
  kZ,
  kLogL,
  kLogW,
  kLogH,
  kSinYaw,
  kCosYaw,
  kRegressionChannels
};

struct HeadConfig {
  std::int64_t channels = 64;
  int classes = kNumClasses;
  double heatmap_prior = 0.1;  // initial heatmap bias = logit(prior)
};

template <typename Scalar>
struct HeadParams {
  HeadConfig config;
  ConvLayer<Scalar> stem;        // 3x3, C -> C, followed by SiLU
  ConvLayer<Scalar> heatmap;     // 1x1, C -> classes
  ConvLayer<Scalar> regression;  // 1x1, C -> 8

  static HeadParams create(ParamStore<Scalar>& store, const std::string& prefix, const HeadConfig& cfg);
  void initialize(Rng& rng);
};

/// (C, X, Y) -> (classes + 8, X, Y): heatmap logits then regression channels.
template <typename Scalar>
Var<Scalar> head_forward(Tape<Scalar>& tape, Var<Scalar> features, const HeadParams<Scalar>& params);

struct TargetOptions {
  double min_overlap = 0.7;
  int min_radius = 2;
};

struct HeadTargets {
  Tensor<double> heatmap;     // (classes, X, Y) in [0, 1]
  Tensor<double> regression;  // (8, X, Y)
  Tensor<double> mask;        // (X, Y), 1 at GT center cells
  std::int64_t num_positive = 0;
  std::int64_t skipped = 0;   // boxes whose center falls outside the grid
};

/// CenterNet radius for a (height, width) box in cells at the given minimum IoU overlap.
double gaussian_radius(double height, double width, double min_overlap);

HeadTargets build_targets(const std::vector<Box3D>& boxes, const GridSpec& grid, int classes = kNumClasses,
                          const TargetOptions& opts = {});

struct LossOptions {
  double regression_weight = 1.0;
};

template <typename Scalar>
struct LossTerms {
  Var<Scalar> total;
  double heatmap = 0;
  double regression = 0;
};

/// Quality-focal heatmap term -|y - p|^2 [(1 - y) log(1 - p) + y log p] plus weighted L1 regression at
/// positive cells, both divided by max(num_positive, 1).
template <typename Scalar>
LossTerms<Scalar> detection_loss(Var<Scalar> raw, const HeadTargets& targets, const LossOptions& opts = {});

struct DecodeOptions {
  std::int64_t top_k = 100;
  double score_threshold = 0.1;
};

/// Sigmoid, 3x3 local-maximum suppression (ties keep the lowest flat index), top-k, threshold.
template <typename Scalar>
std::vector<Detection> decode(const Tensor<Scalar>& raw, const GridSpec& grid, int classes = kNumClasses,
                              const DecodeOptions& opts = {});

/// Raw maps that decode to exactly the targets: heatmap logits of +-`confidence` and the target regression.
Tensor<double> perfect_predictions(const HeadTargets& targets, double confidence = 30.0);

}  // namespace pillarmamba
