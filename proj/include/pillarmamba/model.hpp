#pragma once

#include <memory>
#include <vector>

#include "pillarmamba/backbone.hpp"
#include "pillarmamba/head.hpp"
#include "pillarmamba/pillar.hpp"

namespace pillarmamba {

struct ModelConfig {
  std::int64_t channels = 32;
  int stages = 4;
  EncoderActivation encoder_activation = EncoderActivation::relu;
  VoxelizeOptions voxelize;
  CsgConfig csg;  // channels are derived from `channels`

  BackboneConfig backbone(const GridSpec& grid) const;
  void validate(const GridSpec& grid) const;
};

struct HeadSettings {
  double heatmap_prior = 0.1;
  TargetOptions targets;
  DecodeOptions decode;
  LossOptions loss;
};

/// Pillar encoder, CSG backbone and center head over one parameter store.
template <typename Scalar>
class Model {
 public:
  Model(const ModelConfig& config, const GridSpec& grid, const HeadSettings& head = {});

  void initialize(Rng& rng);

  /// Raw head maps (classes + 8, X, Y).
  Var<Scalar> forward(Tape<Scalar>& tape, const PointCloud& cloud) const;
  LossTerms<Scalar> loss(Tape<Scalar>& tape, const PointCloud& cloud, const HeadTargets& targets) const;
  HeadTargets targets(const std::vector<Box3D>& boxes) const;
  std::vector<Detection> detect(const PointCloud& cloud) const;

  ParamStore<Scalar>& store() { return *store_; }
  const ParamStore<Scalar>& store() const { return *store_; }
  const ModelConfig& config() const { return config_; }
  const GridSpec& grid() const { return grid_; }
  const HeadSettings& head_settings() const { return head_settings_; }

 private:
  ModelConfig config_;
  GridSpec grid_;
  HeadSettings head_settings_;
  std::unique_ptr<ParamStore<Scalar>> store_;
  PillarEncoderParams<Scalar> encoder_;
  BackboneParams<Scalar> backbone_;
  HeadParams<Scalar> head_;
};

}  // namespace pillarmamba
