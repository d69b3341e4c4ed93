#include "pillarmamba/model.hpp"

namespace pillarmamba {

BackboneConfig ModelConfig::backbone(const GridSpec& grid) const {
  BackboneConfig b;
  b.channels = channels;
  b.stages = stages;
  b.x_extent = grid.x_extent();
  b.y_extent = grid.y_extent();
  b.csg = csg;
  return b;
}

void ModelConfig::validate(const GridSpec& grid) const {
  grid.validate();
  if (channels <= 0) throw ConfigError("model.channels must be positive, got " + std::to_string(channels));
  if (voxelize.max_points_per_pillar <= 0 || voxelize.max_pillars <= 0)
    throw ConfigError("model.encoder: point and pillar caps must be positive");
  if (csg.hsb.ss2d.scan.form == ScanForm::conv)
    throw ConfigError("model.ssm.form: conv needs time-invariant parameters but the network scans are selective; "
                      "use recurrent or parallel");
  backbone(grid).validate();
}

template <typename Scalar>
Model<Scalar>::Model(const ModelConfig& config, const GridSpec& grid, const HeadSettings& head)
    : config_(config), grid_(grid), head_settings_(head), store_(std::make_unique<ParamStore<Scalar>>()) {
  config_.validate(grid_);
  encoder_ = PillarEncoderParams<Scalar>::create(*store_, "encoder", config_.channels, config_.encoder_activation);
  backbone_ = BackboneParams<Scalar>::create(*store_, "backbone", config_.backbone(grid_));
  HeadConfig hc;
  hc.channels = config_.channels;
  hc.heatmap_prior = head_settings_.heatmap_prior;
  head_ = HeadParams<Scalar>::create(*store_, "head", hc);
}

template <typename Scalar>
void Model<Scalar>::initialize(Rng& rng) {
  encoder_.initialize(rng);
  backbone_.initialize(rng);
  head_.initialize(rng);
}

template <typename Scalar>
Var<Scalar> Model<Scalar>::forward(Tape<Scalar>& tape, const PointCloud& cloud) const {
  auto f0 = encode_cloud(tape, cloud, grid_, encoder_, config_.voxelize);
  return head_forward(tape, backbone_forward(tape, f0, backbone_).out, head_);
}

template <typename Scalar>
LossTerms<Scalar> Model<Scalar>::loss(Tape<Scalar>& tape, const PointCloud& cloud, const HeadTargets& targets) const {
  return detection_loss(forward(tape, cloud), targets, head_settings_.loss);
}

template <typename Scalar>
HeadTargets Model<Scalar>::targets(const std::vector<Box3D>& boxes) const {
  return build_targets(boxes, grid_, head_.config.classes, head_settings_.targets);
}

template <typename Scalar>
std::vector<Detection> Model<Scalar>::detect(const PointCloud& cloud) const {
  Tape<Scalar> tape(false);
  return decode(forward(tape, cloud).value(), grid_, head_.config.classes, head_settings_.decode);
}

template class Model<float>;
template class Model<double>;

}  // namespace pillarmamba
