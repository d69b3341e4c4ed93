#include "pillarmamba/backbone.hpp"

namespace pillarmamba {

CsgConfig BackboneConfig::stage_csg() const {
  CsgConfig c = csg;
  c.channels = channels;
  return c;
}

void BackboneConfig::validate() const {
  if (stages < 2) throw ConfigError("backbone: at least 2 stages are required, got " + std::to_string(stages));
  const std::int64_t factor = std::int64_t{1} << (stages - 1);
  if (x_extent <= 0 || y_extent <= 0 || x_extent % factor != 0 || y_extent % factor != 0)
    throw ConfigError("backbone: grid " + std::to_string(x_extent) + "x" + std::to_string(y_extent) +
                      " is not divisible by " + std::to_string(factor) + " for " + std::to_string(stages) + " stages");
  stage_csg().validate();
}

template <typename Scalar>
BackboneParams<Scalar> BackboneParams<Scalar>::create(ParamStore<Scalar>& store, const std::string& prefix,
                                                      const BackboneConfig& cfg) {
  cfg.validate();
  const auto c = cfg.channels;
  BackboneParams p;
  p.config = cfg;
  for (int s = 0; s < cfg.stages; ++s) {
    const std::string stage = prefix + ".stage" + std::to_string(s + 1);
    if (s > 0)
      p.downs.push_back(ConvLayer<Scalar>::create(store, stage + ".down", c, c, 3, {.stride = 2, .padding = 1}));
    p.groups.push_back(CsgParams<Scalar>::create(store, stage + ".csg", cfg.stage_csg()));
    if (s > 1) p.laterals.push_back(ConvLayer<Scalar>::create(store, stage + ".lateral", c, c, 1));
  }
  p.fuse = ConvLayer<Scalar>::create(store, prefix + ".fuse", c * (cfg.stages - 1), c, 1);
  p.head_up = ConvLayer<Scalar>::create(store, prefix + ".up", c, c, 1);
  return p;
}

template <typename Scalar>
void BackboneParams<Scalar>::initialize(Rng& rng) {
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (s > 0) downs[s - 1].initialize(rng);
    groups[s].initialize(rng);
    if (s > 1) laterals[s - 2].initialize(rng);
  }
  fuse.initialize(rng);
  head_up.initialize(rng);
}

template <typename Scalar>
FeaturePyramid<Scalar> backbone_forward(Tape<Scalar>& tape, Var<Scalar> f0, const BackboneParams<Scalar>& params) {
  const auto& cfg = params.config;
  require(f0.shape() == Shape{cfg.channels, cfg.x_extent, cfg.y_extent},
          "backbone_forward: input " + f0.shape().str() + " vs configured " +
              Shape{cfg.channels, cfg.x_extent, cfg.y_extent}.str());
  FeaturePyramid<Scalar> pyr;
  auto f = csg_forward(tape, f0, params.groups[0]);
  pyr.stages.push_back(f);
  for (int s = 1; s < cfg.stages; ++s) {
    f = csg_forward(tape, silu(params.downs[s - 1](tape, f)), params.groups[s]);
    pyr.stages.push_back(f);
  }

  std::vector<Var<Scalar>> aligned{pyr.stages[1]};
  for (int s = 2; s < cfg.stages; ++s) {
    auto up = pyr.stages[s];
    for (int k = 1; k < s; ++k) up = upsample_nearest2x(up);
    aligned.push_back(params.laterals[s - 2](tape, up));
  }
  auto fused = params.fuse(tape, channel_concat(aligned));
  pyr.out = params.head_up(tape, upsample_nearest2x(fused));
  return pyr;
}

std::int64_t backbone_macs(const BackboneConfig& cfg) {
  cfg.validate();
  const auto c = cfg.channels;
  std::int64_t macs = 0;
  for (int s = 0; s < cfg.stages; ++s) {
    const auto x = cfg.x_extent >> s, y = cfg.y_extent >> s;
    if (s > 0) macs += conv_macs(c, c, 3, 1, x, y);
    macs += csg_macs(cfg.stage_csg(), x, y);
    if (s > 1) macs += conv_macs(c, c, 1, 1, cfg.x_extent / 2, cfg.y_extent / 2);
  }
  macs += conv_macs(c * (cfg.stages - 1), c, 1, 1, cfg.x_extent / 2, cfg.y_extent / 2);
  macs += conv_macs(c, c, 1, 1, cfg.x_extent, cfg.y_extent);
  return macs;
}

#define PM_INSTANTIATE_BACKBONE(S)                                                                 \
  template struct BackboneParams<S>;                                                               \
  template FeaturePyramid<S> backbone_forward(Tape<S>&, Var<S>, const BackboneParams<S>&);

PM_INSTANTIATE_BACKBONE(float)
PM_INSTANTIATE_BACKBONE(double)

#undef PM_INSTANTIATE_BACKBONE

}  // namespace pillarmamba
