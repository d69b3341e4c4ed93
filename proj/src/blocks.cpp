#include "pillarmamba/blocks.hpp"

#include <cmath>

namespace pillarmamba {

template <typename Scalar>
ConvLayer<Scalar> ConvLayer<Scalar>::create(ParamStore<Scalar>& store, const std::string& name,
                                            std::int64_t in_channels, std::int64_t out_channels, int kernel,
                                            Conv2dOptions opts) {
  require(opts.groups > 0 && in_channels % opts.groups == 0 && out_channels % opts.groups == 0,
          name + ": channels not divisible by groups");
  ConvLayer layer;
  layer.weight = &store.add(name + ".weight", Shape{out_channels, in_channels / opts.groups, kernel, kernel});
  layer.bias = &store.add(name + ".bias", Shape{out_channels});
  layer.opts = opts;
  return layer;
}

template <typename Scalar>
void ConvLayer<Scalar>::initialize(Rng& rng) {
  const auto& s = weight->value.shape();
  const double bound = 1.0 / std::sqrt(static_cast<double>(s[1] * s[2] * s[3]));
  for (auto& v : weight->value.span()) v = static_cast<Scalar>(rng.uniform(-bound, bound));
  bias->value.set_zero();
}

template <typename Scalar>
Var<Scalar> ConvLayer<Scalar>::operator()(Tape<Scalar>& tape, Var<Scalar> x) const {
  return conv2d(x, tape.param(*weight), tape.param(*bias), opts);
}

template <typename Scalar>
NormLayer<Scalar> NormLayer<Scalar>::create(ParamStore<Scalar>& store, const std::string& name,
                                            std::int64_t channels) {
  NormLayer layer;
  layer.gamma = &store.add(name + ".gamma", Shape{channels});
  layer.beta = &store.add(name + ".beta", Shape{channels});
  return layer;
}

template <typename Scalar>
void NormLayer<Scalar>::initialize() {
  gamma->value.values().setOnes();
  beta->value.set_zero();
}

template <typename Scalar>
Var<Scalar> NormLayer<Scalar>::operator()(Tape<Scalar>& tape, Var<Scalar> x) const {
  return layer_norm(x, tape.param(*gamma), tape.param(*beta), Scalar(1e-5));
}

std::int64_t HsbConfig::reduced_channels() const { return channels / reduction; }

void HsbConfig::validate() const {
  if (channels <= 0 || reduction <= 0 || channels % reduction != 0)
    throw ConfigError("hsb: channels " + std::to_string(channels) + " not divisible by reduction " +
                      std::to_string(reduction));
  if (dw_kernel <= 0 || dw_kernel % 2 == 0)
    throw ConfigError("hsb: dw_kernel must be a positive odd number, got " + std::to_string(dw_kernel));
}

template <typename Scalar>
SeParams<Scalar> SeParams<Scalar>::create(ParamStore<Scalar>& store, const std::string& prefix,
                                          std::int64_t channels) {
  const auto hidden = hidden_for(channels);
  SeParams p;
  p.w1 = &store.add(prefix + ".fc1.weight", Shape{hidden, channels});
  p.b1 = &store.add(prefix + ".fc1.bias", Shape{hidden});
  p.w2 = &store.add(prefix + ".fc2.weight", Shape{channels, hidden});
  p.b2 = &store.add(prefix + ".fc2.bias", Shape{channels});
  return p;
}

template <typename Scalar>
void SeParams<Scalar>::initialize(Rng& rng) {
  for (auto* w : {w1, w2}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w->value.dim(1)));
    for (auto& v : w->value.span()) v = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
  b1->value.set_zero();
  b2->value.set_zero();
}

template <typename Scalar>
Var<Scalar> se_attention(Tape<Scalar>& tape, Var<Scalar> x, const SeParams<Scalar>& params) {
  const auto c = x.shape()[0];
  require(params.w1->value.dim(1) == c,
          "se_attention: input " + x.shape().str() + " vs gate weights " + params.w1->value.shape().str());
  auto pooled = reshape(global_average_pool(x), Shape{1, c});
  auto hidden = silu(linear(pooled, tape.param(*params.w1), tape.param(*params.b1)));
  auto gates = sigmoid(linear(hidden, tape.param(*params.w2), tape.param(*params.b2)));
  return reshape(gates, Shape{c});
}

template <typename Scalar>
HsbParams<Scalar> HsbParams<Scalar>::create(ParamStore<Scalar>& store, const std::string& prefix,
                                            const HsbConfig& cfg) {
  cfg.validate();
  const auto c = cfg.channels, cd = cfg.reduced_channels();
  const int k = cfg.dw_kernel;
  HsbParams p;
  p.config = cfg;
  p.config.ss2d.channels = cd;
  p.down = ConvLayer<Scalar>::create(store, prefix + ".down", c, cd, 1);
  p.ssm_norm = NormLayer<Scalar>::create(store, prefix + ".ssm_norm", cd);
  p.ss2d = Ss2dParams<Scalar>::create(store, prefix + ".ss2d", p.config.ss2d);
  if (cfg.local_conv) {
    p.local_norm = NormLayer<Scalar>::create(store, prefix + ".local_norm", cd);
    p.local_dw = ConvLayer<Scalar>::create(store, prefix + ".local_dw", cd, cd, k,
                                           {.stride = 1, .padding = k / 2, .groups = static_cast<int>(cd)});
  }
  p.up = ConvLayer<Scalar>::create(store, prefix + ".up", cd, c, 1);
  if (cfg.residual)
    p.residual_dw = ConvLayer<Scalar>::create(store, prefix + ".residual_dw", c, c, k,
                                              {.stride = 1, .padding = k / 2, .groups = static_cast<int>(c)});
  if (cfg.attention) p.se = SeParams<Scalar>::create(store, prefix + ".se", c);
  return p;
}

template <typename Scalar>
void HsbParams<Scalar>::initialize(Rng& rng) {
  down.initialize(rng);
  ssm_norm.initialize();
  ss2d.initialize(rng);
  if (config.local_conv) {
    local_norm.initialize();
    local_dw.initialize(rng);
  }
  up.initialize(rng);
  if (config.residual) residual_dw.initialize(rng);
  if (config.attention) se.initialize(rng);
}

template <typename Scalar>
Var<Scalar> hsb_forward(Tape<Scalar>& tape, Var<Scalar> x, const HsbParams<Scalar>& params) {
  const auto& cfg = params.config;
  require(x.value().rank() == 3 && x.shape()[0] == cfg.channels,
          "hsb_forward: input " + x.shape().str() + " vs configured channels " + std::to_string(cfg.channels));
  auto fd = params.down(tape, x);
  fd = add(ss2d_block(tape, params.ssm_norm(tape, fd), params.ss2d), fd);
  if (cfg.local_conv) fd = add(params.local_dw(tape, params.local_norm(tape, fd)), fd);
  auto fu = params.up(tape, fd);

  if (cfg.attention) {
    auto gates = se_attention(tape, fu, params.se);
    if (!cfg.residual) return scale_channels(fu, gates);
    auto res = params.residual_dw(tape, x);
    if (cfg.attention_additive) return add(fu, scale_channels(res, gates));
    return scale_channels(res, gates);
  }
  if (cfg.residual) return add(fu, params.residual_dw(tape, x));
  return fu;
}

std::int64_t CsgConfig::branch_channels() const {
  return enabled ? static_cast<std::int64_t>(std::llround(static_cast<double>(channels) * split_fraction)) : channels;
}

HsbConfig CsgConfig::branch_hsb() const {
  HsbConfig h = hsb;
  h.channels = branch_channels();
  return h;
}

void CsgConfig::validate() const {
  if (channels <= 0) throw ConfigError("csg: channels must be positive");
  if (hsb_layers < 0) throw ConfigError("csg: hsb_layers must be non-negative");
  if (enabled) {
    const double exact = static_cast<double>(channels) * split_fraction;
    const auto cb = branch_channels();
    if (std::abs(exact - static_cast<double>(cb)) > 1e-9 || cb <= 0 || cb >= channels)
      throw ConfigError("csg: split fraction " + std::to_string(split_fraction) + " of " + std::to_string(channels) +
                        " channels is not a proper integer split");
  }
  branch_hsb().validate();
}

template <typename Scalar>
CsgParams<Scalar> CsgParams<Scalar>::create(ParamStore<Scalar>& store, const std::string& prefix,
                                            const CsgConfig& cfg) {
  cfg.validate();
  CsgParams p;
  p.config = cfg;
  if (cfg.enabled) p.down = ConvLayer<Scalar>::create(store, prefix + ".down", cfg.channels, cfg.channels, 1);
  for (int i = 0; i < cfg.hsb_layers; ++i)
    p.hsbs.push_back(HsbParams<Scalar>::create(store, prefix + ".hsb" + std::to_string(i), cfg.branch_hsb()));
  if (cfg.enabled) p.up = ConvLayer<Scalar>::create(store, prefix + ".up", cfg.channels, cfg.channels, 1);
  return p;
}

template <typename Scalar>
void CsgParams<Scalar>::initialize(Rng& rng) {
  if (config.enabled) down.initialize(rng);
  for (auto& h : hsbs) h.initialize(rng);
  if (config.enabled) up.initialize(rng);
}

template <typename Scalar>
Var<Scalar> csg_forward(Tape<Scalar>& tape, Var<Scalar> x, const CsgParams<Scalar>& params) {
  const auto& cfg = params.config;
  require(x.value().rank() == 3 && x.shape()[0] == cfg.channels,
          "csg_forward: input " + x.shape().str() + " vs configured channels " + std::to_string(cfg.channels));
  if (!cfg.enabled) {
    for (const auto& h : params.hsbs) x = hsb_forward(tape, x, h);
    return x;
  }
  const auto cb = cfg.branch_channels();
  auto parts = channel_split(params.down(tape, x), {cb, cfg.channels - cb});
  auto branch = parts[0];
  for (const auto& h : params.hsbs) branch = hsb_forward(tape, branch, h);
  return params.up(tape, channel_concat(std::vector<Var<Scalar>>{branch, parts[1]}));
}

std::int64_t conv_macs(std::int64_t in_channels, std::int64_t out_channels, int kernel, int groups,
                       std::int64_t out_x, std::int64_t out_y) {
  return out_channels * (in_channels / groups) * kernel * kernel * out_x * out_y;
}

std::int64_t ss2d_macs(const Ss2dConfig& cfg, std::int64_t x, std::int64_t y) {
  const auto c = cfg.channels, m = cfg.state_dim, t = x * y;
  // B, C and delta projections, then discretize + recur + read out per lane.
  const auto per_direction = t * (2 * m * c + c * c) + t * c * m * 3;
  return 2 * conv_macs(c, c, 1, 1, x, y) + cfg.directions * per_direction;
}

std::int64_t hsb_macs(const HsbConfig& cfg, std::int64_t x, std::int64_t y) {
  const auto c = cfg.channels, cd = cfg.reduced_channels();
  const int k = cfg.dw_kernel;
  Ss2dConfig inner = cfg.ss2d;
  inner.channels = cd;
  std::int64_t macs = conv_macs(c, cd, 1, 1, x, y) + ss2d_macs(inner, x, y) + conv_macs(cd, c, 1, 1, x, y);
  if (cfg.local_conv) macs += conv_macs(cd, cd, k, static_cast<int>(cd), x, y);
  if (cfg.residual) macs += conv_macs(c, c, k, static_cast<int>(c), x, y);
  if (cfg.attention) macs += 2 * SeParams<double>::hidden_for(c) * c;
  return macs;
}

std::int64_t csg_macs(const CsgConfig& cfg, std::int64_t x, std::int64_t y) {
  const auto chain = cfg.hsb_layers * hsb_macs(cfg.branch_hsb(), x, y);
  if (!cfg.enabled) return chain;
  return chain + 2 * conv_macs(cfg.channels, cfg.channels, 1, 1, x, y);
}

std::int64_t count_flops(const std::string& block, const CsgConfig& cfg, std::int64_t x, std::int64_t y) {
  if (block == "ss2d") {
    Ss2dConfig s = cfg.branch_hsb().ss2d;
    s.channels = cfg.branch_hsb().reduced_channels();
    return ss2d_macs(s, x, y);
  }
  if (block == "hsb") return hsb_macs(cfg.branch_hsb(), x, y);
  if (block == "csg") return csg_macs(cfg, x, y);
  CsgConfig variant = cfg;
  variant.enabled = block == "csg_split";
  if (block == "csg_split" || block == "plain") return csg_macs(variant, x, y);
  throw ContractViolation("count_flops: unsupported block '" + block + "' (supported: ss2d, hsb, csg, csg_split, plain)");
}

#define PM_INSTANTIATE_BLOCKS(S)                                                 \
  template struct ConvLayer<S>;                                                  \
  template struct NormLayer<S>;                                                  \
  template struct SeParams<S>;                                                   \
  template struct HsbParams<S>;                                                  \
  template struct CsgParams<S>;                                                  \
  template Var<S> se_attention(Tape<S>&, Var<S>, const SeParams<S>&);            \
  template Var<S> hsb_forward(Tape<S>&, Var<S>, const HsbParams<S>&);            \
  template Var<S> csg_forward(Tape<S>&, Var<S>, const CsgParams<S>&);

PM_INSTANTIATE_BLOCKS(float)
PM_INSTANTIATE_BLOCKS(double)

#undef PM_INSTANTIATE_BLOCKS

}  // namespace pillarmamba
