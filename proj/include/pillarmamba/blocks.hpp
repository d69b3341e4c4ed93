#pragma once

#include <string>
#include <vector>

#include "pillarmamba/cross_scan.hpp"

namespace pillarmamba {

/// Convolution weight + bias registered in a ParamStore.
template <typename Scalar>
struct ConvLayer {
  Param<Scalar>* weight = nullptr;  // (C_out, C_in / groups, k, k)
  Param<Scalar>* bias = nullptr;    // (C_out)
  Conv2dOptions opts;

  static ConvLayer create(ParamStore<Scalar>& store, const std::string& name, std::int64_t in_channels,
                          std::int64_t out_channels, int kernel, Conv2dOptions opts = {});
  /// Uniform in +-1/sqrt(fan_in), zero bias.
  void initialize(Rng& rng);
  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> x) const;
};

/// Per-site channel normalization parameters.
template <typename Scalar>
struct NormLayer {
  Param<Scalar>* gamma = nullptr;
  Param<Scalar>* beta = nullptr;

  static NormLayer create(ParamStore<Scalar>& store, const std::string& name, std::int64_t channels);
  void initialize();
  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> x) const;
};

struct HsbConfig {
  std::int64_t channels = 16;
  std::int64_t reduction = 2;
  int dw_kernel = 3;
  bool local_conv = true;
  bool residual = true;
  bool attention = true;
  // Non-default reading of the output stage: F_up + gates * DWConv(F).
  bool attention_additive = false;
  Ss2dConfig ss2d;  // channels is derived from channels / reduction

  std::int64_t reduced_channels() const;
  void validate() const;
};

/// Squeeze-excitation gate network: sigmoid(W2 silu(W1 GAP(x) + b1) + b2).
template <typename Scalar>
struct SeParams {
  Param<Scalar>* w1 = nullptr;  // (H, C)
  Param<Scalar>* b1 = nullptr;  // (H)
  Param<Scalar>* w2 = nullptr;  // (C, H)
  Param<Scalar>* b2 = nullptr;  // (C)

  static std::int64_t hidden_for(std::int64_t channels) { return std::max<std::int64_t>(channels / 4, 1); }
  static SeParams create(ParamStore<Scalar>& store, const std::string& prefix, std::int64_t channels);
  void initialize(Rng& rng);
};

/// Channel gates in (0, 1), shape (C).
template <typename Scalar>
Var<Scalar> se_attention(Tape<Scalar>& tape, Var<Scalar> x, const SeParams<Scalar>& params);

template <typename Scalar>
struct HsbParams {
  HsbConfig config;
  ConvLayer<Scalar> down;
  NormLayer<Scalar> ssm_norm;
  Ss2dParams<Scalar> ss2d;
  NormLayer<Scalar> local_norm;
  ConvLayer<Scalar> local_dw;
  ConvLayer<Scalar> up;
  ConvLayer<Scalar> residual_dw;
  SeParams<Scalar> se;

  static HsbParams create(ParamStore<Scalar>& store, const std::string& prefix, const HsbConfig& cfg);
  void initialize(Rng& rng);
};

/// Hybrid state-space block. Shape-preserving on (C, X, Y).
template <typename Scalar>
Var<Scalar> hsb_forward(Tape<Scalar>& tape, Var<Scalar> x, const HsbParams<Scalar>& params);

struct CsgConfig {
  std::int64_t channels = 16;
  double split_fraction = 0.5;
  int hsb_layers = 2;
  // Disabled: the HSB chain runs on all channels with no split, concat or 1x1 convs.
  bool enabled = true;
  HsbConfig hsb;  // channels is derived

  std::int64_t branch_channels() const;
  HsbConfig branch_hsb() const;
  void validate() const;
};

template <typename Scalar>
struct CsgParams {
  CsgConfig config;
  ConvLayer<Scalar> down;
  std::vector<HsbParams<Scalar>> hsbs;
  ConvLayer<Scalar> up;

  static CsgParams create(ParamStore<Scalar>& store, const std::string& prefix, const CsgConfig& cfg);
  void initialize(Rng& rng);
};

/// Cross-stage group: Conv_down, split, HSB chain on the first part, concat, Conv_up.
template <typename Scalar>
Var<Scalar> csg_forward(Tape<Scalar>& tape, Var<Scalar> x, const CsgParams<Scalar>& params);

// Multiply-accumulate counts. Elementwise work, normalization and activations are not counted.
std::int64_t conv_macs(std::int64_t in_channels, std::int64_t out_channels, int kernel, int groups,
                       std::int64_t out_x, std::int64_t out_y);
std::int64_t ss2d_macs(const Ss2dConfig& cfg, std::int64_t x, std::int64_t y);
std::int64_t hsb_macs(const HsbConfig& cfg, std::int64_t x, std::int64_t y);
std::int64_t csg_macs(const CsgConfig& cfg, std::int64_t x, std::int64_t y);

/// Dispatch by block name: "ss2d", "hsb", "csg" (as configured), "csg_split", "plain"
/// (HSB chain on all channels). Anything else is a ContractViolation.
std::int64_t count_flops(const std::string& block, const CsgConfig& cfg, std::int64_t x, std::int64_t y);

}  // namespace pillarmamba
