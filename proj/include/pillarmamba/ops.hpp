#pragma once

#include <optional>
#include <type_traits>
#include <vector>

#include "pillarmamba/tape.hpp"

namespace pillarmamba {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// Output spatial extent of a square-kernel convolution.
inline std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// Elementwise. Binary ops require identical shapes.
template <typename Scalar> Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> scale(Var<Scalar> a, Scalar factor);
template <typename Scalar> Var<Scalar> silu(Var<Scalar> x);
template <typename Scalar> Var<Scalar> sigmoid(Var<Scalar> x);
template <typename Scalar> Var<Scalar> relu(Var<Scalar> x);
template <typename Scalar> Var<Scalar> softplus(Var<Scalar> x);
/// -exp(x); keeps state matrices strictly negative.
template <typename Scalar> Var<Scalar> neg_exp(Var<Scalar> x);

/// x: (C_in, H, W); weight: (C_out, C_in / groups, k, k); bias: (C_out).
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> weight, std::type_identity_t<std::optional<Var<Scalar>>> bias,
                   Conv2dOptions opts = {});

/// Normalizes over channels independently at every spatial site of a (C, H, W) map.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps = Scalar(1e-5));

/// (C, H, W) -> (C) spatial mean.
template <typename Scalar> Var<Scalar> global_average_pool(Var<Scalar> x);

/// (C, H, W) scaled per channel by gates of shape (C).
template <typename Scalar> Var<Scalar> scale_channels(Var<Scalar> x, Var<Scalar> gates);

/// x: (N, in); weight: (out, in); bias: (out). Returns x * weight^T + bias.
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, std::type_identity_t<std::optional<Var<Scalar>>> bias);

/// Concatenation / split along the leading dimension.
template <typename Scalar> Var<Scalar> channel_concat(const std::vector<Var<Scalar>>& parts);
template <typename Scalar>
std::vector<Var<Scalar>> channel_split(Var<Scalar> x, const std::vector<std::int64_t>& sizes);

template <typename Scalar> Var<Scalar> upsample_nearest2x(Var<Scalar> x);
template <typename Scalar> Var<Scalar> reshape(Var<Scalar> x, Shape shape);

template <typename Scalar> Var<Scalar> sum(Var<Scalar> x);
/// sum(x * weights) with constant weights of identical shape.
template <typename Scalar> Var<Scalar> weighted_sum(Var<Scalar> x, const Tensor<Scalar>& weights);

// Plain forward kernels, no tape.
namespace kernels {
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      std::type_identity_t<const Tensor<Scalar>*> bias, Conv2dOptions opts);
template <typename Scalar> Scalar sigmoid(Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); }
template <typename Scalar> Scalar softplus(Scalar x) {
  return x > Scalar(20) ? x : std::log1p(std::exp(x));
}
}  // namespace kernels

}  // namespace pillarmamba
