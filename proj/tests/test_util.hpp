#pragma once

#include "pillarmamba/rng.hpp"
#include "pillarmamba/tensor.hpp"

namespace pm_test {

template <typename Scalar = double>
pillarmamba::Tensor<Scalar> random_tensor(pillarmamba::Rng& rng, pillarmamba::Shape shape, double sigma = 1.0) {
  pillarmamba::Tensor<Scalar> t(std::move(shape));
  for (auto& v : t.span()) v = static_cast<Scalar>(rng.normal(0.0, sigma));
  return t;
}

inline std::int64_t pick(pillarmamba::Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace pm_test
