#include "pillarmamba/ops.hpp"

#include <cmath>

namespace pillarmamba {
namespace {

template <typename Scalar>
struct ConvGeometry {
  std::int64_t cin, h, w, cout, k, ho, wo, cin_g, cout_g;
  int stride, padding, groups;
};

template <typename Scalar>
ConvGeometry<Scalar> conv_geometry(const Shape& xs, const Shape& ws, const Conv2dOptions& opts) {
  if (xs.rank() != 3 || ws.rank() != 4)
    throw ContractViolation("conv2d expects input (C, H, W) and weight (O, I, k, k); got input " + xs.str() +
                            " and weight " + ws.str());
  if (opts.stride <= 0 || opts.groups <= 0 || opts.padding < 0)
    throw ContractViolation("conv2d: stride/groups must be positive and padding nonnegative");
  ConvGeometry<Scalar> g{};
  g.cin = xs[0];
  g.h = xs[1];
  g.w = xs[2];
  g.cout = ws[0];
  g.k = ws[2];
  g.stride = opts.stride;
  g.padding = opts.padding;
  g.groups = opts.groups;
  if (ws[2] != ws[3] || g.cin % g.groups != 0 || g.cout % g.groups != 0 || ws[1] != g.cin / g.groups)
    throw ContractViolation("conv2d shape mismatch: input " + xs.str() + " vs weight " + ws.str() +
                            " with groups=" + std::to_string(opts.groups));
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  g.ho = conv_out_extent(g.h, static_cast<int>(g.k), g.stride, g.padding);
  g.wo = conv_out_extent(g.w, static_cast<int>(g.k), g.stride, g.padding);
  if (g.ho <= 0 || g.wo <= 0)
    throw ContractViolation("conv2d kernel larger than padded input: input " + xs.str() + " vs weight " + ws.str());
  return g;
}

template <typename Scalar>
bool is_pointwise(const ConvGeometry<Scalar>& g) {
  return g.k == 1 && g.stride == 1 && g.padding == 0;
}

// Gathers the receptive fields of one channel group into a (cin_g * k * k) x (ho * wo) matrix.
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry<Scalar>& g, std::int64_t group, RowMatrix<Scalar>& cols) {
  cols.resize(g.cin_g * g.k * g.k, g.ho * g.wo);
  for (std::int64_t c = 0; c < g.cin_g; ++c) {
    const Scalar* plane = x + (group * g.cin_g + c) * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k; ++ky)
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        Scalar* row = cols.row((c * g.k + ky) * g.k + kx).data();
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            row[oy * g.wo + ox] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : Scalar(0);
          }
        }
      }
  }
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, const ConvGeometry<Scalar>& g, std::int64_t group, Scalar* dx) {
  for (std::int64_t c = 0; c < g.cin_g; ++c) {
    Scalar* plane = dx + (group * g.cin_g + c) * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k; ++ky)
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const Scalar* row = cols.row((c * g.k + ky) * g.k + kx).data();
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
  }
}

template <typename Scalar>
Tensor<Scalar> conv_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>* b,
                            const ConvGeometry<Scalar>& g) {
  Tensor<Scalar> out(Shape{g.cout, g.ho, g.wo});
  auto out_m = out.matrix(g.cout, g.ho * g.wo);
  auto w_m = w.matrix(g.cout, g.cin_g * g.k * g.k);
  if (is_pointwise(g) && g.groups == 1) {
    out_m.noalias() = w_m * x.matrix(g.cin, g.h * g.w);
  } else {
    RowMatrix<Scalar> cols;
    for (std::int64_t grp = 0; grp < g.groups; ++grp) {
      im2col(x.data(), g, grp, cols);
      out_m.middleRows(grp * g.cout_g, g.cout_g).noalias() = w_m.middleRows(grp * g.cout_g, g.cout_g) * cols;
    }
  }
  if (b != nullptr) out_m.colwise() += b->values();
  return out;
}

template <typename Scalar>
Tensor<Scalar> map_values(const Tensor<Scalar>& x, auto fn) {
  Tensor<Scalar> out(x.shape());
  out.values() = x.values().unaryExpr(fn);
  return out;
}

}  // namespace

namespace kernels {
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      std::type_identity_t<const Tensor<Scalar>*> bias, Conv2dOptions opts) {
  auto g = conv_geometry<Scalar>(x.shape(), weight.shape(), opts);
  if (bias != nullptr && !(bias->shape() == Shape{g.cout}))
    throw ContractViolation("conv2d bias shape " + bias->shape().str() + " vs output channels " +
                            std::to_string(g.cout));
  return conv_forward(x, weight, bias, g);
}
}  // namespace kernels

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape());
  out.values() = a.value().values() + b.value().values();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.accumulate(a, g.values());
    t.accumulate(b, g.values());
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape());
  out.values() = a.value().values() - b.value().values();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.accumulate(a, g.values());
    t.accumulate(b, -g.values());
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape());
  out.values() = a.value().values().cwiseProduct(b.value().values());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.accumulate(a, g.values().cwiseProduct(b.value().values()));
    t.accumulate(b, g.values().cwiseProduct(a.value().values()));
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar factor) {
  Tensor<Scalar> out(a.shape());
  out.values() = a.value().values() * factor;
  return a.tape->record(std::move(out), {a}, [a, factor](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.accumulate(a, g.values() * factor);
  });
}

template <typename Scalar>
Var<Scalar> silu(Var<Scalar> x) {
  auto out = map_values(x.value(), [](Scalar v) { return v * kernels::sigmoid(v); });
  return x.tape->record(std::move(out), {x}, [x](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    Vector<Scalar> d = x.value().values().unaryExpr([](Scalar v) {
      const Scalar s = kernels::sigmoid(v);
      return s * (Scalar(1) + v * (Scalar(1) - s));
    });
    t.accumulate(x, g.values().cwiseProduct(d));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
  auto out = map_values(x.value(), [](Scalar v) { return kernels::sigmoid(v); });
  Vector<Scalar> s = out.values();
  return x.tape->record(std::move(out), {x}, [x, s](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.accumulate(x, g.values().cwiseProduct(s.cwiseProduct((Scalar(1) - s.array()).matrix())));
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  auto out = map_values(x.value(), [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); });
  return x.tape->record(std::move(out), {x}, [x](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    Vector<Scalar> mask = x.value().values().unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
    t.accumulate(x, g.values().cwiseProduct(mask));
  });
}

template <typename Scalar>
Var<Scalar> softplus(Var<Scalar> x) {
  auto out = map_values(x.value(), [](Scalar v) { return kernels::softplus(v); });
  return x.tape->record(std::move(out), {x}, [x](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    Vector<Scalar> d = x.value().values().unaryExpr([](Scalar v) { return kernels::sigmoid(v); });
    t.accumulate(x, g.values().cwiseProduct(d));
  });
}

template <typename Scalar>
Var<Scalar> neg_exp(Var<Scalar> x) {
  auto out = map_values(x.value(), [](Scalar v) { return -std::exp(v); });
  Vector<Scalar> y = out.values();
  return x.tape->record(std::move(out), {x}, [x, y](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.accumulate(x, g.values().cwiseProduct(y));
  });
}

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> weight, std::type_identity_t<std::optional<Var<Scalar>>> bias,
                   Conv2dOptions opts) {
  auto g = conv_geometry<Scalar>(x.shape(), weight.shape(), opts);
  if (bias && !(bias->shape() == Shape{g.cout}))
    throw ContractViolation("conv2d bias shape " + bias->shape().str() + " vs weight " + weight.shape().str());
  auto out = conv_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr, g);
  std::vector<Var<Scalar>> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return x.tape->record(std::move(out), parents, [x, weight, bias, g](Tape<Scalar>& t, const Tensor<Scalar>& go) {
    auto go_m = go.matrix(g.cout, g.ho * g.wo);
    auto w_m = weight.value().matrix(g.cout, g.cin_g * g.k * g.k);
    if (bias && t.requires_grad(*bias)) t.grad(*bias).values() += go_m.rowwise().sum();
    const bool need_x = t.requires_grad(x);
    const bool need_w = t.requires_grad(weight);
    if (is_pointwise(g) && g.groups == 1) {
      if (need_w) t.grad(weight).matrix(g.cout, g.cin).noalias() += go_m * x.value().matrix(g.cin, g.h * g.w).transpose();
      if (need_x) t.grad(x).matrix(g.cin, g.h * g.w).noalias() += w_m.transpose() * go_m;
      return;
    }
    RowMatrix<Scalar> cols;
    RowMatrix<Scalar> dcols;
    for (std::int64_t grp = 0; grp < g.groups; ++grp) {
      auto go_g = go_m.middleRows(grp * g.cout_g, g.cout_g);
      if (need_w) {
        im2col(x.value().data(), g, grp, cols);
        t.grad(weight).matrix(g.cout, g.cin_g * g.k * g.k).middleRows(grp * g.cout_g, g.cout_g).noalias() +=
            go_g * cols.transpose();
      }
      if (need_x) {
        dcols.noalias() = w_m.middleRows(grp * g.cout_g, g.cout_g).transpose() * go_g;
        col2im_add(dcols, g, grp, t.grad(x).data());
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps) {
  if (!(eps > Scalar(0))) throw ConfigError("layer_norm eps must be positive");
  require(x.value().rank() == 3, "layer_norm expects (C, H, W), got " + x.shape().str());
  const std::int64_t c = x.shape()[0];
  const std::int64_t sites = x.shape()[1] * x.shape()[2];
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
          "layer_norm gamma/beta " + gamma.shape().str() + "/" + beta.shape().str() + " vs channels " + std::to_string(c));

  auto xm = x.value().matrix(c, sites);
  Eigen::Array<Scalar, 1, Eigen::Dynamic> mean = xm.colwise().mean().array();
  RowMatrix<Scalar> centered = xm.rowwise() - mean.matrix();
  Eigen::Array<Scalar, 1, Eigen::Dynamic> inv_std =
      ((centered.array().square().colwise().sum() / Scalar(c)) + eps).rsqrt();
  RowMatrix<Scalar> xhat = (centered.array().rowwise() * inv_std).matrix();

  Tensor<Scalar> out(x.shape());
  out.matrix(c, sites) = ((xhat.array().colwise() * gamma.value().values().array()).colwise() +
                          beta.value().values().array()).matrix();
  return x.tape->record(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xhat, inv_std, c, sites](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    auto gm = g.matrix(c, sites);
    if (t.requires_grad(gamma)) t.grad(gamma).values() += (gm.array() * xhat.array()).rowwise().sum().matrix();
    if (t.requires_grad(beta)) t.grad(beta).values() += gm.rowwise().sum();
    if (t.requires_grad(x)) {
      RowMatrix<Scalar> dxhat = (gm.array().colwise() * gamma.value().values().array()).matrix();
      auto mean_d = dxhat.colwise().mean().array();
      auto mean_dx = (dxhat.array() * xhat.array()).colwise().mean();
      RowMatrix<Scalar> dx = ((dxhat.array().rowwise() - mean_d - (xhat.array().rowwise() * mean_dx))
                                  .rowwise() * inv_std).matrix();
      t.grad(x).matrix(c, sites) += dx;
    }
  });
}

template <typename Scalar>
Var<Scalar> global_average_pool(Var<Scalar> x) {
  require(x.value().rank() == 3, "global_average_pool expects (C, H, W), got " + x.shape().str());
  const std::int64_t c = x.shape()[0];
  const std::int64_t sites = x.shape()[1] * x.shape()[2];
  Tensor<Scalar> out(Shape{c});
  out.values() = x.value().matrix(c, sites).rowwise().mean();
  return x.tape->record(std::move(out), {x}, [x, c, sites](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.grad(x).matrix(c, sites).colwise() += g.values() / Scalar(sites);
  });
}

template <typename Scalar>
Var<Scalar> scale_channels(Var<Scalar> x, Var<Scalar> gates) {
  require(x.value().rank() == 3 && gates.shape() == Shape{x.shape()[0]},
          "scale_channels: map " + x.shape().str() + " vs gates " + gates.shape().str());
  const std::int64_t c = x.shape()[0];
  const std::int64_t sites = x.shape()[1] * x.shape()[2];
  Tensor<Scalar> out(x.shape());
  out.matrix(c, sites) = (x.value().matrix(c, sites).array().colwise() * gates.value().values().array()).matrix();
  return x.tape->record(std::move(out), {x, gates}, [x, gates, c, sites](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    auto gm = g.matrix(c, sites);
    if (t.requires_grad(x))
      t.grad(x).matrix(c, sites) += (gm.array().colwise() * gates.value().values().array()).matrix();
    if (t.requires_grad(gates))
      t.grad(gates).values() += (gm.array() * x.value().matrix(c, sites).array()).rowwise().sum().matrix();
  });
}

template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, std::type_identity_t<std::optional<Var<Scalar>>> bias) {
  require(x.value().rank() == 2 && weight.value().rank() == 2 && x.shape()[1] == weight.shape()[1],
          "linear shape mismatch: input " + x.shape().str() + " vs weight " + weight.shape().str());
  const std::int64_t n = x.shape()[0];
  const std::int64_t in = x.shape()[1];
  const std::int64_t out_dim = weight.shape()[0];
  if (bias) require(bias->shape() == Shape{out_dim}, "linear bias " + bias->shape().str() + " vs weight " + weight.shape().str());
  Tensor<Scalar> out(Shape{n, out_dim});
  out.matrix(n, out_dim).noalias() = x.value().matrix(n, in) * weight.value().matrix(out_dim, in).transpose();
  if (bias) out.matrix(n, out_dim).rowwise() += bias->value().values().transpose();
  std::vector<Var<Scalar>> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return x.tape->record(std::move(out), parents, [x, weight, bias, n, in, out_dim](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    auto gm = g.matrix(n, out_dim);
    if (t.requires_grad(x)) t.grad(x).matrix(n, in).noalias() += gm * weight.value().matrix(out_dim, in);
    if (t.requires_grad(weight)) t.grad(weight).matrix(out_dim, in).noalias() += gm.transpose() * x.value().matrix(n, in);
    if (bias && t.requires_grad(*bias)) t.grad(*bias).values() += gm.colwise().sum().transpose();
  });
}

template <typename Scalar>
Var<Scalar> channel_concat(const std::vector<Var<Scalar>>& parts) {
  require(!parts.empty(), "channel_concat of nothing");
  const Shape& first = parts.front().shape();
  std::int64_t channels = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool same_trailing = s.rank() == first.rank();
    for (int i = 1; same_trailing && i < s.rank(); ++i) same_trailing = s[i] == first[i];
    if (!same_trailing) throw ContractViolation("channel_concat shape mismatch " + first.str() + " vs " + s.str());
    offsets.push_back(channels);
    channels += s[0];
  }
  auto dims = first.dims();
  dims[0] = channels;
  Tensor<Scalar> out{Shape(dims)};
  std::int64_t pos = 0;
  for (const auto& p : parts) {
    out.values().segment(pos, p.value().size()) = p.value().values();
    pos += p.value().size();
  }
  return parts.front().tape->record(std::move(out), parts, [parts](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    std::int64_t at = 0;
    for (const auto& p : parts) {
      const auto n = p.value().size();
      if (t.requires_grad(p)) t.grad(p).values() += g.values().segment(at, n);
      at += n;
    }
  });
}

template <typename Scalar>
std::vector<Var<Scalar>> channel_split(Var<Scalar> x, const std::vector<std::int64_t>& sizes) {
  std::int64_t total = 0;
  for (auto s : sizes) {
    require(s > 0, "channel_split sizes must be positive");
    total += s;
  }
  require(total == x.shape()[0], "channel_split sizes sum to " + std::to_string(total) + " but input is " + x.shape().str());
  const std::int64_t per_channel = x.value().size() / x.shape()[0];
  std::vector<Var<Scalar>> outs;
  std::int64_t start = 0;
  for (auto s : sizes) {
    auto dims = x.shape().dims();
    dims[0] = s;
    Tensor<Scalar> part{Shape(dims)};
    const std::int64_t off = start * per_channel;
    const std::int64_t n = s * per_channel;
    part.values() = x.value().values().segment(off, n);
    outs.push_back(x.tape->record(std::move(part), {x}, [x, off, n](Tape<Scalar>& t, const Tensor<Scalar>& g) {
      t.grad(x).values().segment(off, n) += g.values();
    }));
    start += s;
  }
  return outs;
}

template <typename Scalar>
Var<Scalar> upsample_nearest2x(Var<Scalar> x) {
  require(x.value().rank() == 3, "upsample_nearest2x expects (C, H, W), got " + x.shape().str());
  const std::int64_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  Tensor<Scalar> out(Shape{c, 2 * h, 2 * w});
  const auto& xv = x.value();
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < 2 * h; ++i)
      for (std::int64_t j = 0; j < 2 * w; ++j) out.at(ch, i, j) = xv.at(ch, i / 2, j / 2);
  return x.tape->record(std::move(out), {x}, [x, c, h, w](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    auto& gx = t.grad(x);
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < 2 * h; ++i)
        for (std::int64_t j = 0; j < 2 * w; ++j) gx.at(ch, i / 2, j / 2) += g.at(ch, i, j);
  });
}

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Shape shape) {
  auto out = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(out), {x}, [x](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.accumulate(x, g.values());
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  auto out = Tensor<Scalar>::scalar(x.value().values().sum());
  return x.tape->record(std::move(out), {x}, [x](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.grad(x).values().array() += g[0];
  });
}

template <typename Scalar>
Var<Scalar> weighted_sum(Var<Scalar> x, const Tensor<Scalar>& weights) {
  require_same_shape(x.shape(), weights.shape(), "weighted_sum");
  auto out = Tensor<Scalar>::scalar(x.value().values().dot(weights.values()));
  Vector<Scalar> w = weights.values();
  return x.tape->record(std::move(out), {x}, [x, w](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.grad(x).values() += w * g[0];
  });
}

#define PM_INSTANTIATE_OPS(S)                                                                         \
  template Var<S> add(Var<S>, Var<S>);                                                                \
  template Var<S> sub(Var<S>, Var<S>);                                                                \
  template Var<S> mul(Var<S>, Var<S>);                                                                \
  template Var<S> scale(Var<S>, S);                                                                   \
  template Var<S> silu(Var<S>);                                                                       \
  template Var<S> sigmoid(Var<S>);                                                                    \
  template Var<S> relu(Var<S>);                                                                       \
  template Var<S> softplus(Var<S>);                                                                   \
  template Var<S> neg_exp(Var<S>);                                                                    \
  template Var<S> conv2d(Var<S>, Var<S>, std::optional<Var<S>>, Conv2dOptions);                       \
  template Var<S> layer_norm(Var<S>, Var<S>, Var<S>, S);                                              \
  template Var<S> global_average_pool(Var<S>);                                                        \
  template Var<S> scale_channels(Var<S>, Var<S>);                                                     \
  template Var<S> linear(Var<S>, Var<S>, std::optional<Var<S>>);                                      \
  template Var<S> channel_concat(const std::vector<Var<S>>&);                                         \
  template std::vector<Var<S>> channel_split(Var<S>, const std::vector<std::int64_t>&);               \
  template Var<S> upsample_nearest2x(Var<S>);                                                         \
  template Var<S> reshape(Var<S>, Shape);                                                             \
  template Var<S> sum(Var<S>);                                                                        \
  template Var<S> weighted_sum(Var<S>, const Tensor<S>&);                                             \
  template Tensor<S> kernels::conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>*, Conv2dOptions);

PM_INSTANTIATE_OPS(float)
PM_INSTANTIATE_OPS(double)

#undef PM_INSTANTIATE_OPS

}  // namespace pillarmamba
