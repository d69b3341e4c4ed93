#include "pillarmamba/head.hpp"

#include <algorithm>
#include <cmath>

namespace pillarmamba {

int class_id(const std::string& name) {
  for (int i = 0; i < kNumClasses; ++i)
    if (name == kClassNames[static_cast<std::size_t>(i)]) return i;
  std::string known;
  for (const char* n : kClassNames) known += (known.empty() ? "" : ", ") + std::string(n);
  throw FormatError("unknown class '" + name + "' (known classes: " + known + ")");
}

std::string class_name(int id) {
  require(id >= 0 && id < kNumClasses, "class id out of range: " + std::to_string(id));
  return kClassNames[static_cast<std::size_t>(id)];
}

std::array<std::array<double, 2>, 4> footprint(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = b.l / 2, hw = b.w / 2;
  const double local[4][2] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
  std::array<std::array<double, 2>, 4> out{};
  for (int i = 0; i < 4; ++i)
    out[i] = {b.x + c * local[i][0] - s * local[i][1], b.y + s * local[i][0] + c * local[i][1]};
  return out;
}

bool contains_point(const Box3D& b, double x, double y, double z) {
  const double dx = x - b.x, dy = y - b.y;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  return std::abs(u) <= b.l / 2 && std::abs(v) <= b.w / 2 && std::abs(z - b.z) <= b.h / 2;
}

template <typename Scalar>
HeadParams<Scalar> HeadParams<Scalar>::create(ParamStore<Scalar>& store, const std::string& prefix,
                                              const HeadConfig& cfg) {
  require(cfg.classes > 0, "head: classes must be positive");
  HeadParams p;
  p.config = cfg;
  p.stem = ConvLayer<Scalar>::create(store, prefix + ".stem", cfg.channels, cfg.channels, 3, {.padding = 1});
  p.heatmap = ConvLayer<Scalar>::create(store, prefix + ".heatmap", cfg.channels, cfg.classes, 1);
  p.regression = ConvLayer<Scalar>::create(store, prefix + ".regression", cfg.channels, kRegressionChannels, 1);
  return p;
}

template <typename Scalar>
void HeadParams<Scalar>::initialize(Rng& rng) {
  stem.initialize(rng);
  heatmap.initialize(rng);
  regression.initialize(rng);
  const double prior = config.heatmap_prior;
  heatmap.bias->value.values().setConstant(static_cast<Scalar>(std::log(prior / (1.0 - prior))));
}

template <typename Scalar>
Var<Scalar> head_forward(Tape<Scalar>& tape, Var<Scalar> features, const HeadParams<Scalar>& params) {
  require(features.value().rank() == 3 && features.shape()[0] == params.config.channels,
          "head_forward: input " + features.shape().str() + " vs configured channels " +
              std::to_string(params.config.channels));
  auto shared = silu(params.stem(tape, features));
  return channel_concat(std::vector<Var<Scalar>>{params.heatmap(tape, shared), params.regression(tape, shared)});
}

double gaussian_radius(double height, double width, double min_overlap) {
  const double o = min_overlap;
  const double b1 = height + width, c1 = width * height * (1 - o) / (1 + o);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4 * c1)) / 2;
  const double b2 = 2 * (height + width), c2 = (1 - o) * width * height;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 16 * c2)) / 2;
  const double a3 = 4 * o, b3 = -2 * o * (height + width), c3 = (o - 1) * width * height;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / 2;
  return std::min({r1, r2, r3});
}

HeadTargets build_targets(const std::vector<Box3D>& boxes, const GridSpec& grid, int classes,
                          const TargetOptions& opts) {
  const auto gx = grid.x_extent(), gy = grid.y_extent();
  HeadTargets t;
  t.heatmap = Tensor<double>(Shape{classes, gx, gy});
  t.regression = Tensor<double>(Shape{kRegressionChannels, gx, gy});
  t.mask = Tensor<double>(Shape{gx, gy});
  for (const auto& b : boxes) {
    require(b.cls >= 0 && b.cls < classes, "build_targets: class id " + std::to_string(b.cls) + " out of range");
    const double fx = (b.x - grid.x_min) / grid.pillar_size, fy = (b.y - grid.y_min) / grid.pillar_size;
    const auto ix = static_cast<std::int64_t>(std::floor(fx)), iy = static_cast<std::int64_t>(std::floor(fy));
    if (ix < 0 || ix >= gx || iy < 0 || iy >= gy) {
      ++t.skipped;
      continue;
    }
    const int radius = std::max(
        opts.min_radius,
        static_cast<int>(gaussian_radius(b.l / grid.pillar_size, b.w / grid.pillar_size, opts.min_overlap)));
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    for (std::int64_t dx = -radius; dx <= radius; ++dx)
      for (std::int64_t dy = -radius; dy <= radius; ++dy) {
        const auto cx = ix + dx, cy = iy + dy;
        if (cx < 0 || cx >= gx || cy < 0 || cy >= gy) continue;
        const double v = std::exp(-static_cast<double>(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        double& h = t.heatmap.at(b.cls, cx, cy);
        h = std::max(h, v);
      }
    const double reg[kRegressionChannels] = {fx - static_cast<double>(ix), fy - static_cast<double>(iy), b.z,
                                             std::log(b.l), std::log(b.w), std::log(b.h),
                                             std::sin(b.yaw), std::cos(b.yaw)};
    for (std::int64_t k = 0; k < kRegressionChannels; ++k) t.regression.at(k, ix, iy) = reg[k];
    if (t.mask.at(ix, iy) == 0.0) ++t.num_positive;
    t.mask.at(ix, iy) = 1.0;
  }
  return t;
}

template <typename Scalar>
LossTerms<Scalar> detection_loss(Var<Scalar> raw, const HeadTargets& targets, const LossOptions& opts) {
  const auto classes = targets.heatmap.dim(0), gx = targets.heatmap.dim(1), gy = targets.heatmap.dim(2);
  require_same_shape(raw.shape(), Shape{classes + kRegressionChannels, gx, gy}, "detection_loss");
  const auto area = gx * gy;
  const double norm = static_cast<double>(std::max<std::int64_t>(targets.num_positive, 1));
  const auto& z = raw.value();

  Vector<Scalar> grad(z.size());
  grad.setZero();
  double heat = 0.0, reg = 0.0;
  for (std::int64_t i = 0; i < classes * area; ++i) {
    const double zi = static_cast<double>(z[i]), y = targets.heatmap[i];
    const double p = kernels::sigmoid(zi);
    const double bce = std::max(zi, 0.0) + std::log1p(std::exp(-std::abs(zi))) - y * zi;
    const double q = p - y;
    heat += q * q * bce;
    grad[i] = static_cast<Scalar>(q * (2.0 * p * (1.0 - p) * bce + q * q) / norm);
  }
  for (std::int64_t cell = 0; cell < area; ++cell) {
    if (targets.mask[cell] == 0.0) continue;
    for (std::int64_t k = 0; k < kRegressionChannels; ++k) {
      const auto i = (classes + k) * area + cell;
      const double d = static_cast<double>(z[i]) - targets.regression[k * area + cell];
      reg += std::abs(d);
      grad[i] = static_cast<Scalar>(opts.regression_weight * ((d > 0) - (d < 0)) / norm);
    }
  }
  LossTerms<Scalar> terms;
  terms.heatmap = heat / norm;
  terms.regression = reg / norm;
  const auto total = Tensor<Scalar>::scalar(static_cast<Scalar>(terms.heatmap + opts.regression_weight * terms.regression));
  terms.total = raw.tape->record(total, {raw}, [raw, grad = std::move(grad)](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    t.accumulate(raw, grad * g[0]);
  });
  return terms;
}

template <typename Scalar>
std::vector<Detection> decode(const Tensor<Scalar>& raw, const GridSpec& grid, int classes,
                              const DecodeOptions& opts) {
  const auto gx = grid.x_extent(), gy = grid.y_extent();
  require_same_shape(raw.shape(), Shape{classes + kRegressionChannels, gx, gy}, "decode");
  const auto area = gx * gy;
  struct Candidate {
    double score;
    int cls;
    std::int64_t cell;
  };
  std::vector<Candidate> candidates;
  std::vector<double> score(static_cast<std::size_t>(area));
  for (int c = 0; c < classes; ++c) {
    for (std::int64_t i = 0; i < area; ++i) score[i] = kernels::sigmoid(static_cast<double>(raw[c * area + i]));
    for (std::int64_t ix = 0; ix < gx; ++ix)
      for (std::int64_t iy = 0; iy < gy; ++iy) {
        const auto cell = ix * gy + iy;
        const double s = score[cell];
        bool peak = true;
        for (std::int64_t dx = -1; dx <= 1 && peak; ++dx)
          for (std::int64_t dy = -1; dy <= 1; ++dy) {
            const auto nx = ix + dx, ny = iy + dy;
            if ((dx == 0 && dy == 0) || nx < 0 || nx >= gx || ny < 0 || ny >= gy) continue;
            const auto n = nx * gy + ny;
            if (score[n] > s || (score[n] == s && n < cell)) {
              peak = false;
              break;
            }
          }
        if (peak) candidates.push_back({s, c, cell});
      }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.cls != b.cls ? a.cls < b.cls : a.cell < b.cell;
  });
  if (static_cast<std::int64_t>(candidates.size()) > opts.top_k) candidates.resize(static_cast<std::size_t>(opts.top_k));

  std::vector<Detection> out;
  auto reg = [&](std::int64_t k, std::int64_t cell) { return static_cast<double>(raw[(classes + k) * area + cell]); };
  for (const auto& c : candidates) {
    if (c.score < opts.score_threshold) break;
    const auto ix = c.cell / gy, iy = c.cell % gy;
    Box3D b;
    b.x = grid.x_min + (static_cast<double>(ix) + reg(kOffsetX, c.cell)) * grid.pillar_size;
    b.y = grid.y_min + (static_cast<double>(iy) + reg(kOffsetY, c.cell)) * grid.pillar_size;
    b.z = reg(kZ, c.cell);
    b.l = std::exp(reg(kLogL, c.cell));
    b.w = std::exp(reg(kLogW, c.cell));
    b.h = std::exp(reg(kLogH, c.cell));
    b.yaw = normalize_yaw(std::atan2(reg(kSinYaw, c.cell), reg(kCosYaw, c.cell)));
    b.cls = c.cls;
    out.push_back({b, c.score});
  }
  return out;
}

Tensor<double> perfect_predictions(const HeadTargets& targets, double confidence) {
  const auto classes = targets.heatmap.dim(0), gx = targets.heatmap.dim(1), gy = targets.heatmap.dim(2);
  const auto area = gx * gy;
  Tensor<double> raw(Shape{classes + kRegressionChannels, gx, gy});
  for (std::int64_t i = 0; i < classes * area; ++i) {
    const double y = targets.heatmap[i];
    raw[i] = y <= 0.0 ? -confidence : y >= 1.0 ? confidence : std::log(y / (1.0 - y));
  }
  raw.values().tail(kRegressionChannels * area) = targets.regression.values();
  return raw;
}

#define PM_INSTANTIATE_HEAD(S)                                                                      \
  template struct HeadParams<S>;                                                                    \
  template Var<S> head_forward(Tape<S>&, Var<S>, const HeadParams<S>&);                             \
  template LossTerms<S> detection_loss(Var<S>, const HeadTargets&, const LossOptions&);             \
  template std::vector<Detection> decode(const Tensor<S>&, const GridSpec&, int, const DecodeOptions&);

PM_INSTANTIATE_HEAD(float)
PM_INSTANTIATE_HEAD(double)

#undef PM_INSTANTIATE_HEAD

}  // namespace pillarmamba
