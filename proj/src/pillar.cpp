#include "pillarmamba/pillar.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace pillarmamba {

namespace {

std::int64_t whole_cells(double lo, double hi, double size, const char* axis) {
  const double cells = (hi - lo) / size;
  const double rounded = std::round(cells);
  if (!(hi > lo) || std::abs(cells - rounded) > 1e-9 * std::max(1.0, rounded))
    throw ConfigError(std::string("grid: ") + axis + " range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "] is not a whole number of " + std::to_string(size) + " m pillars");
  return static_cast<std::int64_t>(rounded);
}

}  // namespace

std::int64_t GridSpec::x_extent() const { return whole_cells(x_min, x_max, pillar_size, "x"); }
std::int64_t GridSpec::y_extent() const { return whole_cells(y_min, y_max, pillar_size, "y"); }

void GridSpec::validate() const {
  if (!(pillar_size > 0.0)) throw ConfigError("grid: pillar_size must be positive");
  if (!(z_max > z_min)) throw ConfigError("grid: z range is empty");
  x_extent();
  y_extent();
}

bool GridSpec::contains(const Point& p) const {
  return p.x >= x_min && p.x < x_max && p.y >= y_min && p.y < y_max && p.z >= z_min && p.z < z_max;
}

std::int64_t GridSpec::cell_x(double x) const {
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((x - x_min) / pillar_size)), 0, x_extent() - 1);
}

std::int64_t GridSpec::cell_y(double y) const {
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((y - y_min) / pillar_size)), 0, y_extent() - 1);
}

PillarSet voxelize(const PointCloud& cloud, const GridSpec& grid, const VoxelizeOptions& opts) {
  grid.validate();
  require(opts.max_points_per_pillar > 0 && opts.max_pillars > 0, "voxelize: caps must be positive");
  PillarSet set;
  set.x_extent = grid.x_extent();
  set.y_extent = grid.y_extent();

  std::unordered_map<std::int64_t, std::size_t> slot;
  std::vector<Pillar> pillars;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    if (!grid.contains(p)) {
      ++set.points_out_of_range;
      continue;
    }
    const auto ix = grid.cell_x(p.x), iy = grid.cell_y(p.y);
    auto [it, inserted] = slot.try_emplace(ix * set.y_extent + iy, pillars.size());
    if (inserted) pillars.push_back(Pillar{ix, iy, {}, 0});
    Pillar& pillar = pillars[it->second];
    pillar.members.push_back(static_cast<std::int64_t>(i));
    ++pillar.point_count;
  }

  std::optional<Rng> rng;
  if (opts.shuffle_seed) rng.emplace(*opts.shuffle_seed);
  for (auto& pillar : pillars) {
    if (rng) rng->shuffle(std::span<std::int64_t>(pillar.members));
    if (static_cast<std::int64_t>(pillar.members.size()) > opts.max_points_per_pillar) {
      set.points_over_cap += static_cast<std::int64_t>(pillar.members.size()) - opts.max_points_per_pillar;
      pillar.members.resize(static_cast<std::size_t>(opts.max_points_per_pillar));
    }
  }

  auto flat = [&](const Pillar& p) { return p.ix * set.y_extent + p.iy; };
  if (static_cast<std::int64_t>(pillars.size()) > opts.max_pillars) {
    // Keep the most populated pillars; ties keep the lower cell index.
    std::sort(pillars.begin(), pillars.end(), [&](const Pillar& a, const Pillar& b) {
      return a.point_count != b.point_count ? a.point_count > b.point_count : flat(a) < flat(b);
    });
    set.pillars_dropped = static_cast<std::int64_t>(pillars.size()) - opts.max_pillars;
    pillars.resize(static_cast<std::size_t>(opts.max_pillars));
  }
  std::sort(pillars.begin(), pillars.end(), [&](const Pillar& a, const Pillar& b) { return flat(a) < flat(b); });
  set.pillars = std::move(pillars);
  return set;
}

template <typename Scalar>
PillarFeatures<Scalar> augment_features(const PointCloud& cloud, const PillarSet& pillars, const GridSpec& grid) {
  PillarFeatures<Scalar> out;
  out.offsets.push_back(0);
  for (const auto& p : pillars.pillars) {
    require(!p.members.empty(), "augment_features: empty pillar");
    out.offsets.push_back(out.offsets.back() + static_cast<std::int64_t>(p.members.size()));
  }
  out.features = Tensor<Scalar>(Shape{out.offsets.back(), kPillarFeatureDim});
  auto f = out.features.matrix(out.offsets.back(), kPillarFeatureDim);
  for (std::size_t k = 0; k < pillars.pillars.size(); ++k) {
    const Pillar& p = pillars.pillars[k];
    double mx = 0, my = 0, mz = 0;
    for (auto i : p.members) {
      mx += cloud[i].x;
      my += cloud[i].y;
      mz += cloud[i].z;
    }
    const double n = static_cast<double>(p.members.size());
    mx /= n;
    my /= n;
    mz /= n;
    const double cx = grid.center_x(p.ix), cy = grid.center_y(p.iy);
    for (std::size_t j = 0; j < p.members.size(); ++j) {
      const Point& q = cloud[p.members[j]];
      const double row[kPillarFeatureDim] = {q.x, q.y, q.z, q.r, q.x - mx, q.y - my, q.z - mz, q.x - cx, q.y - cy};
      for (std::int64_t d = 0; d < kPillarFeatureDim; ++d)
        f(out.offsets[k] + static_cast<std::int64_t>(j), d) = static_cast<Scalar>(row[d]);
    }
  }
  return out;
}

EncoderActivation parse_encoder_activation(const std::string& name) {
  if (name == "relu") return EncoderActivation::relu;
  if (name == "identity") return EncoderActivation::identity;
  throw ConfigError("unknown encoder activation '" + name + "' (expected relu or identity)");
}

template <typename Scalar>
PillarEncoderParams<Scalar> PillarEncoderParams<Scalar>::create(ParamStore<Scalar>& store, const std::string& prefix,
                                                                std::int64_t channels, EncoderActivation activation) {
  PillarEncoderParams p;
  p.weight = &store.add(prefix + ".weight", Shape{channels, kPillarFeatureDim});
  p.bias = &store.add(prefix + ".bias", Shape{channels});
  p.activation = activation;
  return p;
}

template <typename Scalar>
void PillarEncoderParams<Scalar>::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(kPillarFeatureDim));
  for (auto& v : weight->value.span()) v = static_cast<Scalar>(rng.uniform(-bound, bound));
  bias->value.set_zero();
}

template <typename Scalar>
Var<Scalar> pillar_max_scatter(Var<Scalar> points, const PillarSet& pillars, const std::vector<std::int64_t>& offsets) {
  require(points.value().rank() == 2, "pillar_max_scatter expects (N, C), got " + points.shape().str());
  require(offsets.size() == pillars.pillars.size() + 1 && offsets.back() == points.shape()[0],
          "pillar_max_scatter: offsets do not cover " + points.shape().str());
  const auto n = points.shape()[0], c = points.shape()[1];
  const auto area = pillars.x_extent * pillars.y_extent;
  Tensor<Scalar> bev(Shape{c, pillars.x_extent, pillars.y_extent});
  auto pts = points.value().matrix(n, c);
  auto planes = bev.planes();
  // Winning row per (pillar, channel), used to route the gradient.
  std::vector<std::int64_t> argmax(pillars.pillars.size() * static_cast<std::size_t>(c));
  for (std::size_t k = 0; k < pillars.pillars.size(); ++k) {
    const auto cell = pillars.pillars[k].ix * pillars.y_extent + pillars.pillars[k].iy;
    require(offsets[k + 1] > offsets[k], "pillar_max_scatter: empty pillar");
    for (std::int64_t ch = 0; ch < c; ++ch) {
      std::int64_t best = offsets[k];
      for (auto r = offsets[k] + 1; r < offsets[k + 1]; ++r)
        if (pts(r, ch) > pts(best, ch)) best = r;
      argmax[k * static_cast<std::size_t>(c) + static_cast<std::size_t>(ch)] = best;
      planes(ch, cell) = pts(best, ch);
    }
  }
  std::vector<std::int64_t> cells;
  for (const auto& p : pillars.pillars) cells.push_back(p.ix * pillars.y_extent + p.iy);
  return points.tape->record(std::move(bev), {points},
                             [points, argmax = std::move(argmax), cells = std::move(cells), n, c, area](
                                 Tape<Scalar>& t, const Tensor<Scalar>& g) {
    auto gp = t.grad(points).matrix(n, c);
    auto gb = g.matrix(c, area);
    for (std::size_t k = 0; k < cells.size(); ++k)
      for (std::int64_t ch = 0; ch < c; ++ch)
        gp(argmax[k * static_cast<std::size_t>(c) + static_cast<std::size_t>(ch)], ch) += gb(ch, cells[k]);
  });
}

template <typename Scalar>
Var<Scalar> encode_scatter(Tape<Scalar>& tape, const PillarFeatures<Scalar>& features, const PillarSet& pillars,
                           const PillarEncoderParams<Scalar>& params) {
  const auto c = params.weight->value.dim(0);
  if (pillars.pillars.empty()) return tape.constant(Tensor<Scalar>(Shape{c, pillars.x_extent, pillars.y_extent}));
  auto embedded = linear(tape.constant(features.features), tape.param(*params.weight), tape.param(*params.bias));
  if (params.activation == EncoderActivation::relu) embedded = relu(embedded);
  return pillar_max_scatter(embedded, pillars, features.offsets);
}

template <typename Scalar>
Var<Scalar> encode_cloud(Tape<Scalar>& tape, const PointCloud& cloud, const GridSpec& grid,
                         const PillarEncoderParams<Scalar>& params, const VoxelizeOptions& opts) {
  auto pillars = voxelize(cloud, grid, opts);
  return encode_scatter(tape, augment_features<Scalar>(cloud, pillars, grid), pillars, params);
}

#define PM_INSTANTIATE_PILLAR(S)                                                                                  \
  template PillarFeatures<S> augment_features(const PointCloud&, const PillarSet&, const GridSpec&);              \
  template struct PillarEncoderParams<S>;                                                                         \
  template Var<S> pillar_max_scatter(Var<S>, const PillarSet&, const std::vector<std::int64_t>&);                 \
  template Var<S> encode_scatter(Tape<S>&, const PillarFeatures<S>&, const PillarSet&, const PillarEncoderParams<S>&); \
  template Var<S> encode_cloud(Tape<S>&, const PointCloud&, const GridSpec&, const PillarEncoderParams<S>&,        \
                               const VoxelizeOptions&);

PM_INSTANTIATE_PILLAR(float)
PM_INSTANTIATE_PILLAR(double)

#undef PM_INSTANTIATE_PILLAR

}  // namespace pillarmamba
