#include "pillarmamba/cross_scan.hpp"

#include <algorithm>
#include <cmath>

namespace pillarmamba {

std::string to_string(ScanDirection dir) {
  switch (dir) {
    case ScanDirection::row_forward: return "row_forward";
    case ScanDirection::col_forward: return "col_forward";
    case ScanDirection::row_reverse: return "row_reverse";
    case ScanDirection::col_reverse: return "col_reverse";
  }
  return "?";
}

std::vector<std::int64_t> scan_order(ScanDirection dir, std::int64_t x_extent, std::int64_t y_extent) {
  const std::int64_t n = x_extent * y_extent;
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  const bool by_column = dir == ScanDirection::col_forward || dir == ScanDirection::col_reverse;
  for (std::int64_t t = 0; t < n; ++t)
    order[t] = by_column ? (t % x_extent) * y_extent + t / x_extent : t;
  if (dir == ScanDirection::row_reverse || dir == ScanDirection::col_reverse) std::reverse(order.begin(), order.end());
  return order;
}

namespace {

template <typename Scalar>
Tensor<Scalar> gather_tokens(const Tensor<Scalar>& bev, const std::vector<std::int64_t>& order) {
  const auto c = bev.dim(0), n = bev.dim(1) * bev.dim(2);
  Tensor<Scalar> seq(Shape{n, c});
  auto planes = bev.planes();
  auto s = seq.matrix(n, c);
  for (std::int64_t t = 0; t < n; ++t) s.row(t) = planes.col(order[t]).transpose();
  return seq;
}

template <typename Scalar>
void scatter_tokens_add(const Tensor<Scalar>& seq, const std::vector<std::int64_t>& order, Tensor<Scalar>& bev) {
  const auto c = bev.dim(0), n = bev.dim(1) * bev.dim(2);
  auto planes = bev.planes();
  auto s = seq.matrix(n, c);
  for (std::int64_t t = 0; t < n; ++t) planes.col(order[t]) += s.row(t).transpose();
}

}  // namespace

template <typename Scalar>
DirectionalSequences<Scalar> cross_scan_flatten(const Tensor<Scalar>& bev) {
  require(bev.rank() == 3, "cross_scan_flatten expects (C, X, Y), got " + bev.shape().str());
  DirectionalSequences<Scalar> out;
  out.x_extent = bev.dim(1);
  out.y_extent = bev.dim(2);
  for (std::size_t k = 0; k < kAllDirections.size(); ++k)
    out.sequences[k] = gather_tokens(bev, scan_order(kAllDirections[k], out.x_extent, out.y_extent));
  return out;
}

template <typename Scalar>
Tensor<Scalar> unflatten(const Tensor<Scalar>& sequence, ScanDirection dir, std::int64_t x_extent,
                         std::int64_t y_extent) {
  require(sequence.rank() == 2 && sequence.dim(0) == x_extent * y_extent,
          "unflatten: sequence " + sequence.shape().str() + " does not cover a " + std::to_string(x_extent) + "x" +
              std::to_string(y_extent) + " grid");
  Tensor<Scalar> bev(Shape{sequence.dim(1), x_extent, y_extent});
  scatter_tokens_add(sequence, scan_order(dir, x_extent, y_extent), bev);
  return bev;
}

template <typename Scalar>
Tensor<Scalar> cross_merge(const DirectionalSequences<Scalar>& outputs) {
  const auto& first = outputs.sequences[0].shape();
  for (const auto& s : outputs.sequences) require_same_shape(first, s.shape(), "cross_merge");
  Tensor<Scalar> bev(Shape{first[1], outputs.x_extent, outputs.y_extent});
  for (std::size_t k = 0; k < kAllDirections.size(); ++k)
    scatter_tokens_add(outputs.sequences[k], scan_order(kAllDirections[k], outputs.x_extent, outputs.y_extent), bev);
  return bev;
}

template <typename Scalar>
Var<Scalar> flatten_direction(Var<Scalar> bev, ScanDirection dir) {
  require(bev.value().rank() == 3, "flatten_direction expects (C, X, Y), got " + bev.shape().str());
  auto order = scan_order(dir, bev.shape()[1], bev.shape()[2]);
  auto seq = gather_tokens(bev.value(), order);
  return bev.tape->record(std::move(seq), {bev}, [bev, order](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    scatter_tokens_add(g, order, t.grad(bev));
  });
}

template <typename Scalar>
Var<Scalar> cross_merge(const std::vector<DirectionalOutput<Scalar>>& outputs, std::int64_t x_extent,
                        std::int64_t y_extent) {
  require(!outputs.empty(), "cross_merge of no directions");
  const Shape& first = outputs.front().tokens.shape();
  require(first.rank() == 2 && first[0] == x_extent * y_extent,
          "cross_merge: sequence " + first.str() + " does not cover the grid");
  std::vector<Var<Scalar>> parents;
  std::vector<std::vector<std::int64_t>> orders;
  Tensor<Scalar> bev(Shape{first[1], x_extent, y_extent});
  for (const auto& o : outputs) {
    require_same_shape(first, o.tokens.shape(), "cross_merge");
    orders.push_back(scan_order(o.dir, x_extent, y_extent));
    scatter_tokens_add(o.tokens.value(), orders.back(), bev);
    parents.push_back(o.tokens);
  }
  return parents.front().tape->record(std::move(bev), parents,
                                      [parents, orders](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    for (std::size_t k = 0; k < parents.size(); ++k)
      if (t.requires_grad(parents[k])) t.grad(parents[k]).values() += gather_tokens(g, orders[k]).values();
  });
}

template <typename Scalar>
Ss2dParams<Scalar> Ss2dParams<Scalar>::create(ParamStore<Scalar>& store, const std::string& prefix,
                                              const Ss2dConfig& cfg) {
  require(cfg.directions == 1 || cfg.directions == 4, "ss2d supports 1 or 4 directions");
  const auto c = cfg.channels;
  Ss2dParams p;
  p.config = cfg;
  p.in_w = &store.add(prefix + ".in_proj.weight", Shape{c, c, 1, 1});
  p.in_b = &store.add(prefix + ".in_proj.bias", Shape{c});
  for (int k = 0; k < cfg.directions; ++k)
    p.scans.push_back(SelectiveProjection<Scalar>::create(
        store, prefix + ".scan." + to_string(kAllDirections[static_cast<std::size_t>(k)]), c, cfg.state_dim));
  p.norm_gamma = &store.add(prefix + ".norm.gamma", Shape{c});
  p.norm_beta = &store.add(prefix + ".norm.beta", Shape{c});
  p.out_w = &store.add(prefix + ".out_proj.weight", Shape{c, c, 1, 1});
  p.out_b = &store.add(prefix + ".out_proj.bias", Shape{c});
  return p;
}

template <typename Scalar>
void Ss2dParams<Scalar>::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.channels));
  for (auto* w : {in_w, out_w})
    for (auto& v : w->value.span()) v = static_cast<Scalar>(rng.uniform(-bound, bound));
  in_b->value.set_zero();
  out_b->value.set_zero();
  norm_gamma->value.values().setOnes();
  norm_beta->value.set_zero();
  for (auto& s : scans) s.initialize(rng);
}

template <typename Scalar>
Var<Scalar> ss2d_block(Tape<Scalar>& tape, Var<Scalar> bev, const Ss2dParams<Scalar>& params) {
  const auto& cfg = params.config;
  require(bev.value().rank() == 3 && bev.shape()[0] == cfg.channels,
          "ss2d_block: input " + bev.shape().str() + " vs configured channels " + std::to_string(cfg.channels));
  const auto x_extent = bev.shape()[1], y_extent = bev.shape()[2];
  auto x = silu(conv2d(bev, tape.param(*params.in_w), tape.param(*params.in_b)));
  std::vector<DirectionalOutput<Scalar>> outputs;
  for (std::size_t k = 0; k < params.scans.size(); ++k) {
    const ScanDirection dir = kAllDirections[k];
    auto tokens = flatten_direction(x, dir);
    auto sp = selective_params(tape, tokens, params.scans[k]);
    outputs.push_back({dir, selective_scan(tokens, sp.delta, sp.a, sp.b, sp.c, cfg.scan)});
  }
  auto merged = cross_merge(outputs, x_extent, y_extent);
  auto normed = layer_norm(merged, tape.param(*params.norm_gamma), tape.param(*params.norm_beta), Scalar(1e-5));
  return conv2d(normed, tape.param(*params.out_w), tape.param(*params.out_b));
}

std::map<std::int64_t, std::int64_t> neighbor_distance_histogram(ScanDirection dir, std::int64_t x_extent,
                                                                 std::int64_t y_extent,
                                                                 const std::vector<bool>& occupancy) {
  require(occupancy.empty() || static_cast<std::int64_t>(occupancy.size()) == x_extent * y_extent,
          "neighbor_distance_histogram: occupancy size does not match grid");
  const auto order = scan_order(dir, x_extent, y_extent);
  std::vector<std::int64_t> position(order.size());
  for (std::size_t t = 0; t < order.size(); ++t) position[static_cast<std::size_t>(order[t])] = static_cast<std::int64_t>(t);
  std::map<std::int64_t, std::int64_t> hist;
  auto visit = [&](std::int64_t a, std::int64_t b) {
    if (!occupancy.empty() && !(occupancy[a] && occupancy[b])) return;
    ++hist[std::abs(position[a] - position[b])];
  };
  for (std::int64_t ix = 0; ix < x_extent; ++ix)
    for (std::int64_t iy = 0; iy < y_extent; ++iy) {
      const auto cell = ix * y_extent + iy;
      if (iy + 1 < y_extent) visit(cell, cell + 1);
      if (ix + 1 < x_extent) visit(cell, cell + y_extent);
    }
  return hist;
}

EmptyRunStats empty_run_stats(ScanDirection dir, std::int64_t x_extent, std::int64_t y_extent,
                              const std::vector<bool>& occupancy) {
  require(static_cast<std::int64_t>(occupancy.size()) == x_extent * y_extent,
          "empty_run_stats: occupancy size does not match grid");
  EmptyRunStats stats;
  std::int64_t run = 0, runs = 0, total = 0;
  auto close_run = [&] {
    if (run == 0) return;
    ++stats.run_histogram[run];
    stats.longest_run = std::max(stats.longest_run, run);
    total += run;
    ++runs;
  };
  for (auto cell : scan_order(dir, x_extent, y_extent)) {
    if (occupancy[static_cast<std::size_t>(cell)]) {
      stats.gap_before_occupied.push_back(run);
      close_run();
      run = 0;
    } else {
      ++run;
    }
  }
  close_run();
  stats.mean_run = runs > 0 ? static_cast<double>(total) / static_cast<double>(runs) : 0.0;
  return stats;
}

#define PM_INSTANTIATE_CROSS_SCAN(S)                                                                          \
  template DirectionalSequences<S> cross_scan_flatten(const Tensor<S>&);                                      \
  template Tensor<S> unflatten(const Tensor<S>&, ScanDirection, std::int64_t, std::int64_t);                  \
  template Tensor<S> cross_merge(const DirectionalSequences<S>&);                                             \
  template Var<S> flatten_direction(Var<S>, ScanDirection);                                                   \
  template Var<S> cross_merge(const std::vector<DirectionalOutput<S>>&, std::int64_t, std::int64_t);          \
  template struct Ss2dParams<S>;                                                                              \
  template Var<S> ss2d_block(Tape<S>&, Var<S>, const Ss2dParams<S>&);

PM_INSTANTIATE_CROSS_SCAN(float)
PM_INSTANTIATE_CROSS_SCAN(double)

#undef PM_INSTANTIATE_CROSS_SCAN

}  // namespace pillarmamba
