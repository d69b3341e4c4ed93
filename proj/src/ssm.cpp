#include "pillarmamba/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace pillarmamba {

ScanForm parse_scan_form(const std::string& name) {
  if (name == "recurrent") return ScanForm::recurrent;
  if (name == "parallel") return ScanForm::parallel;
  if (name == "conv") return ScanForm::conv;
  throw ConfigError("unknown scan form '" + name + "' (expected recurrent|parallel|conv)");
}

std::string to_string(ScanForm form) {
  switch (form) {
    case ScanForm::recurrent: return "recurrent";
    case ScanForm::parallel: return "parallel";
    case ScanForm::conv: return "conv";
  }
  return "?";
}

template <typename Scalar>
DiscreteSsm<Scalar> discretize_zoh(const ContinuousSsm<Scalar>& cont, ZohMode mode) {
  const auto d = cont.a.rows(), m = cont.a.cols();
  require(cont.b.rows() == d && cont.b.cols() == m && cont.c.rows() == d && cont.c.cols() == m &&
              cont.delta.size() == d,
          "discretize_zoh: inconsistent parameter shapes");
  DiscreteSsm<Scalar> out;
  out.channels = d;
  out.state_dim = m;
  out.a_bar.resize(1, d * m);
  out.b_bar.resize(1, d * m);
  out.c_bar.resize(1, d * m);
  for (std::int64_t ch = 0; ch < d; ++ch) {
    if (!(cont.delta[ch] > Scalar(0)))
      throw ConfigError("discretize_zoh: delta must be positive, got " + std::to_string(double(cont.delta[ch])));
    for (std::int64_t s = 0; s < m; ++s) {
      auto [a_bar, factor] = zoh_factors(cont.a(ch, s), cont.delta[ch], mode);
      out.a_bar(0, ch * m + s) = a_bar;
      out.b_bar(0, ch * m + s) = factor * cont.b(ch, s);
      out.c_bar(0, ch * m + s) = cont.c(ch, s);
    }
  }
  return out;
}

template <typename Scalar>
DiscreteSsm<Scalar> discretize_selective(const RowMatrix<Scalar>& a, const RowMatrix<Scalar>& b,
                                         const RowMatrix<Scalar>& c, const RowMatrix<Scalar>& delta, ZohMode mode) {
  const auto d = a.rows(), m = a.cols(), t_len = b.rows();
  require(b.cols() == m && c.rows() == t_len && c.cols() == m && delta.rows() == t_len && delta.cols() == d,
          "discretize_selective: inconsistent parameter shapes");
  DiscreteSsm<Scalar> out;
  out.channels = d;
  out.state_dim = m;
  out.per_step = true;
  out.a_bar.resize(t_len, d * m);
  out.b_bar.resize(t_len, d * m);
  out.c_bar.resize(t_len, d * m);
  for (std::int64_t t = 0; t < t_len; ++t)
    for (std::int64_t ch = 0; ch < d; ++ch) {
      // softplus underflows to exactly 0 in finite precision; the step then holds the state (a_bar = 1, b_bar = 0).
      if (!(delta(t, ch) >= Scalar(0)))
        throw ConfigError("discretize_selective: delta must be nonnegative, got " + std::to_string(double(delta(t, ch))));
      for (std::int64_t s = 0; s < m; ++s) {
        auto [a_bar, factor] = zoh_factors(a(ch, s), delta(t, ch), mode);
        out.a_bar(t, ch * m + s) = a_bar;
        out.b_bar(t, ch * m + s) = factor * b(t, s);
        out.c_bar(t, ch * m + s) = c(t, s);
      }
    }
  return out;
}

namespace {

template <typename Scalar>
void check_scan_shapes(const DiscreteSsm<Scalar>& disc, const RowMatrix<Scalar>& x) {
  require(x.cols() == disc.channels, "scan: input has " + std::to_string(x.cols()) + " channels, parameters have " +
                                         std::to_string(disc.channels));
  require(disc.a_bar.cols() == disc.lanes() && disc.b_bar.cols() == disc.lanes() && disc.c_bar.cols() == disc.lanes(),
          "scan: parameter lanes inconsistent");
  if (disc.per_step)
    require(disc.steps() == x.rows(), "scan: per-step parameters cover " + std::to_string(disc.steps()) +
                                          " steps, input has " + std::to_string(x.rows()));
  else
    require(disc.steps() == 1, "scan: time-invariant parameters must have one row");
}

// Input drive u_t = b_bar_t * x_t broadcast over the state lanes of each channel.
template <typename Scalar>
Eigen::Array<Scalar, 1, Eigen::Dynamic> drive(const DiscreteSsm<Scalar>& disc, const RowMatrix<Scalar>& x,
                                              std::int64_t t) {
  Eigen::Array<Scalar, 1, Eigen::Dynamic> u(disc.lanes());
  const auto m = disc.state_dim;
  for (std::int64_t ch = 0; ch < disc.channels; ++ch)
    u.segment(ch * m, m) = disc.b_bar.row(disc.row(t)).segment(ch * m, m).array() * x(t, ch);
  return u;
}

template <typename Scalar>
void readout(const DiscreteSsm<Scalar>& disc, const Eigen::Array<Scalar, 1, Eigen::Dynamic>& h, std::int64_t t,
             RowMatrix<Scalar>& y) {
  const auto m = disc.state_dim;
  const auto c = disc.c_bar.row(disc.row(t)).array();
  for (std::int64_t ch = 0; ch < disc.channels; ++ch) y(t, ch) = (c.segment(ch * m, m) * h.segment(ch * m, m)).sum();
}

}  // namespace

template <typename Scalar>
RowMatrix<Scalar> scan_recurrent(const DiscreteSsm<Scalar>& disc, const RowMatrix<Scalar>& x) {
  check_scan_shapes(disc, x);
  RowMatrix<Scalar> y(x.rows(), x.cols());
  Eigen::Array<Scalar, 1, Eigen::Dynamic> h = Eigen::Array<Scalar, 1, Eigen::Dynamic>::Zero(disc.lanes());
  for (std::int64_t t = 0; t < x.rows(); ++t) {
    h = disc.a_bar.row(disc.row(t)).array() * h + drive(disc, x, t);
    readout(disc, h, t, y);
  }
  return y;
}

template <typename Scalar>
RowMatrix<Scalar> scan_kernel(const DiscreteSsm<Scalar>& disc, std::int64_t steps) {
  if (disc.per_step) throw ContractViolation("scan_kernel: the convolution form needs time-invariant parameters");
  require(steps >= 1, "scan_kernel: steps must be positive");
  const auto m = disc.state_dim;
  RowMatrix<Scalar> kernel(steps, disc.channels);
  // power = a_bar^k * b_bar, advanced one step at a time.
  Eigen::Array<Scalar, 1, Eigen::Dynamic> power = disc.b_bar.row(0).array();
  const auto a = disc.a_bar.row(0).array();
  const auto c = disc.c_bar.row(0).array();
  for (std::int64_t k = 0; k < steps; ++k) {
    for (std::int64_t ch = 0; ch < disc.channels; ++ch)
      kernel(k, ch) = (c.segment(ch * m, m) * power.segment(ch * m, m)).sum();
    power *= a;
  }
  return kernel;
}

template <typename Scalar>
RowMatrix<Scalar> apply_conv_form(const RowMatrix<Scalar>& x, const RowMatrix<Scalar>& kernel) {
  require(kernel.cols() == x.cols() && kernel.rows() >= x.rows(),
          "apply_conv_form: kernel (" + std::to_string(kernel.rows()) + ", " + std::to_string(kernel.cols()) +
              ") does not cover input (" + std::to_string(x.rows()) + ", " + std::to_string(x.cols()) + ")");
  RowMatrix<Scalar> y = RowMatrix<Scalar>::Zero(x.rows(), x.cols());
  for (std::int64_t t = 0; t < x.rows(); ++t)
    for (std::int64_t k = 0; k <= t; ++k) y.row(t).array() += kernel.row(k).array() * x.row(t - k).array();
  return y;
}

namespace {

template <typename Scalar>
using LaneRow = Eigen::Array<Scalar, 1, Eigen::Dynamic>;

// Composition of an earlier segment with a later one.
template <typename Scalar>
void combine(const LaneRow<Scalar>& a_early, const LaneRow<Scalar>& u_early, LaneRow<Scalar>& a_late,
             LaneRow<Scalar>& u_late) {
  u_late = a_late * u_early + u_late;
  a_late = a_early * a_late;
}

template <typename Fn>
void for_each_chunk(std::int64_t chunks, int workers, Fn&& fn) {
  if (workers <= 1 || chunks <= 1) {
    for (std::int64_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  const int n = static_cast<int>(std::min<std::int64_t>(workers, chunks));
  std::vector<std::thread> pool;
  for (int w = 0; w < n; ++w)
    pool.emplace_back([&, w] {
      for (std::int64_t c = w; c < chunks; c += n) fn(c);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

template <typename Scalar>
RowMatrix<Scalar> scan_parallel(const DiscreteSsm<Scalar>& disc, const RowMatrix<Scalar>& x,
                                const ParallelScanOptions& opts) {
  check_scan_shapes(disc, x);
  require(opts.partition >= 1, "scan_parallel: partition must be positive");
  const auto steps = x.rows();
  const auto lanes = disc.lanes();
  RowMatrix<Scalar> y(steps, x.cols());
  if (steps == 0) return y;
  const std::int64_t chunks = (steps + opts.partition - 1) / opts.partition;

  // Phase 1: local scans from a zero state, keeping running products of a_bar.
  RowMatrix<Scalar> local(steps, lanes);
  RowMatrix<Scalar> prefix_a(steps, lanes);
  for_each_chunk(chunks, opts.workers, [&](std::int64_t c) {
    const auto begin = c * opts.partition, end = std::min(steps, begin + opts.partition);
    LaneRow<Scalar> h = LaneRow<Scalar>::Zero(lanes);
    LaneRow<Scalar> p = LaneRow<Scalar>::Ones(lanes);
    for (auto t = begin; t < end; ++t) {
      const auto a = disc.a_bar.row(disc.row(t)).array();
      h = a * h + drive(disc, x, t);
      p *= a;
      local.row(t) = h.matrix();
      prefix_a.row(t) = p.matrix();
    }
  });

  // Phase 2: Blelloch exclusive scan over chunk aggregates, padded to a power of two with identities.
  std::int64_t width = 1;
  while (width < chunks) width *= 2;
  std::vector<LaneRow<Scalar>> agg_a(static_cast<std::size_t>(width), LaneRow<Scalar>::Ones(lanes));
  std::vector<LaneRow<Scalar>> agg_u(static_cast<std::size_t>(width), LaneRow<Scalar>::Zero(lanes));
  for (std::int64_t c = 0; c < chunks; ++c) {
    const auto last = std::min(steps, (c + 1) * opts.partition) - 1;
    agg_a[c] = prefix_a.row(last).array();
    agg_u[c] = local.row(last).array();
  }
  for (std::int64_t stride = 1; stride < width; stride *= 2)
    for (std::int64_t i = 2 * stride - 1; i < width; i += 2 * stride)
      combine(agg_a[i - stride], agg_u[i - stride], agg_a[i], agg_u[i]);
  agg_a[width - 1].setOnes();
  agg_u[width - 1].setZero();
  for (std::int64_t stride = width / 2; stride >= 1; stride /= 2)
    for (std::int64_t i = 2 * stride - 1; i < width; i += 2 * stride) {
      LaneRow<Scalar> left_a = agg_a[i - stride], left_u = agg_u[i - stride];
      agg_a[i - stride] = agg_a[i];
      agg_u[i - stride] = agg_u[i];
      // right = (prefix before parent) then (left subtree)
      combine(agg_a[i], agg_u[i], left_a, left_u);
      agg_a[i] = left_a;
      agg_u[i] = left_u;
    }

  // Phase 3: fold each chunk's incoming state into its local results.
  for_each_chunk(chunks, opts.workers, [&](std::int64_t c) {
    const auto begin = c * opts.partition, end = std::min(steps, begin + opts.partition);
    const LaneRow<Scalar>& carry = agg_u[c];
    for (auto t = begin; t < end; ++t) {
      LaneRow<Scalar> h = local.row(t).array() + prefix_a.row(t).array() * carry;
      readout(disc, h, t, y);
    }
  });
  return y;
}

template <typename Scalar>
RowMatrix<Scalar> run_scan(ScanForm form, const DiscreteSsm<Scalar>& disc, const RowMatrix<Scalar>& x,
                           const ParallelScanOptions& opts) {
  switch (form) {
    case ScanForm::recurrent: return scan_recurrent(disc, x);
    case ScanForm::parallel: return scan_parallel(disc, x, opts);
    case ScanForm::conv: return apply_conv_form(x, scan_kernel(disc, x.rows()));
  }
  throw ContractViolation("run_scan: unknown form");
}

template <typename Scalar>
Var<Scalar> selective_scan(Var<Scalar> u, Var<Scalar> delta, Var<Scalar> a, Var<Scalar> b, Var<Scalar> c,
                           const SelectiveScanOptions& opts) {
  require(u.value().rank() == 2 && a.value().rank() == 2, "selective_scan: u must be (T, D) and a (D, M)");
  const auto steps = u.shape()[0], d = u.shape()[1], m = a.shape()[1];
  require(delta.shape() == u.shape(), "selective_scan: delta " + delta.shape().str() + " vs u " + u.shape().str());
  require(a.shape() == Shape{d, m}, "selective_scan: a " + a.shape().str() + " vs channels " + std::to_string(d));
  require(b.shape() == Shape{steps, m} && c.shape() == Shape{steps, m},
          "selective_scan: b/c " + b.shape().str() + "/" + c.shape().str() + " vs (T, M) = " + Shape{steps, m}.str());
  if (opts.form == ScanForm::conv)
    throw ContractViolation("selective_scan: per-step parameters have no convolution form");

  auto disc = discretize_selective<Scalar>(a.value().matrix(d, m), b.value().matrix(steps, m),
                                           c.value().matrix(steps, m), delta.value().matrix(steps, d), opts.zoh);
  const RowMatrix<Scalar> x = u.value().matrix(steps, d);
  RowMatrix<Scalar> y = opts.form == ScanForm::parallel ? scan_parallel(disc, x, opts.parallel) : scan_recurrent(disc, x);
  Tensor<Scalar> out(Shape{steps, d});
  out.matrix(steps, d) = y;

  const ZohMode mode = opts.zoh;
  return u.tape->record(std::move(out), {u, delta, a, b, c},
                        [u, delta, a, b, c, steps, d, m, mode](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    const auto uv = u.value().matrix(steps, d);
    const auto dv = delta.value().matrix(steps, d);
    const auto av = a.value().matrix(d, m);
    const auto bv = b.value().matrix(steps, m);
    const auto cv = c.value().matrix(steps, m);
    const auto gy = g.matrix(steps, d);

    // Replay the forward pass to recover the states h_t.
    RowMatrix<Scalar> states(steps, d * m);
    RowMatrix<Scalar> a_bar(steps, d * m), factor(steps, d * m);
    {
      LaneRow<Scalar> h = LaneRow<Scalar>::Zero(d * m);
      for (std::int64_t ts = 0; ts < steps; ++ts) {
        for (std::int64_t ch = 0; ch < d; ++ch)
          for (std::int64_t s = 0; s < m; ++s) {
            const auto lane = ch * m + s;
            auto [ab, f] = zoh_factors(av(ch, s), dv(ts, ch), mode);
            a_bar(ts, lane) = ab;
            factor(ts, lane) = f;
            h[lane] = ab * h[lane] + f * bv(ts, s) * uv(ts, ch);
          }
        states.row(ts) = h.matrix();
      }
    }

    RowMatrix<Scalar> du = RowMatrix<Scalar>::Zero(steps, d), ddelta = RowMatrix<Scalar>::Zero(steps, d);
    RowMatrix<Scalar> da = RowMatrix<Scalar>::Zero(d, m);
    RowMatrix<Scalar> db = RowMatrix<Scalar>::Zero(steps, m), dc = RowMatrix<Scalar>::Zero(steps, m);
    LaneRow<Scalar> gh_next = LaneRow<Scalar>::Zero(d * m);  // a_bar_{t+1} * dL/dh_{t+1}
    for (std::int64_t ts = steps - 1; ts >= 0; --ts)
      for (std::int64_t ch = 0; ch < d; ++ch)
        for (std::int64_t s = 0; s < m; ++s) {
          const auto lane = ch * m + s;
          const Scalar h = states(ts, lane);
          const Scalar h_prev = ts > 0 ? states(ts - 1, lane) : Scalar(0);
          const Scalar gh = cv(ts, s) * gy(ts, ch) + gh_next[lane];
          dc(ts, s) += gy(ts, ch) * h;
          const Scalar ab = a_bar(ts, lane), f = factor(ts, lane);
          const Scalar g_abar = gh * h_prev;
          const Scalar g_bbar = gh * uv(ts, ch);
          du(ts, ch) += gh * f * bv(ts, s);
          db(ts, s) += g_bbar * f;
          const Scalar g_factor = g_bbar * bv(ts, s);
          const Scalar dlt = dv(ts, ch), aa = av(ch, s);
          // a_bar = exp(delta * a)
          ddelta(ts, ch) += g_abar * aa * ab;
          da(ch, s) += g_abar * dlt * ab;
          // factor = expm1(delta * a) / a, or delta in the limit / simplified form
          const Scalar da_prod = dlt * aa;
          if (mode == ZohMode::simplified) {
            ddelta(ts, ch) += g_factor;
          } else if (std::abs(da_prod) < Scalar(kZohLimitThreshold)) {
            ddelta(ts, ch) += g_factor * (Scalar(1) + da_prod);
            da(ch, s) += g_factor * dlt * dlt / Scalar(2);
          } else {
            ddelta(ts, ch) += g_factor * ab;
            da(ch, s) += g_factor * (da_prod * ab - std::expm1(da_prod)) / (aa * aa);
          }
          gh_next[lane] = ab * gh;
        }
    if (t.requires_grad(u)) t.grad(u).matrix(steps, d) += du;
    if (t.requires_grad(delta)) t.grad(delta).matrix(steps, d) += ddelta;
    if (t.requires_grad(a)) t.grad(a).matrix(d, m) += da;
    if (t.requires_grad(b)) t.grad(b).matrix(steps, m) += db;
    if (t.requires_grad(c)) t.grad(c).matrix(steps, m) += dc;
  });
}

template <typename Scalar>
Var<Scalar> scan_discrete(Var<Scalar> x, Var<Scalar> a_bar, Var<Scalar> b_bar, Var<Scalar> c_bar) {
  require(x.value().rank() == 2 && a_bar.value().rank() == 2, "scan_discrete: x must be (T, D) and a_bar (D, M)");
  const auto steps = x.shape()[0], d = x.shape()[1], m = a_bar.shape()[1];
  require(a_bar.shape() == Shape{d, m} && b_bar.shape() == Shape{d, m} && c_bar.shape() == Shape{d, m},
          "scan_discrete: parameters must be (D, M) = " + Shape{d, m}.str());
  DiscreteSsm<Scalar> disc;
  disc.channels = d;
  disc.state_dim = m;
  disc.a_bar = a_bar.value().matrix(1, d * m);
  disc.b_bar = b_bar.value().matrix(1, d * m);
  disc.c_bar = c_bar.value().matrix(1, d * m);
  const RowMatrix<Scalar> xv = x.value().matrix(steps, d);
  Tensor<Scalar> out(Shape{steps, d});
  out.matrix(steps, d) = scan_recurrent(disc, xv);
  return x.tape->record(std::move(out), {x, a_bar, b_bar, c_bar},
                        [x, a_bar, b_bar, c_bar, disc, steps, d, m](Tape<Scalar>& t, const Tensor<Scalar>& g) {
    const RowMatrix<Scalar> xv = x.value().matrix(steps, d);
    const auto gy = g.matrix(steps, d);
    RowMatrix<Scalar> states(steps, d * m);
    LaneRow<Scalar> h = LaneRow<Scalar>::Zero(d * m);
    for (std::int64_t ts = 0; ts < steps; ++ts) {
      h = disc.a_bar.row(0).array() * h + drive(disc, xv, ts);
      states.row(ts) = h.matrix();
    }
    RowMatrix<Scalar> dx = RowMatrix<Scalar>::Zero(steps, d);
    LaneRow<Scalar> dab = LaneRow<Scalar>::Zero(d * m), dbb = LaneRow<Scalar>::Zero(d * m),
                    dcb = LaneRow<Scalar>::Zero(d * m), gh_next = LaneRow<Scalar>::Zero(d * m);
    for (std::int64_t ts = steps - 1; ts >= 0; --ts)
      for (std::int64_t ch = 0; ch < d; ++ch)
        for (std::int64_t s = 0; s < m; ++s) {
          const auto lane = ch * m + s;
          const Scalar gh = disc.c_bar(0, lane) * gy(ts, ch) + gh_next[lane];
          dcb[lane] += gy(ts, ch) * states(ts, lane);
          dab[lane] += gh * (ts > 0 ? states(ts - 1, lane) : Scalar(0));
          dbb[lane] += gh * xv(ts, ch);
          dx(ts, ch) += gh * disc.b_bar(0, lane);
          gh_next[lane] = disc.a_bar(0, lane) * gh;
        }
    if (t.requires_grad(x)) t.grad(x).matrix(steps, d) += dx;
    if (t.requires_grad(a_bar)) t.grad(a_bar).values() += dab.matrix().transpose();
    if (t.requires_grad(b_bar)) t.grad(b_bar).values() += dbb.matrix().transpose();
    if (t.requires_grad(c_bar)) t.grad(c_bar).values() += dcb.matrix().transpose();
  });
}

template <typename Scalar>
SelectiveProjection<Scalar> SelectiveProjection<Scalar>::create(ParamStore<Scalar>& store, const std::string& prefix,
                                                                std::int64_t channels, std::int64_t state_dim) {
  SelectiveProjection p;
  p.b_proj = &store.add(prefix + ".b_proj", Shape{state_dim, channels});
  p.b_bias = &store.add(prefix + ".b_bias", Shape{state_dim});
  p.c_proj = &store.add(prefix + ".c_proj", Shape{state_dim, channels});
  p.c_bias = &store.add(prefix + ".c_bias", Shape{state_dim});
  p.dt_proj = &store.add(prefix + ".dt_proj", Shape{channels, channels});
  p.dt_bias = &store.add(prefix + ".dt_bias", Shape{channels});
  p.a_log = &store.add(prefix + ".a_log", Shape{channels, state_dim});
  return p;
}

template <typename Scalar>
void SelectiveProjection<Scalar>::initialize(Rng& rng) {
  const auto m = a_log->value.dim(1), d = a_log->value.dim(0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto* w : {b_proj, c_proj, dt_proj})
    for (auto& v : w->value.span()) v = static_cast<Scalar>(rng.uniform(-scale, scale));
  b_bias->value.set_zero();
  c_bias->value.set_zero();
  for (std::int64_t ch = 0; ch < d; ++ch) {
    for (std::int64_t s = 0; s < m; ++s) a_log->value.at(ch, s) = static_cast<Scalar>(std::log(double(s + 1)));
    // Inverse softplus of a log-uniform step in [1e-3, 1e-1].
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    dt_bias->value[ch] = static_cast<Scalar>(dt + std::log(-std::expm1(-dt)));
  }
}

template <typename Scalar>
SelectiveParams<Scalar> selective_params(Tape<Scalar>& tape, Var<Scalar> x, const SelectiveProjection<Scalar>& proj) {
  SelectiveParams<Scalar> out;
  out.b = linear(x, tape.param(*proj.b_proj), tape.param(*proj.b_bias));
  out.c = linear(x, tape.param(*proj.c_proj), tape.param(*proj.c_bias));
  out.delta = softplus(linear(x, tape.param(*proj.dt_proj), tape.param(*proj.dt_bias)));
  out.a = neg_exp(tape.param(*proj.a_log));
  return out;
}

#define PM_INSTANTIATE_SSM(S)                                                                                   \
  template DiscreteSsm<S> discretize_zoh(const ContinuousSsm<S>&, ZohMode);                                     \
  template DiscreteSsm<S> discretize_selective(const RowMatrix<S>&, const RowMatrix<S>&, const RowMatrix<S>&,   \
                                               const RowMatrix<S>&, ZohMode);                                   \
  template RowMatrix<S> scan_recurrent(const DiscreteSsm<S>&, const RowMatrix<S>&);                             \
  template RowMatrix<S> scan_kernel(const DiscreteSsm<S>&, std::int64_t);                                       \
  template RowMatrix<S> apply_conv_form(const RowMatrix<S>&, const RowMatrix<S>&);                              \
  template RowMatrix<S> scan_parallel(const DiscreteSsm<S>&, const RowMatrix<S>&, const ParallelScanOptions&);  \
  template RowMatrix<S> run_scan(ScanForm, const DiscreteSsm<S>&, const RowMatrix<S>&, const ParallelScanOptions&); \
  template Var<S> selective_scan(Var<S>, Var<S>, Var<S>, Var<S>, Var<S>, const SelectiveScanOptions&);          \
  template Var<S> scan_discrete(Var<S>, Var<S>, Var<S>, Var<S>);                                                \
  template struct SelectiveProjection<S>;                                                                       \
  template SelectiveParams<S> selective_params(Tape<S>&, Var<S>, const SelectiveProjection<S>&);

PM_INSTANTIATE_SSM(float)
PM_INSTANTIATE_SSM(double)

#undef PM_INSTANTIATE_SSM

}  // namespace pillarmamba
