#pragma once

#include <string>
#include <utility>

#include "pillarmamba/ops.hpp"
#include "pillarmamba/rng.hpp"
#include "pillarmamba/tensor.hpp"

namespace pillarmamba {

/// Exact zero-order hold, or the first-order shortcut B_bar = delta * B.
enum class ZohMode { exact, simplified };

/// Execution form of a linear scan. `conv` only exists for time-invariant parameters.
enum class ScanForm { recurrent, parallel, conv };

ScanForm parse_scan_form(const std::string& name);
std::string to_string(ScanForm form);

/// Below this |delta * a| the ZOH input factor switches to its series limit delta.
inline constexpr double kZohLimitThreshold = 1e-6;

struct SsmDims {
  std::int64_t state_dim = 1;
  std::int64_t seq_len = 1;
  std::int64_t channels = 1;
};

/// Continuous parameters with diagonal A, one (a, b, c) row of length M per channel.
template <typename Scalar>
struct ContinuousSsm {
  RowMatrix<Scalar> a;      // (D, M), negative
  RowMatrix<Scalar> b;      // (D, M)
  RowMatrix<Scalar> c;      // (D, M)
  Vector<Scalar> delta;     // (D), positive
};

/// Discrete parameters, flattened lane-major: lane = d * M + m.
/// Time-invariant sets hold a single row; per-step sets hold one row per token.
template <typename Scalar>
struct DiscreteSsm {
  RowMatrix<Scalar> a_bar;
  RowMatrix<Scalar> b_bar;
  RowMatrix<Scalar> c_bar;
  std::int64_t channels = 0;
  std::int64_t state_dim = 0;
  bool per_step = false;

  std::int64_t lanes() const { return channels * state_dim; }
  std::int64_t steps() const { return a_bar.rows(); }
  std::int64_t row(std::int64_t t) const { return per_step ? t : 0; }
};

/// ZOH for one diagonal entry: returns (a_bar, input factor) so that b_bar = factor * b.
template <typename Scalar>
std::pair<Scalar, Scalar> zoh_factors(Scalar a, Scalar delta, ZohMode mode = ZohMode::exact) {
  const Scalar da = delta * a;
  const Scalar a_bar = std::exp(da);
  if (mode == ZohMode::simplified) return {a_bar, delta};
  // Series expm1(da) / a = delta (1 + da / 2 + ...); exact at a = 0.
  if (std::abs(da) < Scalar(kZohLimitThreshold)) return {a_bar, delta * (Scalar(1) + da / Scalar(2))};
  return {a_bar, std::expm1(da) / a};
}

template <typename Scalar>
DiscreteSsm<Scalar> discretize_zoh(const ContinuousSsm<Scalar>& cont, ZohMode mode = ZohMode::exact);

/// Per-step discretization of selective parameters: A (D, M), B/C (T, M), delta (T, D) >= 0.
template <typename Scalar>
DiscreteSsm<Scalar> discretize_selective(const RowMatrix<Scalar>& a, const RowMatrix<Scalar>& b,
                                         const RowMatrix<Scalar>& c, const RowMatrix<Scalar>& delta,
                                         ZohMode mode = ZohMode::exact);

/// h_t = a_bar h_{t-1} + b_bar x_t, y_t = c_bar . h_t, with h_{-1} = 0. x and y are (T, D).
template <typename Scalar>
RowMatrix<Scalar> scan_recurrent(const DiscreteSsm<Scalar>& disc, const RowMatrix<Scalar>& x);

/// Causal kernel K_k = sum_m c a^k b per channel, shape (T, D). Time-invariant parameters only.
template <typename Scalar>
RowMatrix<Scalar> scan_kernel(const DiscreteSsm<Scalar>& disc, std::int64_t steps);

/// y_t = sum_{k <= t} K_k x_{t-k}.
template <typename Scalar>
RowMatrix<Scalar> apply_conv_form(const RowMatrix<Scalar>& x, const RowMatrix<Scalar>& kernel);

struct ParallelScanOptions {
  // Tokens per chunk. Results are bit-stable for a fixed partition regardless of workers.
  std::int64_t partition = 64;
  int workers = 1;
};

/// Chunked work-efficient scan over the associative pair operator
/// (a, u) then (a', u') = (a a', a' u + u').
template <typename Scalar>
RowMatrix<Scalar> scan_parallel(const DiscreteSsm<Scalar>& disc, const RowMatrix<Scalar>& x,
                                const ParallelScanOptions& opts = {});

/// Dispatches on form; `conv` rejects per-step parameters.
template <typename Scalar>
RowMatrix<Scalar> run_scan(ScanForm form, const DiscreteSsm<Scalar>& disc, const RowMatrix<Scalar>& x,
                           const ParallelScanOptions& opts = {});

struct SelectiveScanOptions {
  ZohMode zoh = ZohMode::exact;
  ScanForm form = ScanForm::recurrent;
  ParallelScanOptions parallel;
};

/// Differentiable selective scan.
/// u, delta: (T, D); a: (D, M) continuous negative diagonal; b, c: (T, M). Returns (T, D).
template <typename Scalar>
Var<Scalar> selective_scan(Var<Scalar> u, Var<Scalar> delta, Var<Scalar> a, Var<Scalar> b, Var<Scalar> c,
                           const SelectiveScanOptions& opts = {});

/// Differentiable time-invariant discrete scan. x: (T, D); a_bar, b_bar, c_bar: (D, M).
template <typename Scalar>
Var<Scalar> scan_discrete(Var<Scalar> x, Var<Scalar> a_bar, Var<Scalar> b_bar, Var<Scalar> c_bar);

/// Input-dependent projections for one scan.
template <typename Scalar>
struct SelectiveProjection {
  Param<Scalar>* b_proj = nullptr;   // (M, D)
  Param<Scalar>* b_bias = nullptr;   // (M)
  Param<Scalar>* c_proj = nullptr;   // (M, D)
  Param<Scalar>* c_bias = nullptr;   // (M)
  Param<Scalar>* dt_proj = nullptr;  // (D, D)
  Param<Scalar>* dt_bias = nullptr;  // (D)
  Param<Scalar>* a_log = nullptr;    // (D, M)

  /// Registers zero-initialized parameters under `prefix`.
  static SelectiveProjection create(ParamStore<Scalar>& store, const std::string& prefix, std::int64_t channels,
                                    std::int64_t state_dim);
  /// Mamba-style initialization: A = -(1..M), delta in [1e-3, 1e-1], small random projections.
  void initialize(Rng& rng);
};

template <typename Scalar>
struct SelectiveParams {
  Var<Scalar> b;      // (T, M)
  Var<Scalar> c;      // (T, M)
  Var<Scalar> delta;  // (T, D), softplus so strictly positive
  Var<Scalar> a;      // (D, M), -exp(a_log) so strictly negative
};

/// x: (T, D) tokens.
template <typename Scalar>
SelectiveParams<Scalar> selective_params(Tape<Scalar>& tape, Var<Scalar> x, const SelectiveProjection<Scalar>& proj);

}  // namespace pillarmamba
