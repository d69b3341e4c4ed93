#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pillarmamba/ops.hpp"
#include "pillarmamba/rng.hpp"

namespace pillarmamba {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-3;
  // Larger tensors are checked on a seeded random subset of coordinates.
  std::int64_t max_coords_per_tensor = 64;
  std::uint64_t seed = 17;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
  bool passed = true;
  std::string worst;  // "<tensor index>[<flat index>]: analytic vs numeric"
};

/// Compares reverse-mode gradients with central finite differences.
///
/// `fn(tape)` builds the computation and must bind every checked Param through
/// `tape.param(...)`. Non-scalar outputs are reduced with a fixed seeded weighting so
/// every output element contributes a distinct direction.
template <typename Fn>
GradCheckReport grad_check(Fn&& fn, const std::vector<Param<double>*>& params, const GradCheckOptions& opts = {}) {
  Tensor<double> reduction;
  auto loss_of = [&](Tape<double>& tape) -> Var<double> {
    Var<double> out = fn(tape);
    if (out.value().size() == 1) return out;
    if (!(reduction.shape() == out.shape())) {
      Rng rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
      reduction = Tensor<double>(out.shape());
      for (auto& v : reduction.span()) v = rng.normal();
    }
    return weighted_sum(out, reduction);
  };

  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss_of(tape));
  }

  GradCheckReport report;
  Rng picker(opts.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param<double>& p = *params[pi];
    const Tensor<double> analytic = p.grad;
    std::vector<std::int64_t> coords(static_cast<std::size_t>(p.value.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<std::int64_t>(i);
    if (static_cast<std::int64_t>(coords.size()) > opts.max_coords_per_tensor) {
      picker.shuffle(std::span<std::int64_t>(coords));
      coords.resize(static_cast<std::size_t>(opts.max_coords_per_tensor));
    }
    for (auto idx : coords) {
      const double saved = p.value[idx];
      p.value[idx] = saved + opts.step;
      double plus;
      {
        Tape<double> tape(false);
        plus = loss_of(tape).value()[0];
      }
      p.value[idx] = saved - opts.step;
      double minus;
      {
        Tape<double> tape(false);
        minus = loss_of(tape).value()[0];
      }
      p.value[idx] = saved;
      const double numeric = (plus - minus) / (2.0 * opts.step);
      const double a = analytic[idx];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
      ++report.checked;
      if (!(rel <= report.max_rel_error)) {
        report.max_rel_error = rel;
        report.worst = std::to_string(pi) + "[" + std::to_string(idx) + "]: " + std::to_string(a) + " vs " +
                       std::to_string(numeric);
      }
    }
  }
  report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error <= opts.tolerance;
  return report;
}

/// Tensor-input form: `fn(tape, vars)` receives one Var per input.
template <typename Fn>
GradCheckReport grad_check_inputs(Fn&& fn, std::vector<Tensor<double>> inputs, const GradCheckOptions& opts = {}) {
  std::vector<Param<double>> holders;
  holders.reserve(inputs.size());
  for (auto& t : inputs) holders.emplace_back(std::move(t));
  std::vector<Param<double>*> ptrs;
  for (auto& h : holders) ptrs.push_back(&h);
  return grad_check(
      [&](Tape<double>& tape) {
        std::vector<Var<double>> vars;
        for (auto& h : holders) vars.push_back(tape.param(h));
        return fn(tape, vars);
      },
      ptrs, opts);
}

}  // namespace pillarmamba
