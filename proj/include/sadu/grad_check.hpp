// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sadu/tensor.hpp"

namespace sadu {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;   // at worst_index
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
};

/// Compares the tape gradient of a scalar function against central
/// differences, coordinate by coordinate, for the leaf `x`. `f` reads `x`
/// (usually by capture) and returns a one-element tensor.
///
/// Per-coordinate error is |a - n| / max(|a|, |n|, 1e-8).
template <typename F>
GradCheckReport grad_check_report(F&& f, Tensor<double>& x, double h = 1e-5) {
  const bool had_grad_flag = x.requires_grad();
  x.set_requires_grad(true);

  std::vector<double> analytic(x.numel(), 0.0);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> loss = f();
    tape.backward(loss);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  }
  x.clear_grad();

  GradCheckReport report;
  NoGradScope<double> no_grad;
  auto values = x.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + h;
    const double plus = f().item();
    values[i] = original - h;
    const double minus = f().item();
    values[i] = original;

    const double numeric = (plus - minus) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic[i] - numeric) / denom;
    report.max_abs_analytic = std::max(report.max_abs_analytic, std::abs(analytic[i]));
    report.max_abs_numeric = std::max(report.max_abs_numeric, std::abs(numeric));
    if (err > report.max_rel_error || i == 0) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      report.worst_index = i;
      report.analytic = analytic[i];
      report.numeric = numeric;
    }
  }
  x.set_requires_grad(had_grad_flag);
  return report;
}

template <typename F>
double grad_check(F&& f, Tensor<double>& x, double h = 1e-5) {
  return grad_check_report(std::forward<F>(f), x, h).max_rel_error;
}

}  // namespace sadu
