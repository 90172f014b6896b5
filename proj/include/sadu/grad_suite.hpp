// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of every differentiable layer and of a tiny
// end-to-end network, in double precision. Shared by the CLI and the tests.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sadu/model.hpp"

namespace sadu {

inline constexpr double kOpGradTolerance = 1e-4;
inline constexpr double kEndToEndGradTolerance = 1e-3;

/// Arguments whose gradient is identically zero (key-side biases of the
/// attention subnet: they shift every score in a softmax row by the same
/// amount) have no meaningful relative error. For those the entry checks that
/// both the analytic and the finite-difference gradient stay below the
/// finite-difference noise floor instead.
struct GradSuiteEntry {
  std::string name;  // "<op>/<argument>"
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t seeds = 0;
  bool zero_gradient = false;
  double max_abs_gradient = 0.0;
  double abs_tolerance = 0.0;

  bool passed() const {
    return zero_gradient ? max_abs_gradient < abs_tolerance : max_rel_error < tolerance;
  }
};

/// True for parameter names whose gradient is identically zero.
bool is_shift_invariant_parameter(const std::string& name);

/// Finite-difference noise bound for a loss of magnitude `loss` at step h.
double fd_noise_bound(double loss, double h = 1e-5);

/// Each op and argument checked at `seeds` random points; the entry keeps the
/// worst error across seeds.
std::vector<GradSuiteEntry> run_op_grad_suite(std::size_t seeds = 10, std::uint64_t base_seed = 1);

/// C=4, K=2, two levels, F_in=13 (padded to 16), T=8, attention on, random
/// biases; every parameter and the input are checked.
ModelConfig tiny_grad_config();
/// Two entries: the relative check over all identifiable parameters and the
/// input, and the zero-gradient check over the shift-invariant biases.
std::vector<GradSuiteEntry> run_end_to_end_grad_check(std::uint64_t seed = 1);

}  // namespace sadu
