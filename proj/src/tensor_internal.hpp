// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <vector>

#include "sadu/error.hpp"
#include "sadu/tensor.hpp"

namespace sadu::internal {

template <typename S>
bool all_finite(std::span<const S> values) {
  for (S v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

/// Records `backward` on the active tape when any input needs a gradient.
/// Debug builds also reject non-finite outputs produced from finite inputs.
template <typename S>
void maybe_record(std::initializer_list<Tensor<S>> inputs, const Tensor<S>& result,
                  std::function<void()> backward) {
#ifndef NDEBUG
  bool inputs_finite = true;
  for (const auto& in : inputs) inputs_finite = inputs_finite && all_finite(in.data());
  if (inputs_finite && !all_finite(result.data())) {
    throw ContractError("non-finite value produced from finite inputs, shape " +
                        shape_str(result.shape()));
  }
#endif
  Tape<S>* tape = Tape<S>::active();
  if (tape == nullptr) return;
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (!needs_grad) return;
  result.node()->requires_grad = true;
  std::vector<typename Tape<S>::NodePtr> nodes;
  nodes.reserve(inputs.size());
  for (const auto& in : inputs) nodes.push_back(in.node());
  tape->record(std::move(nodes), result.node(), std::move(backward));
}

}  // namespace sadu::internal
