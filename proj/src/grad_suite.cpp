// SPDX-License-Identifier: Apache-2.0
#include "sadu/grad_suite.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include "sadu/grad_check.hpp"
#include "sadu/nn.hpp"
#include "sadu/rng.hpp"
#include "sadu/trainer.hpp"

namespace sadu {
namespace {

using T = Tensor<double>;

T random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = uniform(rng, lo, hi);
  return T(std::move(shape), std::move(data));
}

// Well-separated values in random order, so max pooling has no near ties.
T distinct_tensor(Rng& rng, Shape shape) {
  const std::size_t n = shape_numel(shape);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = 0.1 * static_cast<double>(order[i]) + uniform(rng, 0.0, 0.01);
  return T(std::move(shape), std::move(data));
}

// Values with |v| >= 0.1 so kinks at zero are out of finite-difference reach.
T away_from_zero(Rng& rng, Shape shape) {
  T t = random_tensor(rng, std::move(shape));
  for (double& v : t.mutable_data()) v = (v < 0 ? -0.1 : 0.1) + 0.9 * v;
  return t;
}

// Scalar probe: sum(out * r) with a fixed random weighting r.
T weighted_sum(const T& out, const T& r) { return sum(mul(out, r)); }

struct Case {
  std::string op;
  // Builds tensors for one seed and returns (argument name, tensor) pairs
  // plus the forward function over them.
  std::function<void(Rng&, std::vector<std::pair<std::string, T>>&,
                     std::function<T(const std::vector<std::pair<std::string, T>>&)>&)>
      build;
};

std::vector<Case> op_cases() {
  std::vector<Case> cases;
  auto conv_case = [](std::string name, Shape x, Shape w, Padding pad) {
    return Case{std::move(name), [=](Rng& rng, auto& args, auto& fwd) {
                  args = {{"input", random_tensor(rng, x)},
                          {"weight", random_tensor(rng, w)},
                          {"bias", random_tensor(rng, Shape{w[0]})}};
                  fwd = [pad](const auto& a) {
                    return conv2d(a[0].second, Conv2dParams<double>{a[1].second, a[2].second, pad});
                  };
                }};
  };
  cases.push_back(conv_case("conv2d_3x3_same", {2, 5, 5}, {3, 2, 3, 3}, Padding::kSame));
  cases.push_back(conv_case("conv2d_2x2_same", {2, 4, 5}, {2, 2, 2, 2}, Padding::kSame));
  cases.push_back(conv_case("conv2d_1x1", {3, 4, 4}, {2, 3, 1, 1}, Padding::kSame));
  cases.push_back(conv_case("conv2d_3x3_valid", {2, 5, 6}, {2, 2, 3, 3}, Padding::kNone));

  cases.push_back({"conv2d_transpose", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"input", random_tensor(rng, {3, 3, 2})},
                             {"weight", random_tensor(rng, {3, 2, 2, 2})},
                             {"bias", random_tensor(rng, {2})}};
                     fwd = [](const auto& a) {
                       return conv2d_transpose(a[0].second, ConvT2dParams<double>{a[1].second, a[2].second});
                     };
                   }});
  cases.push_back({"maxpool2x2", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"input", distinct_tensor(rng, {2, 4, 6})}};
                     fwd = [](const auto& a) { return maxpool2x2(a[0].second); };
                   }});
  cases.push_back({"linear", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"input", random_tensor(rng, {4, 5})},
                             {"weight", random_tensor(rng, {3, 4})},
                             {"bias", random_tensor(rng, {3})}};
                     fwd = [](const auto& a) {
                       return linear(a[0].second, LinearParams<double>{a[1].second, a[2].second});
                     };
                   }});
  cases.push_back({"concat_channels", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"first", random_tensor(rng, {2, 3, 3})},
                             {"second", random_tensor(rng, {1, 3, 3})}};
                     fwd = [](const auto& a) { return concat_channels(a[0].second, a[1].second); };
                   }});
  cases.push_back({"matmul", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"left", random_tensor(rng, {3, 4})}, {"right", random_tensor(rng, {4, 2})}};
                     fwd = [](const auto& a) { return matmul(a[0].second, a[1].second); };
                   }});
  cases.push_back({"softmax_rows", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"input", random_tensor(rng, {3, 5}, -2.0, 2.0)}};
                     fwd = [](const auto& a) { return softmax_rows(a[0].second); };
                   }});
  cases.push_back({"elu", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"input", away_from_zero(rng, {4, 4})}};
                     fwd = [](const auto& a) { return elu(a[0].second); };
                   }});
  cases.push_back({"relu", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"input", away_from_zero(rng, {4, 4})}};
                     fwd = [](const auto& a) { return relu(a[0].second); };
                   }});
  cases.push_back({"l1", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"input", away_from_zero(rng, {3, 4})}};
                     fwd = [](const auto& a) { return l1(a[0].second); };
                   }});
  cases.push_back({"dense_block", [](Rng& rng, auto& args, auto& fwd) {
                     args = {{"input", random_tensor(rng, {1, 4, 4})},
                             {"conv1.weight", random_tensor(rng, {2, 1, 3, 3})},
                             {"conv1.bias", random_tensor(rng, {2})},
                             {"conv2.weight", random_tensor(rng, {2, 3, 3, 3})},
                             {"conv2.bias", random_tensor(rng, {2})}};
                     fwd = [](const auto& a) {
                       DenseBlockParams<double> block;
                       block.layers.push_back({a[1].second, a[2].second});
                       block.layers.push_back({a[3].second, a[4].second});
                       return dense_block_forward(a[0].second, block);
                     };
                   }});
  cases.push_back({"attention_subnet", [](Rng& rng, auto& args, auto& fwd) {
                     // C = 2, F = 4, T = 3, C' = 1, E = 2
                     args = {{"input", random_tensor(rng, {2, 4, 3})},
                             {"query_conv.weight", random_tensor(rng, {1, 2, 1, 1})},
                             {"query_conv.bias", random_tensor(rng, {1})},
                             {"key_conv.weight", random_tensor(rng, {1, 2, 1, 1})},
                             {"key_conv.bias", random_tensor(rng, {1})},
                             {"value_conv.weight", random_tensor(rng, {2, 2, 1, 1})},
                             {"value_conv.bias", random_tensor(rng, {2})},
                             {"query_linear.weight", random_tensor(rng, {2, 4})},
                             {"query_linear.bias", random_tensor(rng, {2})},
                             {"key_linear.weight", random_tensor(rng, {2, 4})},
                             {"key_linear.bias", random_tensor(rng, {2})}};
                     fwd = [](const auto& a) {
                       AttentionParams<double> p{{a[1].second, a[2].second},
                                                 {a[3].second, a[4].second},
                                                 {a[5].second, a[6].second},
                                                 {a[7].second, a[8].second},
                                                 {a[9].second, a[10].second}};
                       return attention_subnet_forward(a[0].second, p);
                     };
                   }});
  return cases;
}

}  // namespace

bool is_shift_invariant_parameter(const std::string& name) {
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with("key_conv.bias") || ends_with("key_linear.bias");
}

double fd_noise_bound(double loss, double h) {
  return 100.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss)) / h;
}

std::vector<GradSuiteEntry> run_op_grad_suite(std::size_t seeds, std::uint64_t base_seed) {
  std::vector<GradSuiteEntry> entries;
  for (const Case& c : op_cases()) {
    std::map<std::string, std::size_t> slot;
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(stream_seed(stream_seed(base_seed, c.op), static_cast<std::uint64_t>(s)));
      std::vector<std::pair<std::string, T>> args;
      std::function<T(const std::vector<std::pair<std::string, T>>&)> fwd;
      c.build(rng, args, fwd);
      T probe;
      {
        NoGradScope<double> no_grad;
        probe = random_tensor(rng, fwd(args).shape());
      }
      double loss_value = 0.0;
      {
        NoGradScope<double> no_grad;
        loss_value = weighted_sum(fwd(args), probe).item();
      }
      for (auto& [arg_name, tensor] : args) {
        const auto report = grad_check_report([&] { return weighted_sum(fwd(args), probe); }, tensor);
        const std::string name = c.op + "/" + arg_name;
        auto [it, inserted] = slot.try_emplace(name, entries.size());
        if (inserted) {
          GradSuiteEntry e;
          e.name = name;
          e.tolerance = kOpGradTolerance;
          e.zero_gradient = is_shift_invariant_parameter(arg_name);
          e.abs_tolerance = std::numeric_limits<double>::infinity();
          entries.push_back(e);
        }
        auto& e = entries[it->second];
        e.max_rel_error = std::max(e.max_rel_error, report.max_rel_error);
        e.max_abs_gradient =
            std::max({e.max_abs_gradient, report.max_abs_analytic, report.max_abs_numeric});
        e.abs_tolerance = std::min(e.abs_tolerance, fd_noise_bound(loss_value));
        e.seeds += 1;
      }
    }
  }
  return entries;
}

ModelConfig tiny_grad_config() {
  ModelConfig c;
  c.channels = 4;
  c.layers_per_block = 2;
  c.levels = 2;
  c.attn_channels = 2;
  c.embed_dim = 3;
  c.freq_bins = 13;
  c.t_window = 8;
  c.attention_enabled = true;
  return c;
}

std::vector<GradSuiteEntry> run_end_to_end_grad_check(std::uint64_t seed) {
  const ModelConfig config = tiny_grad_config();
  ModelParams<double> params = init_params<double>(config, seed);
  Rng rng(stream_seed(seed, "end-to-end"));
  for (auto& [name, t] : params.entries()) {
    if (t.rank() == 1) {
      for (double& v : t.mutable_data()) v = uniform(rng, -0.2, 0.2);
    }
  }
  T magnitude = random_tensor(rng, {config.freq_bins, config.t_window}, 0.1, 2.0);
  const T voice = random_tensor(rng, {config.freq_bins, config.t_window}, 0.0, 1.0);
  const T accomp = random_tensor(rng, {config.freq_bins, config.t_window}, 0.0, 1.0);

  auto loss = [&] {
    const MaskPair<double> masks = unet_forward(pad_input(magnitude, config), params, config);
    return l1_mask_loss(masks, magnitude, voice, accomp);
  };

  double loss_value = 0.0;
  {
    NoGradScope<double> no_grad;
    loss_value = loss().item();
  }

  GradSuiteEntry main;
  main.name = "unet_end_to_end";
  main.tolerance = kEndToEndGradTolerance;
  main.seeds = 1;
  GradSuiteEntry invariant;
  invariant.name = "unet_end_to_end/key_biases";
  invariant.seeds = 1;
  invariant.zero_gradient = true;
  invariant.abs_tolerance = fd_noise_bound(loss_value);
  for (auto& [name, t] : params.entries()) {
    const auto report = grad_check_report(loss, t);
    if (is_shift_invariant_parameter(name)) {
      invariant.max_rel_error = std::max(invariant.max_rel_error, report.max_rel_error);
      invariant.max_abs_gradient =
          std::max({invariant.max_abs_gradient, report.max_abs_analytic, report.max_abs_numeric});
    } else {
      main.max_rel_error = std::max(main.max_rel_error, report.max_rel_error);
    }
  }
  main.max_rel_error = std::max(main.max_rel_error, grad_check(loss, magnitude));
  return {main, invariant};
}

}  // namespace sadu
