// SPDX-License-Identifier: Apache-2.0
#include "sadu/model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "sadu/error.hpp"
#include "sadu/rng.hpp"

namespace sadu {

ModelConfig ModelConfig::attention_default() { return ModelConfig{}; }

ModelConfig ModelConfig::plain_default() {
  ModelConfig c;
  c.attention_enabled = false;
  c.t_window = 128;
  return c;
}

std::size_t ModelConfig::freq_padded() const {
  const std::size_t unit = std::size_t{1} << levels;
  return (freq_bins + unit - 1) / unit * unit;
}

std::size_t ModelConfig::time_padded() const {
  const std::size_t unit = std::size_t{1} << levels;
  return (t_window + unit - 1) / unit * unit;
}

std::vector<std::size_t> ModelConfig::attention_blocks() const {
  if (!attention_enabled) return {};
  std::vector<std::size_t> blocks;
  if (attn_blocks) {
    blocks = *attn_blocks;
  } else {
    for (std::size_t b = 2; b < num_blocks(); ++b) blocks.push_back(b);
  }
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  return blocks;
}

bool ModelConfig::has_attention(std::size_t block) const {
  const auto blocks = attention_blocks();
  return std::find(blocks.begin(), blocks.end(), block) != blocks.end();
}

std::size_t ModelConfig::stage_channels(std::size_t block) const {
  return has_attention(block) ? 2 * channels : channels;
}

std::size_t ModelConfig::block_input_channels(std::size_t block) const {
  if (block == 1) return 1;
  if (block <= levels + 1) return stage_channels(block - 1);
  // Decoder: upsampled previous stage plus the encoder skip (C channels).
  return stage_channels(block - 1) + channels;
}

std::size_t ModelConfig::block_depth(std::size_t block) const {
  return block <= levels + 1 ? block - 1 : num_blocks() - block;
}

void ModelConfig::validate() const {
  if (channels == 0 || layers_per_block == 0 || levels == 0 || attn_channels == 0 ||
      embed_dim == 0 || freq_bins == 0 || t_window == 0) {
    throw ContractError("model config: all sizes must be positive");
  }
  if (levels > 10) throw ContractError("model config: levels must be at most 10");
  if (attn_blocks) {
    for (std::size_t b : *attn_blocks) {
      if (b == 1) throw ContractError("model config: block 1 cannot carry attention");
      if (b == 0 || b > num_blocks()) {
        throw ContractError("model config: attention block " + std::to_string(b) +
                            " outside 2.." + std::to_string(num_blocks()));
      }
    }
  }
}

std::vector<ParamSpec> parameter_plan(const ModelConfig& config) {
  config.validate();
  std::vector<ParamSpec> plan;
  auto conv = [&plan](const std::string& prefix, std::size_t out, std::size_t in, std::size_t k) {
    plan.push_back({prefix + ".weight", {out, in, k, k}, in * k * k, out * k * k, false});
    plan.push_back({prefix + ".bias", {out}, 0, 0, true});
  };
  auto upconv = [&plan](const std::string& prefix, std::size_t in, std::size_t out) {
    plan.push_back({prefix + ".weight", {in, out, 2, 2}, out * 4, in * 4, false});
    plan.push_back({prefix + ".bias", {out}, 0, 0, true});
  };
  auto linear = [&plan](const std::string& prefix, std::size_t out, std::size_t in) {
    plan.push_back({prefix + ".weight", {out, in}, in, out, false});
    plan.push_back({prefix + ".bias", {out}, 0, 0, true});
  };

  const std::size_t c = config.channels;
  const std::size_t levels = config.levels;
  for (std::size_t b = 1; b <= config.num_blocks(); ++b) {
    if (b > levels + 1) {
      const std::size_t stage = config.stage_channels(b - 1);
      upconv("up" + std::to_string(b - levels - 1), stage, stage);
    }
    const std::string block = "block" + std::to_string(b);
    const std::size_t in = config.block_input_channels(b);
    for (std::size_t l = 1; l <= config.layers_per_block; ++l) {
      conv(block + ".conv" + std::to_string(l), c, in + (l - 1) * c, 3);
    }
    if (config.has_attention(b)) {
      const std::string attn = "attn" + std::to_string(b);
      const std::size_t freq = config.freq_padded() >> config.block_depth(b);
      conv(attn + ".query_conv", config.attn_channels, c, 1);
      conv(attn + ".key_conv", config.attn_channels, c, 1);
      conv(attn + ".value_conv", c, c, 1);
      linear(attn + ".query_linear", config.embed_dim, config.attn_channels * freq);
      linear(attn + ".key_linear", config.embed_dim, config.attn_channels * freq);
    }
  }
  conv("reorg", c, config.stage_channels(config.num_blocks()), 1);
  conv("out_voice", 1, c, 1);
  conv("out_accomp", 1, c, 1);
  return plan;
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& spec : parameter_plan(config)) total += shape_numel(spec.shape);
  return total;
}

template <typename S>
void ModelParams<S>::add(std::string name, Tensor<S> tensor) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

template <typename S>
const Tensor<S>& ModelParams<S>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("missing parameter " + name);
  return entries_[it->second].second;
}

template <typename S>
Tensor<S>& ModelParams<S>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("missing parameter " + name);
  return entries_[it->second].second;
}

template <typename S>
std::size_t ModelParams<S>::total_count() const {
  std::size_t total = 0;
  for (const auto& entry : entries_) total += entry.second.numel();
  return total;
}

template <typename S>
void ModelParams<S>::set_requires_grad(bool on) {
  for (auto& entry : entries_) entry.second.set_requires_grad(on);
}

template <typename S>
void ModelParams<S>::clear_grads() {
  for (auto& entry : entries_) entry.second.clear_grad();
}

template <typename S>
DenseBlockParams<S> dense_block_params(const ModelParams<S>& params, const ModelConfig& config,
                                       std::size_t block) {
  DenseBlockParams<S> out;
  const std::string prefix = "block" + std::to_string(block) + ".conv";
  for (std::size_t l = 1; l <= config.layers_per_block; ++l) {
    const std::string name = prefix + std::to_string(l);
    out.layers.push_back({params.at(name + ".weight"), params.at(name + ".bias"), Padding::kSame});
  }
  return out;
}

template <typename S>
AttentionParams<S> attention_params(const ModelParams<S>& params, std::size_t block) {
  const std::string p = "attn" + std::to_string(block) + ".";
  auto conv = [&](const std::string& n) {
    return Conv2dParams<S>{params.at(p + n + ".weight"), params.at(p + n + ".bias"), Padding::kSame};
  };
  auto lin = [&](const std::string& n) {
    return LinearParams<S>{params.at(p + n + ".weight"), params.at(p + n + ".bias")};
  };
  return {conv("query_conv"), conv("key_conv"), conv("value_conv"), lin("query_linear"),
          lin("key_linear")};
}

template <typename S>
ModelParams<S> init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams<S> params;
  for (const auto& spec : parameter_plan(config)) {
    std::vector<S> data(shape_numel(spec.shape), S(0));
    if (!spec.is_bias) {
      const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
      Rng rng(stream_seed(seed, spec.name));
      for (S& v : data) v = static_cast<S>((2.0 * uniform01(rng) - 1.0) * bound);
    }
    params.add(spec.name, Tensor<S>(spec.shape, std::move(data)));
  }
  return params;
}

template <typename S>
Tensor<S> dense_block_forward(const Tensor<S>& x, const DenseBlockParams<S>& block) {
  if (block.layers.empty()) throw ContractError("dense block without layers");
  Tensor<S> features = x;  // [x_{l-1}, ..., x_0]
  Tensor<S> out;
  for (std::size_t l = 0; l < block.layers.size(); ++l) {
    out = elu(conv2d(features, block.layers[l]));
    if (l + 1 < block.layers.size()) features = concat_channels(out, features);
  }
  return out;
}

template <typename S>
Tensor<S> attention_subnet_forward(const Tensor<S>& x, const AttentionParams<S>& params,
                                   Tensor<S>* attention_map) {
  if (!x.defined() || x.rank() != 3) throw DimensionError("attention subnet expects [C x F x T]");
  const std::size_t c = x.dim(0), freq = x.dim(1), time = x.dim(2);

  Tensor<S> q = conv2d(x, params.query_conv);
  Tensor<S> k = conv2d(x, params.key_conv);
  Tensor<S> v = conv2d(x, params.value_conv);
  if (v.dim(0) != c) {
    throw DimensionError("attention subnet: value conv must keep " + std::to_string(c) + " channels");
  }
  // [C' x F x T] is contiguous as [(C' * F) x T]: column t is time segment t.
  q = linear(reshape(q, Shape{q.dim(0) * freq, time}), params.query_linear);  // [E x T]
  k = linear(reshape(k, Shape{k.dim(0) * freq, time}), params.key_linear);    // [E x T]
  Tensor<S> values = reshape(v, Shape{c * freq, time});                       // [(C * F) x T]

  Tensor<S> scores = matmul(transpose(q), k);  // s_ij = Q(i) . K(j)
  Tensor<S> beta = softmax_rows(scores);
  // O(i) = sum_j beta_ij V(j)  =>  O = V * beta^T
  Tensor<S> attended = matmul(values, transpose(beta));
  if (attention_map != nullptr) *attention_map = beta;
  return concat_channels(x, reshape(attended, Shape{c, freq, time}));
}

template <typename S>
Tensor<S> pad_input(const Tensor<S>& magnitude, const ModelConfig& config) {
  if (magnitude.rank() != 2 || magnitude.dim(0) != config.freq_bins ||
      magnitude.dim(1) != config.t_window) {
    throw DimensionError("pad_input: expected [" + std::to_string(config.freq_bins) + "x" +
                         std::to_string(config.t_window) + "] magnitude, got " +
                         shape_str(magnitude.shape()));
  }
  Tensor<S> planes = reshape(magnitude, Shape{1, config.freq_bins, config.t_window});
  return pad_spatial(planes, config.freq_padded(), config.time_padded());
}

template <typename S>
MaskPair<S> unet_forward(const Tensor<S>& input, const ModelParams<S>& params,
                         const ModelConfig& config, AttentionProbe<S>* probe) {
  config.validate();
  const Shape expected{1, config.freq_padded(), config.time_padded()};
  if (input.shape() != expected) {
    throw DimensionError("unet_forward: expected input " + shape_str(expected) + ", got " +
                         shape_str(input.shape()));
  }
  const std::size_t levels = config.levels;

  auto stage = [&](const Tensor<S>& block_in, std::size_t block, Tensor<S>* block_out) {
    Tensor<S> h = dense_block_forward(block_in, dense_block_params(params, config, block));
    if (block_out != nullptr) *block_out = h;
    if (!config.has_attention(block)) return h;
    Tensor<S> map;
    Tensor<S> out = attention_subnet_forward(h, attention_params(params, block),
                                             probe != nullptr ? &map : nullptr);
    if (probe != nullptr) {
      probe->blocks.push_back(block);
      probe->maps.push_back(map);
    }
    return out;
  };

  std::vector<Tensor<S>> skips(levels);
  Tensor<S> x = input;
  for (std::size_t b = 1; b <= levels; ++b) {
    x = maxpool2x2(stage(x, b, &skips[b - 1]));
  }
  x = stage(x, levels + 1, nullptr);
  for (std::size_t j = 1; j <= levels; ++j) {
    const std::string up = "up" + std::to_string(j);
    Tensor<S> upsampled =
        conv2d_transpose(x, ConvT2dParams<S>{params.at(up + ".weight"), params.at(up + ".bias")});
    x = stage(concat_channels(upsampled, skips[levels - j]), levels + 1 + j, nullptr);
  }

  auto head = [&](const std::string& name) {
    return Conv2dParams<S>{params.at(name + ".weight"), params.at(name + ".bias"), Padding::kSame};
  };
  Tensor<S> features = elu(conv2d(x, head("reorg")));
  auto mask = [&](const std::string& name) {
    Tensor<S> m = relu(conv2d(features, head(name)));
    m = crop_spatial(m, config.freq_bins, config.t_window);
    return reshape(m, Shape{config.freq_bins, config.t_window});
  };
  return {mask("out_voice"), mask("out_accomp")};
}

template <typename S>
std::pair<MagPhase, MagPhase> apply_masks(const MaskPair<S>& masks, const MagPhase& mixture) {
  const Shape expected{mixture.bins, mixture.frames};
  if (masks.voice.shape() != expected || masks.accompaniment.shape() != expected) {
    throw DimensionError("apply_masks: masks " + shape_str(masks.voice.shape()) + " / " +
                         shape_str(masks.accompaniment.shape()) + " vs mixture " +
                         shape_str(expected));
  }
  auto apply = [&](const Tensor<S>& m) {
    MagPhase out;
    out.bins = mixture.bins;
    out.frames = mixture.frames;
    out.phase = mixture.phase;
    out.magnitude.resize(mixture.magnitude.size());
    const auto mv = m.data();
    for (std::size_t i = 0; i < mv.size(); ++i) {
      if (!(mv[i] >= S(0))) throw ContractError("apply_masks: negative mask value");
      out.magnitude[i] = static_cast<double>(mv[i]) * mixture.magnitude[i];
    }
    return out;
  };
  return {apply(masks.voice), apply(masks.accompaniment)};
}

std::string describe_model(const ModelConfig& config) {
  const auto plan = parameter_plan(config);
  std::ostringstream os;
  os << "Dense-UNet: C=" << config.channels << " K=" << config.layers_per_block
     << " levels=" << config.levels << " blocks=" << config.num_blocks()
     << " attention=" << (config.attention_enabled ? "on" : "off") << "\n";
  os << "input: 1x" << config.freq_padded() << "x" << config.time_padded() << " (F_in "
     << config.freq_bins << ", T_window " << config.t_window << ")\n";
  os << "attention blocks:";
  for (std::size_t b : config.attention_blocks()) os << ' ' << b;
  os << "\n\nfeature maps:\n";
  for (std::size_t b = 1; b <= config.num_blocks(); ++b) {
    const std::size_t d = config.block_depth(b);
    os << "  block" << b << "  in " << config.block_input_channels(b) << "x"
       << (config.freq_padded() >> d) << "x" << (config.time_padded() >> d) << "  out "
       << config.stage_channels(b) << "x" << (config.freq_padded() >> d) << "x"
       << (config.time_padded() >> d) << "\n";
  }
  os << "\nparameters:\n";
  std::size_t total = 0;
  for (const auto& spec : plan) {
    const std::size_t n = shape_numel(spec.shape);
    total += n;
    os << "  " << std::left << std::setw(28) << spec.name << std::setw(16) << shape_str(spec.shape)
       << std::right << std::setw(10) << n << "\n";
  }
  os << "total parameters: " << total << "\n";
  return os.str();
}

#define SADU_INSTANTIATE_MODEL(S)                                                               \
  template class ModelParams<S>;                                                                \
  template DenseBlockParams<S> dense_block_params(const ModelParams<S>&, const ModelConfig&,    \
                                                  std::size_t);                                 \
  template AttentionParams<S> attention_params(const ModelParams<S>&, std::size_t);             \
  template ModelParams<S> init_params<S>(const ModelConfig&, std::uint64_t);                    \
  template Tensor<S> dense_block_forward(const Tensor<S>&, const DenseBlockParams<S>&);         \
  template Tensor<S> attention_subnet_forward(const Tensor<S>&, const AttentionParams<S>&,      \
                                              Tensor<S>*);                                      \
  template Tensor<S> pad_input(const Tensor<S>&, const ModelConfig&);                           \
  template MaskPair<S> unet_forward(const Tensor<S>&, const ModelParams<S>&,                    \
                                    const ModelConfig&, AttentionProbe<S>*);                    \
  template std::pair<MagPhase, MagPhase> apply_masks(const MaskPair<S>&, const MagPhase&);

SADU_INSTANTIATE_MODEL(float)
SADU_INSTANTIATE_MODEL(double)

}  // namespace sadu
