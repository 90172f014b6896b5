// SPDX-License-Identifier: Apache-2.0
//
// Dense-UNet with optional self-attention subnets.
//
// Topology for `levels` = L (blocks are numbered from 1):
//   encoder      blocks 1..L, each followed by 2x2 max pooling
//   bottleneck   block L+1
//   decoder      blocks L+2..2L+1, each preceded by a 2x2 transposed conv
//                and a channel concat with the matching encoder block output
//   head         1x1 conv + ELU, then two 1x1 conv + ReLU mask outputs
// A block listed in the attention set is followed by a subnet that appends
// C attended channels, so the next stage sees 2C channels.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sadu/nn.hpp"
#include "sadu/stft.hpp"
#include "sadu/tensor.hpp"

namespace sadu {

struct ModelConfig {
  std::size_t channels = 32;          // C, growth channels of every dense layer
  std::size_t layers_per_block = 4;   // K
  std::size_t levels = 4;             // pool/upsample pairs
  std::size_t attn_channels = 5;      // C', query/key conv channels
  std::size_t embed_dim = 20;         // E, query/key encoding size
  std::optional<std::vector<std::size_t>> attn_blocks;  // unset: blocks 2..2L
  std::size_t freq_bins = kFreqBins;  // F_in
  std::size_t t_window = 1250;        // frames per input window
  bool attention_enabled = true;

  /// 1250-frame self-attention network.
  static ModelConfig attention_default();
  /// 128-frame network without attention.
  static ModelConfig plain_default();

  std::size_t num_blocks() const { return 2 * levels + 1; }
  /// Smallest multiple of 2^levels holding freq_bins.
  std::size_t freq_padded() const;
  /// t_window rounded up to a multiple of 2^levels.
  std::size_t time_padded() const;
  /// Blocks that carry a subnet; empty when attention is disabled.
  std::vector<std::size_t> attention_blocks() const;
  bool has_attention(std::size_t block) const;
  /// Channels leaving a block's stage (after its subnet, if any).
  std::size_t stage_channels(std::size_t block) const;
  /// Channels entering a block.
  std::size_t block_input_channels(std::size_t block) const;
  /// UNet depth (0 = full resolution) a block runs at.
  std::size_t block_depth(std::size_t block) const;

  /// Throws ContractError on an unusable combination.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0, fan_out = 0;
  bool is_bias = false;
};

/// Every learnable tensor, in canonical order.
std::vector<ParamSpec> parameter_plan(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);

/// Named parameter set with stable insertion order.
template <typename S>
class ModelParams {
 public:
  void add(std::string name, Tensor<S> tensor);
  bool contains(const std::string& name) const { return index_.contains(name); }
  const Tensor<S>& at(const std::string& name) const;
  Tensor<S>& at(const std::string& name);

  std::vector<std::pair<std::string, Tensor<S>>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor<S>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_count() const;

  void set_requires_grad(bool on);
  void clear_grads();

  /// Converted copy (e.g. float training weights to double for checks).
  template <typename T>
  ModelParams<T> cast() const {
    ModelParams<T> out;
    for (const auto& [name, t] : entries_) {
      std::vector<T> data(t.data().begin(), t.data().end());
      out.add(name, Tensor<T>(t.shape(), std::move(data)));
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor<S>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename S>
struct DenseBlockParams {
  std::vector<Conv2dParams<S>> layers;  // K same-padded 3x3 convs
};

template <typename S>
struct AttentionParams {
  Conv2dParams<S> query_conv, key_conv, value_conv;  // 1x1
  LinearParams<S> query_linear, key_linear;
};

template <typename S>
DenseBlockParams<S> dense_block_params(const ModelParams<S>& params, const ModelConfig& config,
                                       std::size_t block);
template <typename S>
AttentionParams<S> attention_params(const ModelParams<S>& params, std::size_t block);

/// Glorot-uniform weights, zero biases. Each tensor draws from its own
/// stream keyed by (seed, name), so configs that share a parameter name and
/// shape get identical values.
template <typename S>
ModelParams<S> init_params(const ModelConfig& config, std::uint64_t seed);

/// x_l = ELU(conv3x3([x_{l-1}, ..., x_0])) for l = 1..K; returns x_K.
template <typename S>
Tensor<S> dense_block_forward(const Tensor<S>& x, const DenseBlockParams<S>& block);

/// Self-attention over time segments of a [C x F x T] map. Returns
/// concat(x, O) with 2C channels; the T x T attention map is written to
/// `attention_map` when given.
template <typename S>
Tensor<S> attention_subnet_forward(const Tensor<S>& x, const AttentionParams<S>& params,
                                   Tensor<S>* attention_map = nullptr);

template <typename S>
struct MaskPair {
  Tensor<S> voice;          // [F_in x T_window]
  Tensor<S> accompaniment;  // [F_in x T_window]
};

/// Attention maps captured during a forward pass, in block order.
template <typename S>
struct AttentionProbe {
  std::vector<std::size_t> blocks;
  std::vector<Tensor<S>> maps;
};

/// [F_in x T_window] magnitude -> zero-padded [1 x F_pad x T_pad] network input.
template <typename S>
Tensor<S> pad_input(const Tensor<S>& magnitude, const ModelConfig& config);

template <typename S>
MaskPair<S> unet_forward(const Tensor<S>& input, const ModelParams<S>& params,
                         const ModelConfig& config, AttentionProbe<S>* probe = nullptr);

/// |X_i| = M_i * |Y|, each paired with the mixture phase.
template <typename S>
std::pair<MagPhase, MagPhase> apply_masks(const MaskPair<S>& masks, const MagPhase& mixture);

/// Human-readable layer table with feature-map shapes and the parameter total.
std::string describe_model(const ModelConfig& config);

}  // namespace sadu
