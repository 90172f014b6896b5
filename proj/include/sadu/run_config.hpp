// SPDX-License-Identifier: Apache-2.0
//
// Line-based `key = value` configuration. '#' starts a comment. Unknown keys
// are rejected. Model keys:
//   channels, layers_per_block, levels, attn_channels, embed_dim,
//   attn_blocks (default | none | comma list), freq_bins, t_window, attention
// Training keys:
//   lr, adam_beta1, adam_beta2, adam_eps, steps, batch_size,
//   checkpoint_every, val_every, val_tracks, seed, augment
// When t_window is omitted it follows `attention`: 1250 on, 128 off.

#pragma once

#include <filesystem>
#include <string>

#include "sadu/model.hpp"
#include "sadu/trainer.hpp"

namespace sadu {

struct RunConfig {
  ModelConfig model;
  TrainOptions train;

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical text listing every key; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config);

/// Model keys only (used inside checkpoints).
ModelConfig parse_model_config(const std::string& text);
std::string format_model_config(const ModelConfig& config);

}  // namespace sadu
