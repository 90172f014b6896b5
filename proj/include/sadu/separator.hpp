// SPDX-License-Identifier: Apache-2.0
//
// Full-track inference. Windows of T_window frames start every T_window / 4
// frames; a final window is aligned to the last frame when the stride does
// not land there. Each frame's mask is the mean over the windows covering it.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "sadu/audio.hpp"
#include "sadu/checkpoint.hpp"
#include "sadu/model.hpp"

namespace sadu {

struct AttentionDump {
  std::size_t window = 0;  // index into window_starts()
  std::size_t subnet = 0;  // index into ModelConfig::attention_blocks()
  std::size_t block = 0;   // the block the subnet follows
  Tensor<double> map;      // [segments x segments], rows are queries
};

struct SeparateOptions {
  /// (window, subnet) whose attention map is captured.
  std::optional<std::pair<std::size_t, std::size_t>> dump_attention;
};

struct SeparationResult {
  AudioClip voice;
  AudioClip accompaniment;
  std::vector<AttentionDump> attention;
  std::size_t windows = 0;
};

/// First frame of every inference window for a track of `frames` frames.
std::vector<std::size_t> window_starts(std::size_t frames, std::size_t t_window);

/// Per-frame count of covering windows.
std::vector<std::size_t> window_coverage(std::size_t frames, std::size_t t_window);

SeparationResult separate_track(const AudioClip& clip, const ModelParams<float>& params,
                                const ModelConfig& config, const SeparateOptions& options = {});
SeparationResult separate_track(const AudioClip& clip, const Checkpoint& ckpt,
                                const SeparateOptions& options = {});

/// Attention map of one subnet for one window. Raises UnsupportedError for a
/// model without attention and ContractError for out-of-range indices.
AttentionDump dump_attention(const AudioClip& clip, const Checkpoint& ckpt, std::size_t window,
                             std::size_t subnet);

/// Row-major CSV, 9 significant digits.
void write_matrix_csv(const std::filesystem::path& path, const Tensor<double>& matrix);

/// Mean over rows of the attention mass on columns j with |i - j| a multiple
/// of `period` (in segments, the diagonal included).
double periodic_lag_mass(const Tensor<double>& map, std::size_t period);

/// The same mass for a uniform map: mean over rows of (#matching columns) / T.
double uniform_periodic_lag_mass(std::size_t segments, std::size_t period);

}  // namespace sadu
