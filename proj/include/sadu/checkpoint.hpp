// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint, little-endian:
//
//   "SADU"  u32 version
//   u32 len, model config text (key = value lines)
//   u32 n_params, then per parameter:
//     u32 name_len, name, u32 rank, u32 extents[rank], f32 data[numel]
//   u8 has_adam; if set:
//     u64 step, f64 lr, f64 beta1, f64 beta2, f64 eps,
//     per parameter (same order): f32 m[numel], f32 v[numel]
//   u64 seed, u64 step, u32 len, RNG state text

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sadu/model.hpp"
#include "sadu/trainer.hpp"

namespace sadu {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
  std::optional<AdamState<float>> adam;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string rng_state;  // textual mt19937_64 state; empty when not training
};

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt);
/// Raises CheckpointError with kBadMagic, kVersionMismatch, kTruncated or
/// kInconsistent.
Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sadu
