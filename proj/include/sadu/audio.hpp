// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

namespace sadu {

inline constexpr int kSampleRate = 16000;

struct AudioClip {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
};

enum class WavEncoding { kPcm16, kFloat32 };

/// Reads RIFF/WAVE PCM16 or IEEE float32, mono or stereo (channels are
/// averaged). Input at another rate is linearly resampled to `target_rate`
/// with a warning on stderr; pass target_rate = 0 to keep the native rate.
/// Malformed files raise FormatError naming the byte offset.
AudioClip load_wav(const std::filesystem::path& path, int target_rate = kSampleRate);

void save_wav(const std::filesystem::path& path, const AudioClip& clip,
              WavEncoding encoding = WavEncoding::kFloat32);

/// In-memory variants used by the file functions.
AudioClip decode_wav(const std::vector<unsigned char>& bytes, int target_rate = kSampleRate);
std::vector<unsigned char> encode_wav(const AudioClip& clip, WavEncoding encoding);

/// Linear-interpolation resampler; output length is round(len * to / from).
AudioClip resample_linear(const AudioClip& clip, int target_rate);

}  // namespace sadu
