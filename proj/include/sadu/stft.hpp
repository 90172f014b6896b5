// SPDX-License-Identifier: Apache-2.0
//
// One-sided STFT with a periodic Hann window and its weighted overlap-add
// inverse. Frames are not centred: frame t covers samples
// [t * hop, t * hop + window), and the tail is zero-padded so the last frame
// is complete.

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "sadu/audio.hpp"
#include "sadu/tensor.hpp"

namespace sadu {

inline constexpr std::size_t kWindowSize = 1024;
inline constexpr std::size_t kHopSize = 256;
inline constexpr std::size_t kFreqBins = kWindowSize / 2 + 1;

struct Spectrogram {
  std::size_t window_size = kWindowSize;
  std::size_t hop = kHopSize;
  std::size_t bins = 0;    // window_size / 2 + 1
  std::size_t frames = 0;
  std::size_t source_length = 0;  // samples of the analysed clip; istft trims to it when set
  int sample_rate = kSampleRate;
  std::vector<std::complex<double>> data;  // [bins x frames]

  std::complex<double>& at(std::size_t f, std::size_t t) { return data[f * frames + t]; }
  const std::complex<double>& at(std::size_t f, std::size_t t) const { return data[f * frames + t]; }
};

struct MagPhase {
  std::size_t bins = 0, frames = 0;
  std::vector<double> magnitude;  // [bins x frames], >= 0
  std::vector<double> phase;      // [bins x frames], radians in (-pi, pi]
};

/// Number of frames produced for a clip of `length` samples.
std::size_t frame_count(std::size_t length, std::size_t window = kWindowSize,
                        std::size_t hop = kHopSize);

/// Periodic Hann window of the given length.
std::vector<double> hann_window(std::size_t length);

/// Requires at least one window of samples (ContractError otherwise).
Spectrogram stft(const AudioClip& clip, std::size_t window = kWindowSize, std::size_t hop = kHopSize);

/// Normaliser floor for the inverse, relative to the peak summed squared window.
inline constexpr double kIstftEnergyFloor = 1e-3;

/// Weighted overlap-add divided by the summed squared window, clamped below
/// at kIstftEnergyFloor times its peak. Where the window energy exceeds the
/// clamp (everything but the outermost ~60 samples at 1024/256) the inverse
/// of an unmodified STFT is exact; near the clip ends the clamp tapers the
/// output instead of amplifying inconsistent (masked) frames by 1/w.
AudioClip istft(const Spectrogram& spec);

MagPhase split_mag_phase(const Spectrogram& spec);

/// Polar recombination; `like` supplies window/hop/source length metadata.
Spectrogram combine(const MagPhase& mp, const Spectrogram& like);

/// Magnitude plane as a [bins x frames] tensor.
template <typename S>
Tensor<S> magnitude_tensor(const MagPhase& mp);

/// Frames [first, first + count) of a magnitude plane; frames past the end are zero.
template <typename S>
Tensor<S> magnitude_window(const MagPhase& mp, std::size_t first, std::size_t count);

}  // namespace sadu
