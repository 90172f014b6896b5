// SPDX-License-Identifier: Apache-2.0
//
// Synthetic corpus: an exactly periodic accompaniment (harmonic chord tones
// gated by a fixed rhythm plus a click train) under a non-repeating voice
// (gliding harmonic notes with vibrato).

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sadu/audio.hpp"

namespace sadu {

struct AccompanimentSpec {
  double period_s = 0.512;  // pattern length; must be a whole number of samples
  std::vector<double> chord_hz = {130.81, 164.81, 196.00};
  std::size_t harmonics = 4;
  double click_rate_hz = 3.90625;  // clicks per second inside the pattern
  double transpose_semitones = 3.0;  // per-track random transposition in [-x, x]
  double rms = 0.15;  // lowered when the peak would exceed 0.95
};

struct VoiceSpec {
  double min_pitch_hz = 180.0;
  double max_pitch_hz = 520.0;
  std::size_t harmonics = 6;
  double notes_per_s = 2.5;        // mean onset density
  double glide_semitones = 4.0;    // max pitch change across one note
  double vibrato_hz = 5.5;
  double vibrato_depth = 0.015;    // relative frequency deviation
  double rms = 0.12;  // lowered when the peak would exceed 0.95
  double max_autocorr = 0.3;       // at the accompaniment period
};

struct SynthSpec {
  double duration_s = 4.096;
  AccompanimentSpec accompaniment;
  VoiceSpec voice;

  std::size_t period_samples() const;
  std::size_t total_samples() const;
  /// Throws ContractError when a frequency reaches Nyquist or the period
  /// does not tile the duration exactly.
  void validate() const;
};

AudioClip gen_accompaniment(const SynthSpec& spec, std::uint64_t seed);
AudioClip gen_voice(const SynthSpec& spec, std::uint64_t seed);

/// Normalized correlation of x[i] and x[i + lag] over the overlap.
double autocorrelation(const AudioClip& clip, std::size_t lag);

/// Writes voice_NNN.wav / accomp_NNN.wav (float32) and manifest.tsv; returns
/// the manifest path. Every track draws from its own seed streams.
std::filesystem::path gen_dataset(std::size_t n_tracks, const SynthSpec& spec,
                                  const std::filesystem::path& out_dir, std::uint64_t seed);

}  // namespace sadu
