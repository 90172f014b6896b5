// SPDX-License-Identifier: Apache-2.0
#include "sadu/separator.hpp"

#include <cstdio>
#include <fstream>

#include "sadu/error.hpp"
#include "sadu/stft.hpp"
#include "sadu/trainer.hpp"

namespace sadu {

std::vector<std::size_t> window_starts(std::size_t frames, std::size_t t_window) {
  if (t_window == 0) throw ContractError("t_window must be positive");
  if (frames <= t_window) return {0};
  const std::size_t stride = std::max<std::size_t>(1, t_window / 4);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + t_window <= frames; s += stride) starts.push_back(s);
  if (starts.back() + t_window < frames) starts.push_back(frames - t_window);
  return starts;
}

std::vector<std::size_t> window_coverage(std::size_t frames, std::size_t t_window) {
  std::vector<std::size_t> count(frames, 0);
  for (std::size_t s : window_starts(frames, t_window)) {
    for (std::size_t t = s; t < std::min(frames, s + t_window); ++t) ++count[t];
  }
  return count;
}

namespace {

void check_audio(const AudioClip& clip, const ModelConfig& config) {
  if (clip.sample_rate != kSampleRate) {
    throw ContractError("separation expects " + std::to_string(kSampleRate) + " Hz audio, got " +
                        std::to_string(clip.sample_rate));
  }
  if (config.freq_bins != kFreqBins) {
    throw ContractError("model expects " + std::to_string(config.freq_bins) +
                        " frequency bins but the STFT produces " + std::to_string(kFreqBins));
  }
  if (clip.samples.empty()) throw ContractError("cannot separate an empty clip");
}

AudioClip trimmed(AudioClip clip, std::size_t length) {
  clip.samples.resize(length);
  return clip;
}

}  // namespace

SeparationResult separate_track(const AudioClip& clip, const ModelParams<float>& params,
                                const ModelConfig& config, const SeparateOptions& options) {
  config.validate();
  check_audio(clip, config);

  AudioClip padded = clip;
  const std::size_t min_len = window_samples(config.t_window);
  if (padded.samples.size() < min_len) padded.samples.resize(min_len, 0.0f);

  const Spectrogram spec = stft(padded);
  const MagPhase mixture = split_mag_phase(spec);
  const std::size_t F = mixture.bins, N = mixture.frames, T = config.t_window;
  const auto starts = window_starts(N, T);

  SeparationResult result;
  result.windows = starts.size();
  if (options.dump_attention) {
    const auto [w, s] = *options.dump_attention;
    if (config.attention_blocks().empty()) {
      throw UnsupportedError("attention dump requested for a model without attention");
    }
    if (w >= starts.size()) {
      throw ContractError("window index " + std::to_string(w) + " out of range (" +
                          std::to_string(starts.size()) + " windows)");
    }
    if (s >= config.attention_blocks().size()) {
      throw ContractError("subnet index " + std::to_string(s) + " out of range (" +
                          std::to_string(config.attention_blocks().size()) + " subnets)");
    }
  }

  std::vector<double> voice_sum(F * N, 0.0), accomp_sum(F * N, 0.0);
  std::vector<std::size_t> count(N, 0);
  NoGradScope<float> no_grad;
  for (std::size_t w = 0; w < starts.size(); ++w) {
    const std::size_t s0 = starts[w];
    const bool probe_here = options.dump_attention && options.dump_attention->first == w;
    AttentionProbe<float> probe;
    const MaskPair<float> masks = unet_forward(pad_input(magnitude_window<float>(mixture, s0, T), config),
                                               params, config, probe_here ? &probe : nullptr);
    const auto mv = masks.voice.data();
    const auto ma = masks.accompaniment.data();
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t t = 0; t < T && s0 + t < N; ++t) {
        voice_sum[f * N + s0 + t] += mv[f * T + t];
        accomp_sum[f * N + s0 + t] += ma[f * T + t];
      }
    }
    for (std::size_t t = 0; t < T && s0 + t < N; ++t) ++count[s0 + t];

    if (probe_here) {
      const std::size_t s = options.dump_attention->second;
      AttentionDump dump;
      dump.window = w;
      dump.subnet = s;
      dump.block = probe.blocks.at(s);
      const Tensor<float>& map = probe.maps.at(s);
      dump.map = Tensor<double>(map.shape(), std::vector<double>(map.data().begin(), map.data().end()));
      result.attention.push_back(std::move(dump));
    }
  }

  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t t = 0; t < N; ++t) {
      const double c = static_cast<double>(count[t]);
      voice_sum[f * N + t] /= c;
      accomp_sum[f * N + t] /= c;
    }
  }
  MaskPair<double> averaged{Tensor<double>(Shape{F, N}, std::move(voice_sum)),
                            Tensor<double>(Shape{F, N}, std::move(accomp_sum))};
  const auto [voice_mp, accomp_mp] = apply_masks(averaged, mixture);
  result.voice = trimmed(istft(combine(voice_mp, spec)), clip.size());
  result.accompaniment = trimmed(istft(combine(accomp_mp, spec)), clip.size());
  return result;
}

SeparationResult separate_track(const AudioClip& clip, const Checkpoint& ckpt,
                                const SeparateOptions& options) {
  return separate_track(clip, ckpt.params, ckpt.config, options);
}

AttentionDump dump_attention(const AudioClip& clip, const Checkpoint& ckpt, std::size_t window,
                             std::size_t subnet) {
  SeparateOptions options;
  options.dump_attention = std::make_pair(window, subnet);
  auto result = separate_track(clip, ckpt, options);
  return std::move(result.attention.front());
}

void write_matrix_csv(const std::filesystem::path& path, const Tensor<double>& matrix) {
  if (matrix.rank() != 2) throw DimensionError("matrix CSV needs a rank-2 tensor");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
  char buf[32];
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", matrix[i * cols + j]);
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

double periodic_lag_mass(const Tensor<double>& map, std::size_t period) {
  if (map.rank() != 2 || map.dim(0) != map.dim(1)) throw DimensionError("attention map must be square");
  if (period == 0) throw ContractError("period must be positive");
  const std::size_t T = map.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      const std::size_t lag = i > j ? i - j : j - i;
      if (lag % period == 0) total += map[i * T + j];
    }
  }
  return total / static_cast<double>(T);
}

double uniform_periodic_lag_mass(std::size_t segments, std::size_t period) {
  std::vector<double> uniform(segments * segments, 1.0 / static_cast<double>(segments));
  return periodic_lag_mass(Tensor<double>(Shape{segments, segments}, std::move(uniform)), period);
}

}  // namespace sadu
