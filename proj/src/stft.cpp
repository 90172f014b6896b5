// SPDX-License-Identifier: Apache-2.0
#include "sadu/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "sadu/error.hpp"

namespace sadu {

namespace {

// FFTW planning is not thread-safe; plans are created once per size under a
// lock and executed through the thread-safe new-array interface.
struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

const FftPlans& plans_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, FftPlans> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* real = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
  FftPlans p;
  p.forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  fftw_free(real);
  fftw_free(spec);
  return cache.emplace(n, p).first->second;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double, FftwDeleter>;
using ComplexBuffer = std::unique_ptr<fftw_complex, FftwDeleter>;

}  // namespace

std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop) {
  if (length < window) return 0;
  return 1 + (length - window + hop - 1) / hop;
}

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                static_cast<double>(length));
  }
  return w;
}

Spectrogram stft(const AudioClip& clip, std::size_t window, std::size_t hop) {
  if (window < 2 || window % 2 != 0 || hop == 0) {
    throw ContractError("stft: window must be even and hop positive");
  }
  if (clip.samples.size() < window) {
    throw ContractError("stft: clip of " + std::to_string(clip.samples.size()) +
                        " samples is shorter than one window (" + std::to_string(window) + ")");
  }
  Spectrogram spec;
  spec.window_size = window;
  spec.hop = hop;
  spec.bins = window / 2 + 1;
  spec.frames = frame_count(clip.samples.size(), window, hop);
  spec.source_length = clip.samples.size();
  spec.sample_rate = clip.sample_rate;
  spec.data.resize(spec.bins * spec.frames);

  const auto w = hann_window(window);
  const FftPlans& plans = plans_for(window);
  RealBuffer frame(fftw_alloc_real(window));
  ComplexBuffer out(fftw_alloc_complex(spec.bins));
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t n = 0; n < window; ++n) {
      const std::size_t idx = start + n;
      const double x = idx < clip.samples.size() ? clip.samples[idx] : 0.0;
      frame.get()[n] = w[n] * x;
    }
    fftw_execute_dft_r2c(plans.forward, frame.get(), out.get());
    for (std::size_t f = 0; f < spec.bins; ++f) {
      spec.at(f, t) = {out.get()[f][0], out.get()[f][1]};
    }
  }
  return spec;
}

AudioClip istft(const Spectrogram& spec) {
  if (spec.bins != spec.window_size / 2 + 1 || spec.data.size() != spec.bins * spec.frames ||
      spec.hop == 0) {
    throw ContractError("istft: inconsistent spectrogram geometry");
  }
  const std::size_t window = spec.window_size;
  const std::size_t full = spec.frames == 0 ? 0 : (spec.frames - 1) * spec.hop + window;
  std::vector<double> acc(full, 0.0), energy(full, 0.0);
  const auto w = hann_window(window);
  const FftPlans& plans = plans_for(window);
  ComplexBuffer in(fftw_alloc_complex(spec.bins));
  RealBuffer frame(fftw_alloc_real(window));
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t f = 0; f < spec.bins; ++f) {
      in.get()[f][0] = spec.at(f, t).real();
      in.get()[f][1] = spec.at(f, t).imag();
    }
    fftw_execute_dft_c2r(plans.inverse, in.get(), frame.get());
    const std::size_t start = t * spec.hop;
    for (std::size_t n = 0; n < window; ++n) {
      acc[start + n] += w[n] * frame.get()[n] / static_cast<double>(window);
      energy[start + n] += w[n] * w[n];
    }
  }
  AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  const std::size_t length = spec.source_length > 0 ? std::min(spec.source_length, full) : full;
  clip.samples.resize(spec.source_length > 0 ? spec.source_length : full, 0.0f);
  const double peak = energy.empty() ? 0.0 : *std::max_element(energy.begin(), energy.end());
  const double floor = kIstftEnergyFloor * peak;
  for (std::size_t n = 0; n < length; ++n) {
    clip.samples[n] = peak > 0.0 ? static_cast<float>(acc[n] / std::max(energy[n], floor)) : 0.0f;
  }
  return clip;
}

MagPhase split_mag_phase(const Spectrogram& spec) {
  MagPhase mp;
  mp.bins = spec.bins;
  mp.frames = spec.frames;
  mp.magnitude.resize(spec.data.size());
  mp.phase.resize(spec.data.size());
  for (std::size_t i = 0; i < spec.data.size(); ++i) {
    const auto& z = spec.data[i];
    mp.magnitude[i] = std::abs(z);
    // atan2 yields [-pi, pi]; fold -pi onto pi, and pin zero bins to phase 0.
    double ph = mp.magnitude[i] == 0.0 ? 0.0 : std::atan2(z.imag(), z.real());
    if (ph <= -std::numbers::pi) ph = std::numbers::pi;
    mp.phase[i] = ph;
  }
  return mp;
}

Spectrogram combine(const MagPhase& mp, const Spectrogram& like) {
  if (mp.bins != like.bins || mp.frames != like.frames ||
      mp.magnitude.size() != mp.bins * mp.frames || mp.phase.size() != mp.magnitude.size()) {
    throw DimensionError("combine: magnitude/phase planes do not match the spectrogram geometry");
  }
  Spectrogram out = like;
  for (std::size_t i = 0; i < mp.magnitude.size(); ++i) {
    if (!(mp.magnitude[i] >= 0.0)) {
      throw ContractError("combine: negative magnitude at flat index " + std::to_string(i));
    }
    out.data[i] = std::polar(mp.magnitude[i], mp.phase[i]);
  }
  return out;
}

template <typename S>
Tensor<S> magnitude_tensor(const MagPhase& mp) {
  return magnitude_window<S>(mp, 0, mp.frames);
}

template <typename S>
Tensor<S> magnitude_window(const MagPhase& mp, std::size_t first, std::size_t count) {
  std::vector<S> out(mp.bins * count, S(0));
  for (std::size_t f = 0; f < mp.bins; ++f) {
    for (std::size_t t = 0; t < count && first + t < mp.frames; ++t) {
      out[f * count + t] = static_cast<S>(mp.magnitude[f * mp.frames + first + t]);
    }
  }
  return Tensor<S>(Shape{mp.bins, count}, std::move(out));
}

template Tensor<float> magnitude_tensor<float>(const MagPhase&);
template Tensor<double> magnitude_tensor<double>(const MagPhase&);
template Tensor<float> magnitude_window<float>(const MagPhase&, std::size_t, std::size_t);
template Tensor<double> magnitude_window<double>(const MagPhase&, std::size_t, std::size_t);

}  // namespace sadu
