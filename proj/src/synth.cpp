// SPDX-License-Identifier: Apache-2.0
#include "sadu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "sadu/error.hpp"
#include "sadu/rng.hpp"

namespace sadu {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNyquist = kSampleRate / 2.0;
constexpr std::size_t kPatternSteps = 8;
constexpr int kMaxVoiceAttempts = 64;

std::size_t whole_samples(double seconds, const char* what) {
  const double n = seconds * kSampleRate;
  const double r = std::round(n);
  if (!(seconds > 0.0) || std::abs(n - r) > 1e-6) {
    throw ContractError(std::string("synth spec: ") + what + " must be a positive whole number of samples");
  }
  return static_cast<std::size_t>(r);
}

double semitones(double st) { return std::pow(2.0, st / 12.0); }

void normalize(std::vector<double>& x, double rms_target) {
  double e = 0.0;
  for (double v : x) e += v * v;
  const double rms = std::sqrt(e / static_cast<double>(x.size()));
  if (rms == 0.0) return;
  double g = rms_target / rms;
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak * g > 0.95) g = 0.95 / peak;
  for (double& v : x) v *= g;
}

AudioClip to_clip(const std::vector<double>& x) {
  AudioClip clip;
  clip.samples.assign(x.begin(), x.end());
  return clip;
}

// Raised-cosine attack and release inside [0, len).
double envelope(std::size_t i, std::size_t len, std::size_t attack, std::size_t release) {
  if (i < attack) return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / attack);
  if (i + release >= len) {
    const double r = static_cast<double>(len - i) / static_cast<double>(release);
    return 0.5 - 0.5 * std::cos(std::numbers::pi * std::clamp(r, 0.0, 1.0));
  }
  return 1.0;
}

std::vector<double> render_voice(const SynthSpec& spec, Rng& rng) {
  const VoiceSpec& v = spec.voice;
  const std::size_t n = spec.total_samples();
  std::vector<double> out(n, 0.0);
  const double cycle = 1.0 / v.notes_per_s;
  const double log_lo = std::log(v.min_pitch_hz), log_hi = std::log(v.max_pitch_hz);

  std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.0, 0.5 * cycle) * kSampleRate);
  while (pos < n) {
    const auto len = static_cast<std::size_t>(uniform(rng, 0.5, 1.1) * cycle * kSampleRate);
    const auto gap = static_cast<std::size_t>(uniform(rng, 0.05, 0.5) * cycle * kSampleRate);
    const double f_start = std::exp(uniform(rng, log_lo, log_hi));
    const double f_end =
        std::clamp(f_start * semitones(uniform(rng, -v.glide_semitones, v.glide_semitones)),
                   v.min_pitch_hz, v.max_pitch_hz);
    const double vib_phase = uniform(rng, 0.0, kTwoPi);
    const double vib_rate = v.vibrato_hz * uniform(rng, 0.8, 1.2);
    const double tilt = uniform(rng, 0.8, 1.8);
    const double formant = uniform(rng, 500.0, 2500.0);
    const double level = uniform(rng, 0.5, 1.0);

    std::vector<double> amp(v.harmonics);
    std::vector<double> phase(v.harmonics);
    for (std::size_t k = 0; k < v.harmonics; ++k) {
      const double fk = (k + 1) * 0.5 * (f_start + f_end);
      const double bump = 1.0 + 2.0 * std::exp(-(fk - formant) * (fk - formant) / (2.0 * 300.0 * 300.0));
      amp[k] = level * bump * std::pow(static_cast<double>(k + 1), -tilt);
      phase[k] = uniform(rng, 0.0, kTwoPi);
    }

    const std::size_t attack = std::min<std::size_t>(320, len / 4);
    const std::size_t release = std::min<std::size_t>(640, len / 4);
    for (std::size_t i = 0; i < len && pos + i < n; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double t = static_cast<double>(i) / kSampleRate;
      const double f = std::exp((1.0 - u) * std::log(f_start) + u * std::log(f_end)) *
                       (1.0 + v.vibrato_depth * std::sin(kTwoPi * vib_rate * t + vib_phase));
      const double env = envelope(i, len, attack, release);
      double s = 0.0;
      for (std::size_t k = 0; k < v.harmonics; ++k) {
        phase[k] += kTwoPi * (k + 1) * f / kSampleRate;
        s += amp[k] * std::sin(phase[k]);
      }
      out[pos + i] += env * s;
    }
    pos += len + gap;
  }
  normalize(out, v.rms);
  return out;
}

}  // namespace

std::size_t SynthSpec::period_samples() const {
  return whole_samples(accompaniment.period_s, "pattern period");
}

std::size_t SynthSpec::total_samples() const { return whole_samples(duration_s, "duration"); }

void SynthSpec::validate() const {
  const std::size_t p = period_samples();
  const std::size_t n = total_samples();
  if (n % p != 0) throw ContractError("synth spec: pattern period does not tile the duration");
  if (accompaniment.chord_hz.empty()) throw ContractError("synth spec: chord needs at least one tone");
  const double up = semitones(std::abs(accompaniment.transpose_semitones));
  for (double f : accompaniment.chord_hz) {
    if (!(f > 0.0)) throw ContractError("synth spec: chord tones must be positive");
    if (f * up * static_cast<double>(accompaniment.harmonics) >= kNyquist) {
      throw ContractError("synth spec: chord tone " + std::to_string(f) +
                          " Hz has harmonics at or above Nyquist");
    }
  }
  if (accompaniment.click_rate_hz < 0.0) throw ContractError("synth spec: negative click rate");
  if (!(voice.min_pitch_hz > 0.0 && voice.min_pitch_hz <= voice.max_pitch_hz)) {
    throw ContractError("synth spec: voice pitch range is empty");
  }
  const double top = voice.max_pitch_hz * (1.0 + voice.vibrato_depth) * static_cast<double>(voice.harmonics);
  if (top >= kNyquist) {
    throw ContractError("synth spec: voice harmonics reach " + std::to_string(top) + " Hz, at or above Nyquist");
  }
  if (!(voice.notes_per_s > 0.0)) throw ContractError("synth spec: notes_per_s must be positive");
  if (voice.harmonics == 0 || accompaniment.harmonics == 0) {
    throw ContractError("synth spec: harmonics must be positive");
  }
}

AudioClip gen_accompaniment(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const AccompanimentSpec& a = spec.accompaniment;
  Rng rng(stream_seed(seed, "accompaniment"));
  const std::size_t period = spec.period_samples();
  const std::size_t step = period / kPatternSteps;
  const double transpose = semitones(uniform(rng, -a.transpose_semitones, a.transpose_semitones));

  std::vector<double> pattern(period, 0.0);
  for (double base : a.chord_hz) {
    const double f = base * transpose;
    std::vector<double> phase0(a.harmonics);
    for (auto& p : phase0) p = uniform(rng, 0.0, kTwoPi);
    for (std::size_t s = 0; s < kPatternSteps; ++s) {
      const bool on = s == 0 || uniform01(rng) < 0.6;
      const double level = uniform(rng, 0.6, 1.0);
      if (!on) continue;
      const std::size_t begin = s * step;
      const std::size_t len = (s + 1 == kPatternSteps) ? period - begin : step;
      for (std::size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(begin + i) / kSampleRate;
        const double decay = std::exp(-3.0 * static_cast<double>(i) / static_cast<double>(len));
        const double env = level * decay * envelope(i, len, 64, 128);
        double v = 0.0;
        for (std::size_t k = 0; k < a.harmonics; ++k) {
          v += std::sin(kTwoPi * (k + 1) * f * t + phase0[k]) / static_cast<double>(k + 1);
        }
        pattern[begin + i] += env * v;
      }
    }
  }

  if (a.click_rate_hz > 0.0) {
    const double spacing = kSampleRate / a.click_rate_hz;
    const std::size_t click_len = 160;
    std::vector<double> burst(click_len);
    for (std::size_t i = 0; i < click_len; ++i) {
      burst[i] = uniform(rng, -1.0, 1.0) * std::exp(-static_cast<double>(i) / 24.0);
    }
    for (double c = 0.0; c < static_cast<double>(period); c += spacing) {
      const auto start = static_cast<std::size_t>(c);
      for (std::size_t i = 0; i < click_len; ++i) pattern[(start + i) % period] += 1.5 * burst[i];
    }
  }

  normalize(pattern, a.rms);
  AudioClip clip;
  clip.samples.resize(spec.total_samples());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] = static_cast<float>(pattern[i % period]);
  }
  return clip;
}

AudioClip gen_voice(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t lag = spec.period_samples();
  for (int attempt = 0; attempt < kMaxVoiceAttempts; ++attempt) {
    Rng rng(stream_seed(stream_seed(seed, "voice"), static_cast<std::uint64_t>(attempt)));
    AudioClip clip = to_clip(render_voice(spec, rng));
    if (lag >= clip.size() || std::abs(autocorrelation(clip, lag)) < spec.voice.max_autocorr) {
      return clip;
    }
  }
  throw ContractError("gen_voice: could not produce a non-repeating voice in " +
                      std::to_string(kMaxVoiceAttempts) + " attempts");
}

double autocorrelation(const AudioClip& clip, std::size_t lag) {
  const auto& x = clip.samples;
  if (lag >= x.size()) throw ContractError("autocorrelation lag exceeds the clip");
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i + lag < x.size(); ++i) {
    const double a = x[i], b = x[i + lag];
    xy += a * b;
    xx += a * a;
    yy += b * b;
  }
  if (xx == 0.0 || yy == 0.0) return 0.0;
  return xy / std::sqrt(xx * yy);
}

std::filesystem::path gen_dataset(std::size_t n_tracks, const SynthSpec& spec,
                                  const std::filesystem::path& out_dir, std::uint64_t seed) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  const std::filesystem::path manifest = out_dir / "manifest.tsv";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  for (std::size_t i = 0; i < n_tracks; ++i) {
    char voice_name[32], accomp_name[32];
    std::snprintf(voice_name, sizeof voice_name, "voice_%03zu.wav", i);
    std::snprintf(accomp_name, sizeof accomp_name, "accomp_%03zu.wav", i);
    const std::uint64_t track_seed = stream_seed(seed, static_cast<std::uint64_t>(i));
    save_wav(out_dir / voice_name, gen_voice(spec, track_seed));
    save_wav(out_dir / accomp_name, gen_accompaniment(spec, track_seed));
    out << voice_name << '\t' << accomp_name << '\n';
  }
  if (!out) throw IoError("failed writing " + manifest.string());
  return manifest;
}

}  // namespace sadu
