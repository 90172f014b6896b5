// SPDX-License-Identifier: Apache-2.0
#include "sadu/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sadu/checkpoint.hpp"
#include "sadu/error.hpp"
#include "sadu/stft.hpp"

namespace sadu {

template <typename S>
AdamState<S> make_adam_state(const ModelParams<S>& params, const TrainOptions& options) {
  AdamState<S> state;
  state.lr = options.lr;
  state.beta1 = options.beta1;
  state.beta2 = options.beta2;
  state.eps = options.eps;
  for (const auto& [name, t] : params.entries()) {
    state.m.emplace_back(t.numel(), S(0));
    state.v.emplace_back(t.numel(), S(0));
  }
  return state;
}

template <typename S>
void adam_step(ModelParams<S>& params, AdamState<S>& state) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw ContractError("optimizer state holds " + std::to_string(state.m.size()) +
                        " buffers for " + std::to_string(entries.size()) + " parameters");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, t] = entries[i];
    if (!t.has_grad()) throw ContractError("parameter '" + name + "' has no gradient");
    if (state.m[i].size() != t.numel() || state.v[i].size() != t.numel()) {
      throw ContractError("optimizer state does not match parameter '" + name + "'");
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& tensor = entries[i].second;
    auto data = tensor.mutable_data();
    auto grad = tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grad[k];
      const double mk = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      const double vk = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      m[k] = static_cast<S>(mk);
      v[k] = static_cast<S>(vk);
      const double update = state.lr * (mk / bc1) / (std::sqrt(vk / bc2) + state.eps);
      data[k] = static_cast<S>(data[k] - update);
    }
    tensor.clear_grad();
  }
}

template <typename S>
Tensor<S> l1_mask_loss(const MaskPair<S>& masks, const Tensor<S>& mixture_mag,
                       const Tensor<S>& voice_mag, const Tensor<S>& accomp_mag) {
  const Shape& shape = mixture_mag.shape();
  for (const Tensor<S>* t : {&masks.voice, &masks.accompaniment, &voice_mag, &accomp_mag}) {
    if (t->shape() != shape) {
      throw DimensionError("loss operand " + shape_str(t->shape()) + " does not match mixture " +
                           shape_str(shape));
    }
  }
  const Tensor<S> voice_term = l1(sub(mul(masks.voice, mixture_mag), voice_mag));
  const Tensor<S> accomp_term = l1(sub(mul(masks.accompaniment, mixture_mag), accomp_mag));
  return add(voice_term, accomp_term);
}

namespace {

AudioClip cut(const AudioClip& src, std::size_t start, std::size_t length, double gain) {
  if (src.samples.empty()) throw ContractError("cannot cut a window from an empty clip");
  AudioClip out;
  out.sample_rate = src.sample_rate;
  out.samples.resize(length);
  const std::size_t n = src.samples.size();
  for (std::size_t i = 0; i < length; ++i) {
    out.samples[i] = static_cast<float>(gain * src.samples[(start + i) % n]);
  }
  return out;
}

struct Draw {
  std::size_t track;
  double gain;
  std::size_t shift;
};

Draw draw_source(const std::vector<TrackPair>& pool, Rng& rng, const AugmentOptions& options,
                 bool voice, std::size_t fixed_track) {
  Draw d{};
  d.track = fixed_track < pool.size() ? fixed_track : uniform_index(rng, pool.size());
  d.gain = uniform(rng, options.gain_min, options.gain_max);
  const auto& clip = voice ? pool[d.track].voice : pool[d.track].accompaniment;
  d.shift = options.circular_shift ? uniform_index(rng, clip.size()) : 0;
  return d;
}

}  // namespace

TrackPair augment_pair(const std::vector<TrackPair>& pool, Rng& rng, std::size_t length,
                       const AugmentOptions& options) {
  if (pool.empty()) throw ContractError("augmentation needs at least one track pair");
  if (length == 0) throw ContractError("augmentation window must be non-empty");
  if (!(options.gain_min <= options.gain_max)) throw ContractError("gain range is empty");

  const Draw v = draw_source(pool, rng, options, true, pool.size());
  const Draw a =
      draw_source(pool, rng, options, false, options.independent_tracks ? pool.size() : v.track);

  TrackPair out;
  out.voice = cut(pool[v.track].voice, v.shift, length, v.gain);
  out.accompaniment = cut(pool[a.track].accompaniment, a.shift, length, a.gain);
  out.name = pool[v.track].name + "+" + pool[a.track].name;
  return out;
}

AudioClip mix(const TrackPair& pair) {
  if (pair.voice.size() != pair.accompaniment.size()) {
    throw DimensionError("voice has " + std::to_string(pair.voice.size()) +
                         " samples, accompaniment " + std::to_string(pair.accompaniment.size()));
  }
  AudioClip out;
  out.sample_rate = pair.voice.sample_rate;
  out.samples.resize(pair.voice.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = pair.voice.samples[i] + pair.accompaniment.samples[i];
  }
  return out;
}

std::size_t window_samples(std::size_t frames) {
  if (frames == 0) throw ContractError("a window needs at least one frame");
  return (frames - 1) * kHopSize + kWindowSize;
}

WindowSpectra window_spectra(const TrackPair& pair, std::size_t frames) {
  const std::size_t length = window_samples(frames);
  if (pair.voice.size() != length || pair.accompaniment.size() != length) {
    throw DimensionError("window spectra need exactly " + std::to_string(length) + " samples");
  }
  WindowSpectra out;
  out.mixture = magnitude_tensor<float>(split_mag_phase(stft(mix(pair))));
  out.voice = magnitude_tensor<float>(split_mag_phase(stft(pair.voice)));
  out.accompaniment = magnitude_tensor<float>(split_mag_phase(stft(pair.accompaniment)));
  return out;
}

namespace {

Tensor<float> window_loss(const WindowSpectra& spectra, const ModelParams<float>& params,
                          const ModelConfig& config) {
  const MaskPair<float> masks = unet_forward(pad_input(spectra.mixture, config), params, config);
  return l1_mask_loss(masks, spectra.mixture, spectra.voice, spectra.accompaniment);
}

TrackPair first_window(const TrackPair& pair, std::size_t length) {
  TrackPair out;
  out.voice = cut(pair.voice, 0, length, 1.0);
  out.accompaniment = cut(pair.accompaniment, 0, length, 1.0);
  out.name = pair.name;
  return out;
}

}  // namespace

double evaluate_loss(const std::vector<TrackPair>& pairs, const ModelParams<float>& params,
                     const ModelConfig& config) {
  if (pairs.empty()) throw ContractError("evaluation needs at least one track pair");
  NoGradScope<float> no_grad;
  const std::size_t length = window_samples(config.t_window);
  double total = 0.0;
  for (const auto& pair : pairs) {
    total += window_loss(window_spectra(first_window(pair, length), config.t_window), params, config)
                 .item();
  }
  return total / static_cast<double>(pairs.size());
}

Checkpoint train(const std::vector<TrackPair>& train_pool, const std::vector<TrackPair>& val_pool,
                 const ModelConfig& config, const TrainOptions& options, const Checkpoint* resume,
                 const TrainHooks& hooks) {
  config.validate();
  if (train_pool.empty()) throw ContractError("training needs at least one track pair");
  if (options.batch_size == 0) throw ContractError("batch_size must be positive");

  ModelParams<float> params;
  AdamState<float> adam;
  Rng rng;
  std::uint64_t step = 0;
  if (resume != nullptr) {
    if (!(resume->config == config)) {
      throw ContractError("checkpoint model configuration differs from the requested one");
    }
    if (resume->rng_state.empty()) throw ContractError("checkpoint carries no training state");
    params = resume->params.cast<float>();
    adam = resume->adam ? *resume->adam : make_adam_state(params, options);
    rng = rng_from_state(resume->rng_state);
    step = resume->step;
  } else {
    params = init_params<float>(config, options.seed);
    adam = make_adam_state(params, options);
    rng = Rng(stream_seed(options.seed, "augment"));
  }
  adam.lr = options.lr;
  adam.beta1 = options.beta1;
  adam.beta2 = options.beta2;
  adam.eps = options.eps;
  params.set_requires_grad(true);

  AugmentOptions augment;
  if (!options.augment) {
    augment.gain_min = augment.gain_max = 1.0;
    augment.circular_shift = false;
    augment.independent_tracks = false;
  }
  const std::size_t length = window_samples(config.t_window);

  auto snapshot = [&]() {
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.params = params.cast<float>();
    ckpt.adam = adam;
    ckpt.seed = options.seed;
    ckpt.step = step;
    ckpt.rng_state = rng_state(rng);
    return ckpt;
  };

  while (step < options.steps) {
    ++step;
    Tape<float> tape;
    Tensor<float> loss;
    {
      TapeScope<float> scope(tape);
      for (std::size_t b = 0; b < options.batch_size; ++b) {
        const TrackPair pair = augment_pair(train_pool, rng, length, augment);
        const Tensor<float> term = window_loss(window_spectra(pair, config.t_window), params, config);
        loss = loss.defined() ? add(loss, term) : term;
      }
      if (options.batch_size > 1) loss = scale(loss, 1.0f / static_cast<float>(options.batch_size));
    }
    tape.backward(loss);
    adam_step(params, adam);

    TrainLogRow row;
    row.step = step;
    row.loss = loss.item();
    if (options.val_every != 0 && step % options.val_every == 0 && !val_pool.empty()) {
      row.val_loss = evaluate_loss(val_pool, params, config);
    }
    if (hooks.on_step) hooks.on_step(row);
    if (options.checkpoint_every != 0 && step % options.checkpoint_every == 0 &&
        hooks.on_checkpoint) {
      hooks.on_checkpoint(snapshot());
    }
  }
  return snapshot();
}

std::vector<TrackPair> load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  const std::filesystem::path base = manifest.parent_path();
  std::vector<TrackPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) +
                        ": expected 'voice<TAB>accompaniment'");
    }
    std::filesystem::path voice = line.substr(0, tab);
    std::filesystem::path accomp = line.substr(tab + 1);
    if (voice.is_relative()) voice = base / voice;
    if (accomp.is_relative()) accomp = base / accomp;
    TrackPair pair;
    pair.voice = load_wav(voice);
    pair.accompaniment = load_wav(accomp);
    pair.name = voice.stem().string();
    if (pair.voice.size() != pair.accompaniment.size()) {
      throw FormatError(manifest.string() + ":" + std::to_string(line_no) +
                        ": voice and accompaniment lengths differ (" +
                        std::to_string(pair.voice.size()) + " vs " +
                        std::to_string(pair.accompaniment.size()) + ")");
    }
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty()) throw FormatError("manifest " + manifest.string() + " lists no tracks");
  return pairs;
}

std::string format_log_row(const TrainLogRow& row) {
  char buf[96];
  if (row.val_loss) {
    std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g", static_cast<unsigned long long>(row.step),
                  row.loss, *row.val_loss);
  } else {
    std::snprintf(buf, sizeof buf, "%llu,%.9g,", static_cast<unsigned long long>(row.step),
                  row.loss);
  }
  return buf;
}

template AdamState<float> make_adam_state(const ModelParams<float>&, const TrainOptions&);
template AdamState<double> make_adam_state(const ModelParams<double>&, const TrainOptions&);
template void adam_step(ModelParams<float>&, AdamState<float>&);
template void adam_step(ModelParams<double>&, AdamState<double>&);
template Tensor<float> l1_mask_loss(const MaskPair<float>&, const Tensor<float>&,
                                    const Tensor<float>&, const Tensor<float>&);
template Tensor<double> l1_mask_loss(const MaskPair<double>&, const Tensor<double>&,
                                     const Tensor<double>&, const Tensor<double>&);

}  // namespace sadu
