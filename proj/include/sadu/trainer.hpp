// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sadu/audio.hpp"
#include "sadu/model.hpp"
#include "sadu/rng.hpp"

namespace sadu {

struct Checkpoint;

/// Aligned voice and accompaniment of one song.
struct TrackPair {
  AudioClip voice;
  AudioClip accompaniment;
  std::string name;
};

struct TrainOptions {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t steps = 1000;
  std::size_t batch_size = 1;          // windows per step; losses are averaged
  std::uint64_t checkpoint_every = 0;  // 0 disables intermediate checkpoints
  std::uint64_t val_every = 0;         // 0 disables validation
  std::size_t val_tracks = 0;          // pairs held out from the end of the manifest
  std::uint64_t seed = 1;
  bool augment = true;

  bool operator==(const TrainOptions&) const = default;
};

template <typename S>
struct AdamState {
  double lr = 5e-5, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<S>> m, v;  // one buffer per parameter, in parameter order

  bool operator==(const AdamState&) const = default;
};

template <typename S>
AdamState<S> make_adam_state(const ModelParams<S>& params, const TrainOptions& options);

/// One Adam update from the parameters' gradients, which are then cleared.
/// Every parameter must carry a gradient.
template <typename S>
void adam_step(ModelParams<S>& params, AdamState<S>& state);

/// Sum over both sources and all bins of |M_i * |Y| - |X_i||.
template <typename S>
Tensor<S> l1_mask_loss(const MaskPair<S>& masks, const Tensor<S>& mixture_mag,
                       const Tensor<S>& voice_mag, const Tensor<S>& accomp_mag);

struct AugmentOptions {
  double gain_min = 0.25;
  double gain_max = 1.25;
  bool circular_shift = true;
  bool independent_tracks = true;  // voice and accompaniment may come from different songs
};

/// Draws voice and accompaniment (in that order: track, gain, shift for
/// each) and cuts `length` samples from the circularly shifted sources.
TrackPair augment_pair(const std::vector<TrackPair>& pool, Rng& rng, std::size_t length,
                       const AugmentOptions& options = {});

/// Sample-wise voice + accompaniment.
AudioClip mix(const TrackPair& pair);

/// Samples needed for exactly `frames` STFT frames.
std::size_t window_samples(std::size_t frames);

/// Magnitude planes of one training window.
struct WindowSpectra {
  Tensor<float> mixture, voice, accompaniment;  // [F_in x T_window]
};
WindowSpectra window_spectra(const TrackPair& pair, std::size_t frames);

/// Loss of the first window of each pair (no augmentation), averaged.
double evaluate_loss(const std::vector<TrackPair>& pairs, const ModelParams<float>& params,
                     const ModelConfig& config);

struct TrainLogRow {
  std::uint64_t step = 0;
  double loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

/// Runs steps (resume.step, options.steps]. Deterministic given the options
/// and, when resuming, the checkpoint contents.
Checkpoint train(const std::vector<TrackPair>& train_pool, const std::vector<TrackPair>& val_pool,
                 const ModelConfig& config, const TrainOptions& options,
                 const Checkpoint* resume = nullptr, const TrainHooks& hooks = {});

/// `voice<TAB>accompaniment` per line; relative paths resolve against the
/// manifest's directory.
std::vector<TrackPair> load_manifest(const std::filesystem::path& manifest);

/// "step,loss,val_loss" row; val_loss is empty when not computed.
std::string format_log_row(const TrainLogRow& row);

}  // namespace sadu
