// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "sadu/checkpoint.hpp"
#include "sadu/error.hpp"
#include "sadu/trainer.hpp"

using sadu::Shape;
using TD = sadu::Tensor<double>;

namespace {

sadu::AudioClip noise(std::size_t n, std::uint64_t seed, double amp) {
  sadu::Rng rng(seed);
  sadu::AudioClip c;
  c.samples.resize(n);
  for (float& s : c.samples) s = static_cast<float>(sadu::uniform(rng, -amp, amp));
  return c;
}

std::vector<sadu::TrackPair> noise_pool(std::size_t count, std::size_t length) {
  std::vector<sadu::TrackPair> pool;
  for (std::size_t i = 0; i < count; ++i) {
    pool.push_back({noise(length, 100 + i, 0.2), noise(length, 200 + i, 0.4), "t" + std::to_string(i)});
  }
  return pool;
}

sadu::ModelConfig micro_config() {
  sadu::ModelConfig c;
  c.channels = 2;
  c.layers_per_block = 1;
  c.levels = 1;
  c.attn_channels = 1;
  c.embed_dim = 2;
  c.t_window = 8;
  return c;
}

double loss_oracle(const std::vector<double>& m1, const std::vector<double>& m2, const std::vector<double>& y,
                   const std::vector<double>& x1, const std::vector<double>& x2) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(m1[i] * y[i] - x1[i]) + std::abs(m2[i] * y[i] - x2[i]);
  return s;
}

}  // namespace

TEST(MaskLoss, KnownValues) {
  const TD y(Shape{1, 1}, std::vector<double>{4.0});
  const TD half(Shape{1, 1}, std::vector<double>{0.5});
  const auto l = sadu::l1_mask_loss(sadu::MaskPair<double>{half, half}, y, TD(Shape{1, 1}, std::vector<double>{1.0}),
                                    TD(Shape{1, 1}, std::vector<double>{3.0}));
  EXPECT_EQ(l.item(), 2.0);

  const TD mix(Shape{1, 2}, {1, 2}), one(Shape{1, 2}, {1, 1}), zero(Shape{1, 2});
  EXPECT_EQ(sadu::l1_mask_loss(sadu::MaskPair<double>{one, zero}, mix, mix, zero).item(), 0.0);
}

TEST(MaskLoss, MatchesLoopOracleAndIsSwapSymmetric) {
  sadu::Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m1 = oracle::random(rng, {4, 6}, 0, 2), m2 = oracle::random(rng, {4, 6}, 0, 2);
    const auto y = oracle::random(rng, {4, 6}, 0, 3), x1 = oracle::random(rng, {4, 6}, 0, 2),
               x2 = oracle::random(rng, {4, 6}, 0, 2);
    const double got = sadu::l1_mask_loss(sadu::MaskPair<double>{m1, m2}, y, x1, x2).item();
    using oracle::to_vec;
    EXPECT_NEAR(got, loss_oracle(to_vec(m1), to_vec(m2), to_vec(y), to_vec(x1), to_vec(x2)), 1e-12);
    EXPECT_NEAR(got, sadu::l1_mask_loss(sadu::MaskPair<double>{m2, m1}, y, x2, x1).item(), 1e-12);
    EXPECT_GE(got, 0.0);
  }
}

TEST(MaskLoss, ShapeMismatchIsDimensionError) {
  const TD a(Shape{2, 3}), b(Shape{3, 2});
  EXPECT_THROW(sadu::l1_mask_loss(sadu::MaskPair<double>{a, a}, a, b, a), sadu::DimensionError);
}

TEST(MaskLoss, OracleMasksGiveZeroLoss) {
  sadu::Rng rng(2);
  const auto x1 = oracle::random(rng, {3, 5}, 0.1, 1), x2 = oracle::random(rng, {3, 5}, 0.1, 1);
  const auto y = sadu::add(x1, x2);
  TD m1(y.shape()), m2(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) {
    m1.mutable_data()[i] = x1[i] / y[i];
    m2.mutable_data()[i] = x2[i] / y[i];
  }
  EXPECT_LT(sadu::l1_mask_loss(sadu::MaskPair<double>{m1, m2}, y, x1, x2).item(), 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  sadu::ModelParams<double> p;
  p.add("w", TD(Shape{3}, {1.0, 2.0, 3.0}, true));
  sadu::TrainOptions opt;
  opt.lr = 0.01;
  auto state = sadu::make_adam_state(p, opt);
  const std::vector<double> g{0.5, -2.0, 1e-3};
  {
    sadu::Tape<double> tape;
    sadu::TapeScope<double> scope(tape);
    tape.backward(sadu::sum(sadu::mul(p.at("w"), TD(Shape{3}, g))));
  }
  sadu::adam_step(p, state);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expect = (i + 1.0) - 0.01 * g[i] / (std::abs(g[i]) + 1e-8);
    EXPECT_NEAR(p.at("w")[i], expect, 1e-12);
  }
  EXPECT_EQ(state.step, 1u);
  EXPECT_FALSE(p.at("w").has_grad());
}

TEST(Adam, TwoStepsMatchOracle) {
  sadu::ModelParams<double> p;
  p.add("w", TD(Shape{1}, std::vector<double>{0.0}, true));
  sadu::TrainOptions opt;
  opt.lr = 0.1;
  auto state = sadu::make_adam_state(p, opt);
  double m = 0, v = 0, w = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 1.0 : -0.5;
    {
      sadu::Tape<double> tape;
      sadu::TapeScope<double> scope(tape);
      tape.backward(sadu::sum(sadu::mul(p.at("w"), TD(Shape{1}, std::vector<double>{g}))));
    }
    sadu::adam_step(p, state);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.at("w")[0], w, 1e-12);
  }
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  sadu::ModelParams<double> p;
  p.add("w", TD(Shape{2}, {0.3, -0.7}, true));
  sadu::TrainOptions opt;
  opt.lr = 0.0;
  auto state = sadu::make_adam_state(p, opt);
  {
    sadu::Tape<double> tape;
    sadu::TapeScope<double> scope(tape);
    tape.backward(sadu::sum(sadu::mul(p.at("w"), p.at("w"))));
  }
  sadu::adam_step(p, state);
  EXPECT_EQ(oracle::to_vec(p.at("w")), (std::vector<double>{0.3, -0.7}));
}

TEST(Adam, MissingGradientNamesParameter) {
  sadu::ModelParams<double> p;
  p.add("used", TD(Shape{1}, std::vector<double>{1.0}, true));
  p.add("orphan", TD(Shape{1}, std::vector<double>{1.0}, true));
  auto state = sadu::make_adam_state(p, sadu::TrainOptions{});
  {
    sadu::Tape<double> tape;
    sadu::TapeScope<double> scope(tape);
    tape.backward(sadu::sum(p.at("used")));
  }
  try {
    sadu::adam_step(p, state);
    FAIL() << "expected ContractError";
  } catch (const sadu::ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("orphan"), std::string::npos);
  }
  EXPECT_EQ(p.at("used")[0], 1.0);  // nothing applied
}

TEST(Adam, SmallStepDecreasesModelLoss) {
  sadu::ModelConfig cfg = micro_config();
  cfg.freq_bins = 13;
  auto params = sadu::init_params<double>(cfg, 4);
  sadu::Rng rng(5);
  for (auto& [name, t] : params.entries())
    if (name.ends_with(".bias")) for (double& v : t.mutable_data()) v = sadu::uniform(rng, -0.1, 0.1);
  const auto y = oracle::random(rng, {13, 8}, 0, 1), x1 = oracle::random(rng, {13, 8}, 0, 0.5),
             x2 = oracle::random(rng, {13, 8}, 0, 0.5);
  auto loss_of = [&] {
    return sadu::l1_mask_loss(sadu::unet_forward(sadu::pad_input(y, cfg), params, cfg), y, x1, x2);
  };
  double before = 0;
  params.set_requires_grad(true);
  {
    sadu::Tape<double> tape;
    sadu::TapeScope<double> scope(tape);
    const auto l = loss_of();
    before = l.item();
    tape.backward(l);
  }
  sadu::TrainOptions opt;
  opt.lr = 1e-6;
  auto state = sadu::make_adam_state(params, opt);
  sadu::adam_step(params, state);
  sadu::NoGradScope<double> no_grad;
  EXPECT_LT(loss_of().item(), before);
}

TEST(Augment, IdentityOptionsCutTheTrack) {
  const auto pool = noise_pool(1, 5000);
  sadu::AugmentOptions opts;
  opts.gain_min = opts.gain_max = 1.0;
  opts.circular_shift = false;
  opts.independent_tracks = false;
  sadu::Rng rng(1);
  const auto out = sadu::augment_pair(pool, rng, 3000, opts);
  EXPECT_EQ(out.voice.samples, std::vector<float>(pool[0].voice.samples.begin(), pool[0].voice.samples.begin() + 3000));
  EXPECT_EQ(out.accompaniment.samples,
            std::vector<float>(pool[0].accompaniment.samples.begin(), pool[0].accompaniment.samples.begin() + 3000));
}

TEST(Augment, WindowIsScaledCircularCut) {
  const auto pool = noise_pool(3, 1000);
  sadu::Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto out = sadu::augment_pair(pool, rng, 2500, {});
    ASSERT_EQ(out.voice.size(), 2500u);
    // Find the source track and shift by matching against every candidate.
    auto explained = [&](const sadu::AudioClip& got, bool voice) {
      for (const auto& pair : pool) {
        const auto& src = voice ? pair.voice.samples : pair.accompaniment.samples;
        for (std::size_t shift = 0; shift < src.size(); ++shift) {
          const double gain = double(got.samples[0]) / src[shift];
          if (!(gain >= 0.25 - 1e-6 && gain <= 1.25 + 1e-6)) continue;
          bool ok = true;
          for (std::size_t i = 0; i < got.size() && ok; ++i)
            ok = std::abs(got.samples[i] - gain * src[(shift + i) % src.size()]) < 1e-5;
          if (ok) return true;
        }
      }
      return false;
    };
    EXPECT_TRUE(explained(out.voice, true));
    EXPECT_TRUE(explained(out.accompaniment, false));
  }
}

TEST(Augment, DeterministicPerSeedAndMixIsLinear) {
  const auto pool = noise_pool(3, 4000);
  sadu::Rng a(9), b(9);
  const auto x = sadu::augment_pair(pool, a, 3000, {});
  const auto y = sadu::augment_pair(pool, b, 3000, {});
  EXPECT_EQ(x.voice.samples, y.voice.samples);
  EXPECT_EQ(x.accompaniment.samples, y.accompaniment.samples);
  const auto m = sadu::mix(x);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m.samples[i], x.voice.samples[i] + x.accompaniment.samples[i]);
  EXPECT_THROW(sadu::augment_pair({}, a, 10, {}), sadu::ContractError);
}

TEST(Windows, SampleCountForFrames) {
  EXPECT_EQ(sadu::window_samples(1), 1024u);
  EXPECT_EQ(sadu::window_samples(64), 63u * 256 + 1024);
  EXPECT_EQ(sadu::frame_count(sadu::window_samples(64)), 64u);
  EXPECT_THROW(sadu::window_samples(0), sadu::ContractError);
}

TEST(Train, DeterministicAndResumesBitwise) {
  const auto cfg = micro_config();
  const auto pool = noise_pool(2, 4000);
  sadu::TrainOptions opt;
  opt.lr = 1e-3;
  opt.steps = 6;
  opt.checkpoint_every = 3;
  opt.seed = 5;

  std::vector<double> losses;
  std::vector<sadu::Checkpoint> mids;
  sadu::TrainHooks hooks;
  hooks.on_step = [&](const sadu::TrainLogRow& r) { losses.push_back(r.loss); };
  hooks.on_checkpoint = [&](const sadu::Checkpoint& c) { mids.push_back(c); };
  const auto full = sadu::train(pool, {}, cfg, opt, nullptr, hooks);
  ASSERT_EQ(losses.size(), 6u);
  ASSERT_EQ(mids.size(), 2u);
  EXPECT_EQ(mids[0].step, 3u);

  std::vector<double> again;
  sadu::TrainHooks h2;
  h2.on_step = [&](const sadu::TrainLogRow& r) { again.push_back(r.loss); };
  const auto second = sadu::train(pool, {}, cfg, opt, nullptr, h2);
  EXPECT_EQ(again, losses);
  EXPECT_EQ(sadu::serialize_checkpoint(second), sadu::serialize_checkpoint(full));

  // Resume from the serialized mid-run checkpoint.
  const auto restored = sadu::deserialize_checkpoint(sadu::serialize_checkpoint(mids[0]));
  std::vector<double> tail;
  sadu::TrainHooks h3;
  h3.on_step = [&](const sadu::TrainLogRow& r) { tail.push_back(r.loss); };
  const auto resumed = sadu::train(pool, {}, cfg, opt, &restored, h3);
  EXPECT_EQ(tail, std::vector<double>(losses.begin() + 3, losses.end()));
  EXPECT_EQ(sadu::serialize_checkpoint(resumed), sadu::serialize_checkpoint(full));
}

TEST(Train, ZeroLearningRateKeepsInitialWeights) {
  const auto cfg = micro_config();
  sadu::TrainOptions opt;
  opt.lr = 0.0;
  opt.steps = 2;
  opt.seed = 3;
  const auto out = sadu::train(noise_pool(1, 3000), {}, cfg, opt);
  const auto init = sadu::init_params<float>(cfg, 3);
  for (const auto& [name, t] : init.entries()) {
    const auto& got = out.params.at(name).data();
    EXPECT_TRUE(std::equal(got.begin(), got.end(), t.data().begin())) << name;
  }
}

TEST(Train, RejectsMismatchedResumeAndBadOptions) {
  const auto cfg = micro_config();
  sadu::TrainOptions opt;
  opt.steps = 1;
  const auto ck = sadu::train(noise_pool(1, 3000), {}, cfg, opt);
  auto other = cfg;
  other.channels = 3;
  EXPECT_THROW(sadu::train(noise_pool(1, 3000), {}, other, opt, &ck), sadu::ContractError);
  opt.batch_size = 0;
  EXPECT_THROW(sadu::train(noise_pool(1, 3000), {}, cfg, opt), sadu::ContractError);
  opt.batch_size = 1;
  EXPECT_THROW(sadu::train({}, {}, cfg, opt), sadu::ContractError);
}

TEST(Train, ValidationLossIsReported) {
  const auto cfg = micro_config();
  sadu::TrainOptions opt;
  opt.steps = 4;
  opt.val_every = 2;
  std::vector<sadu::TrainLogRow> rows;
  sadu::TrainHooks hooks;
  hooks.on_step = [&](const sadu::TrainLogRow& r) { rows.push_back(r); };
  const auto val = noise_pool(1, 3000);
  const auto out = sadu::train(noise_pool(2, 3000), val, cfg, opt, nullptr, hooks);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[0].val_loss.has_value());
  ASSERT_TRUE(rows[3].val_loss.has_value());
  EXPECT_DOUBLE_EQ(*rows[3].val_loss, sadu::evaluate_loss(val, out.params, cfg));
}

TEST(EvaluateLoss, MatchesManualFirstWindow) {
  const auto cfg = micro_config();
  const auto pool = noise_pool(2, 4000);
  const auto params = sadu::init_params<float>(cfg, 2);
  double manual = 0;
  for (const auto& p : pool) {
    sadu::TrackPair w;
    const std::size_t n = sadu::window_samples(cfg.t_window);
    w.voice.samples.assign(p.voice.samples.begin(), p.voice.samples.begin() + n);
    w.accompaniment.samples.assign(p.accompaniment.samples.begin(), p.accompaniment.samples.begin() + n);
    const auto s = sadu::window_spectra(w, cfg.t_window);
    manual += sadu::l1_mask_loss(sadu::unet_forward(sadu::pad_input(s.mixture, cfg), params, cfg), s.mixture,
                                 s.voice, s.accompaniment)
                  .item();
  }
  EXPECT_DOUBLE_EQ(sadu::evaluate_loss(pool, params, cfg), manual / 2);
}

TEST(Manifest, ParsesRelativePathsAndComments) {
  const auto dir = std::filesystem::temp_directory_path() / "sadu_test_manifest";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir / "audio");
  sadu::save_wav(dir / "audio/v.wav", noise(300, 1, 0.1));
  sadu::save_wav(dir / "audio/a.wav", noise(300, 2, 0.1));
  sadu::save_wav(dir / "audio/short.wav", noise(200, 3, 0.1));
  {
    std::ofstream m(dir / "m.tsv");
    m << "# comment\n\naudio/v.wav\taudio/a.wav\r\n" << (dir / "audio/a.wav").string() << "\taudio/v.wav\n";
  }
  const auto pairs = sadu::load_manifest(dir / "m.tsv");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].name, "v");
  EXPECT_EQ(pairs[1].voice.samples, pairs[0].accompaniment.samples);

  {
    std::ofstream m(dir / "bad.tsv");
    m << "audio/v.wav audio/a.wav\n";
  }
  EXPECT_THROW(sadu::load_manifest(dir / "bad.tsv"), sadu::FormatError);
  {
    std::ofstream m(dir / "len.tsv");
    m << "audio/v.wav\taudio/short.wav\n";
  }
  EXPECT_THROW(sadu::load_manifest(dir / "len.tsv"), sadu::FormatError);
  EXPECT_THROW(sadu::load_manifest(dir / "none.tsv"), sadu::IoError);
  std::filesystem::remove_all(dir);
}

TEST(LogRow, Format) {
  EXPECT_EQ(sadu::format_log_row({3, 1.5, std::nullopt}), "3,1.5,");
  EXPECT_EQ(sadu::format_log_row({10, 0.25, 0.125}), "10,0.25,0.125");
}
