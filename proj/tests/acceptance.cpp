// SPDX-License-Identifier: Apache-2.0
// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// when a hard criterion fails. Criterion 7 is a diagnostic and only warns.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sadu/bss.hpp"
#include "sadu/checkpoint.hpp"
#include "sadu/grad_suite.hpp"
#include "sadu/separator.hpp"
#include "sadu/stft.hpp"
#include "sadu/synth.hpp"
#include "sadu/trainer.hpp"

namespace fs = std::filesystem;
using TD = sadu::Tensor<double>;

namespace {

// Tolerances and budgets.
constexpr double kOpGradTol = 1e-4;
constexpr double kEndToEndGradTol = 1e-3;
constexpr double kGradBudgetS = 120.0;
constexpr std::size_t kGradSeeds = 10;
constexpr double kRowSumTol = 1e-6;
constexpr double kUniformTol = 1e-6;
constexpr double kAttnOracleTol = 1e-5;
constexpr double kOracleLossFraction = 1e-3;
constexpr double kOracleSdrDb = 10.0;
constexpr double kStftRelTol = 1e-6;
constexpr double kOverfitRatio = 0.2;
constexpr std::uint64_t kOverfitSteps = 500;
constexpr std::uint64_t kResumeStep = 250;
constexpr double kOverfitBudgetS = 600.0;
constexpr double kPeriodicMassFactor = 2.0;
constexpr std::uint64_t kDeterminismSteps = 20;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int hard_failures = 0;

void verdict(int id, bool ok, const std::string& detail, bool soft = false) {
  const char* word = ok ? "PASS" : (soft ? "WARN" : "FAIL");
  std::printf("criterion %d: %s  %s\n", id, word, detail.c_str());
  std::fflush(stdout);
  if (!ok && !soft) ++hard_failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("sadu_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------- 1

void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  bool ok = true;
  std::string failed;
  for (const auto& e : sadu::run_op_grad_suite(kGradSeeds)) {
    if (!e.zero_gradient) worst = std::max(worst, e.max_rel_error);
    const bool pass = e.zero_gradient ? e.passed() : e.max_rel_error < kOpGradTol;
    if (!pass) failed += " " + e.name;
    ok = ok && pass && e.seeds == kGradSeeds;
  }
  const auto e2e = sadu::run_end_to_end_grad_check();
  const bool e2e_ok = e2e[0].max_rel_error < kEndToEndGradTol && e2e[1].passed();
  const double secs = seconds_since(t0);
  verdict(1, ok && e2e_ok && secs < kGradBudgetS,
          fmt("op max rel err %.2e (< %.0e, %zu seeds), end-to-end %.2e (< %.0e), %.1f s (< %.0f s)%s", worst,
              kOpGradTol, kGradSeeds, e2e[0].max_rel_error, kEndToEndGradTol, secs, kGradBudgetS,
              failed.empty() ? "" : (" failing:" + failed).c_str()));
}

// ---------------------------------------------------------------- 2

struct AttnCase {
  std::size_t c, f, t, ca, e;
  TD wq, bq, wk, bk, wv, bv, lq, lqb, lk, lkb;

  sadu::AttentionParams<double> params() const {
    return {{wq, bq}, {wk, bk}, {wv, bv}, {lq, lqb}, {lk, lkb}};
  }
  oracle::AttentionOracle reference(const TD& x) const {
    using oracle::to_vec;
    return oracle::attention(to_vec(x), c, f, t, to_vec(wq), to_vec(bq), to_vec(wk), to_vec(bk), to_vec(wv),
                             to_vec(bv), to_vec(lq), to_vec(lqb), to_vec(lk), to_vec(lkb), ca, e);
  }
};

AttnCase random_case(sadu::Rng& rng, std::size_t c, std::size_t f, std::size_t t, std::size_t ca, std::size_t e) {
  using oracle::random;
  return {c, f, t, ca, e,
          random(rng, {ca, c, 1, 1}), random(rng, {ca}), random(rng, {ca, c, 1, 1}), random(rng, {ca}),
          random(rng, {c, c, 1, 1}), random(rng, {c}), random(rng, {e, ca * f}), random(rng, {e}),
          random(rng, {e, ca * f}), random(rng, {e})};
}

void criterion_attention() {
  sadu::Rng rng(2024);
  double row_err = 0.0, uniform_err = 0.0, mean_err = 0.0, oracle_err = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    auto inst = random_case(rng, 3, 4, 9, 2, 3);
    const auto x = oracle::random(rng, {3, 4, 9}, -2.0, 2.0);
    TD beta;
    const auto out = sadu::attention_subnet_forward(x, inst.params(), &beta);
    for (std::size_t i = 0; i < 9; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) s += beta[i * 9 + j];
      row_err = std::max(row_err, std::abs(s - 1.0));
    }
    const auto ref = inst.reference(x);
    oracle_err = std::max(oracle_err, oracle::max_abs_diff(oracle::to_vec(out), ref.out));
    oracle_err = std::max(oracle_err, oracle::max_abs_diff(oracle::to_vec(beta), ref.beta));

    // Zero query/key weights: uniform rows and the time mean of V.
    inst.wq = TD(inst.wq.shape());
    inst.wk = TD(inst.wk.shape());
    inst.lq = TD(inst.lq.shape());
    inst.lk = TD(inst.lk.shape());
    TD ubeta;
    const auto uout = sadu::attention_subnet_forward(x, inst.params(), &ubeta);
    for (double b : ubeta.data()) uniform_err = std::max(uniform_err, std::abs(b - 1.0 / 9.0));
    const auto v = oracle::conv2d(oracle::to_vec(x), 3, 4, 9, oracle::to_vec(inst.wv), oracle::to_vec(inst.bv), 3,
                                  1, 1, true);
    for (std::size_t row = 0; row < 12; ++row) {
      double m = 0;
      for (std::size_t t = 0; t < 9; ++t) m += v[row * 9 + t] / 9.0;
      for (std::size_t t = 0; t < 9; ++t) mean_err = std::max(mean_err, std::abs(uout[108 + row * 9 + t] - m));
    }
  }
  verdict(2, row_err < kRowSumTol && uniform_err < kUniformTol && mean_err < kUniformTol && oracle_err < kAttnOracleTol,
          fmt("row-sum err %.1e, uniform err %.1e, time-mean err %.1e (< %.0e); oracle err %.1e (< %.0e)", row_err,
              uniform_err, mean_err, kUniformTol, oracle_err, kAttnOracleTol));
}

// ---------------------------------------------------------------- 3

sadu::TrackPair synth_pair(const sadu::SynthSpec& spec, std::uint64_t seed) {
  return {sadu::gen_voice(spec, seed), sadu::gen_accompaniment(spec, seed), "synth" + std::to_string(seed)};
}

void criterion_oracle_masks() {
  const sadu::SynthSpec spec;
  double worst_loss_frac = 0.0, worst_sdr = 1e9;
  for (std::uint64_t seed : {31u, 32u, 33u, 34u}) {
    const auto pair = synth_pair(spec, seed);
    const auto mixture = sadu::mix(pair);
    const auto spec_y = sadu::stft(mixture);
    const auto y = sadu::split_mag_phase(spec_y);
    const auto xv = sadu::split_mag_phase(sadu::stft(pair.voice));
    const auto xa = sadu::split_mag_phase(sadu::stft(pair.accompaniment));
    const std::size_t n = y.magnitude.size();
    // |X_i| / |Y|, with empty mixture bins masked to zero.
    std::vector<double> mv(n), ma(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ym = y.magnitude[i];
      mv[i] = ym > 0 ? xv.magnitude[i] / ym : 0.0;
      ma[i] = ym > 0 ? xa.magnitude[i] / ym : 0.0;
    }
    const sadu::Shape shape{y.bins, y.frames};
    const sadu::MaskPair<double> masks{TD(shape, mv), TD(shape, ma)};
    const auto loss = sadu::l1_mask_loss(masks, sadu::magnitude_tensor<double>(y),
                                         sadu::magnitude_tensor<double>(xv), sadu::magnitude_tensor<double>(xa));
    double total_y = 0;
    for (double m : y.magnitude) total_y += m;
    worst_loss_frac = std::max(worst_loss_frac, loss[0] / total_y);

    const auto [ev, ea] = sadu::apply_masks(masks, y);
    const auto v = sadu::istft(sadu::combine(ev, spec_y));
    const auto a = sadu::istft(sadu::combine(ea, spec_y));
    const auto r = sadu::evaluate_track(pair.name, v, a, pair.voice, pair.accompaniment);
    for (const auto& s : r.sources) worst_sdr = std::min(worst_sdr, s.metrics.sdr);
  }
  verdict(3, worst_loss_frac < kOracleLossFraction && worst_sdr >= kOracleSdrDb,
          fmt("oracle-mask loss %.2e x sum|Y| (< %.0e), worst oracle SDR %.2f dB (>= %.0f)", worst_loss_frac,
              kOracleLossFraction, worst_sdr, kOracleSdrDb));
}

// ---------------------------------------------------------------- 4

double interior_rel_error(const sadu::AudioClip& clip) {
  const auto back = sadu::istft(sadu::stft(clip));
  double err = 0, peak = 0;
  for (std::size_t i = sadu::kWindowSize; i + sadu::kWindowSize < clip.size(); ++i) {
    err = std::max(err, std::abs(double(back.samples[i]) - clip.samples[i]));
    peak = std::max(peak, std::abs(double(clip.samples[i])));
  }
  return err / peak;
}

void criterion_stft() {
  sadu::Rng rng(77);
  sadu::AudioClip noise;
  noise.samples.resize(48000);
  for (float& s : noise.samples) s = static_cast<float>(sadu::uniform(rng, -0.5, 0.5));
  const auto music = sadu::mix(synth_pair(sadu::SynthSpec{}, 41));
  const double e_noise = interior_rel_error(noise), e_music = interior_rel_error(music);
  verdict(4, e_noise < kStftRelTol && e_music < kStftRelTol,
          fmt("interior relative error: white noise %.2e, synthetic music %.2e (< %.0e)", e_noise, e_music,
              kStftRelTol));
}

// ---------------------------------------------------------------- 5 and 6

sadu::ModelConfig overfit_config(bool attention) {
  sadu::ModelConfig c;
  c.channels = 8;
  c.layers_per_block = 2;
  c.levels = 2;
  c.t_window = 64;
  c.attention_enabled = attention;
  return c;
}

sadu::TrainOptions overfit_options() {
  sadu::TrainOptions o;
  o.lr = 1e-3;
  o.steps = kOverfitSteps;
  return o;
}

struct TrainedModel {
  sadu::Checkpoint final;
  std::vector<double> trace;  // training loss per step
};

TrainedModel train_logged(const std::vector<sadu::TrackPair>& pairs, const sadu::ModelConfig& config,
                          sadu::TrainOptions options, const sadu::Checkpoint* resume = nullptr,
                          sadu::Checkpoint* mid = nullptr) {
  TrainedModel m;
  sadu::TrainHooks hooks;
  hooks.on_step = [&](const sadu::TrainLogRow& row) { m.trace.push_back(row.loss); };
  if (mid) {
    options.checkpoint_every = kResumeStep;
    hooks.on_checkpoint = [&](const sadu::Checkpoint& ck) {
      if (ck.step == kResumeStep) *mid = ck;
    };
  }
  m.final = sadu::train(pairs, {}, config, options, resume, hooks);
  return m;
}

sadu::Checkpoint attention_model;  // criterion-5 result, reused by 6 and 7
std::vector<sadu::TrackPair> train_pairs;

void criterion_overfit() {
  const auto dir = scratch("overfit");
  train_pairs = sadu::load_manifest(sadu::gen_dataset(4, sadu::SynthSpec{}, dir, 11));
  const auto config = overfit_config(true);

  const double initial = sadu::evaluate_loss(train_pairs, sadu::init_params<float>(config, 1), config);
  const auto t0 = Clock::now();
  sadu::Checkpoint mid;
  const auto full = train_logged(train_pairs, config, overfit_options(), nullptr, &mid);
  const double secs = seconds_since(t0);
  attention_model = full.final;
  const double final_loss = sadu::evaluate_loss(train_pairs, full.final.params, config);

  // Resume from the serialized mid-run checkpoint.
  const auto restored = sadu::deserialize_checkpoint(sadu::serialize_checkpoint(mid));
  const auto resumed = train_logged(train_pairs, config, overfit_options(), &restored);
  bool same_trace = resumed.trace.size() == kOverfitSteps - kResumeStep;
  for (std::size_t i = 0; same_trace && i < resumed.trace.size(); ++i)
    same_trace = std::memcmp(&resumed.trace[i], &full.trace[kResumeStep + i], sizeof(double)) == 0;
  const bool same_ckpt = sadu::serialize_checkpoint(resumed.final) == sadu::serialize_checkpoint(full.final);

  const double ratio = final_loss / initial;
  verdict(5, ratio < kOverfitRatio && secs < kOverfitBudgetS && same_trace && same_ckpt,
          fmt("loss %.4g -> %.4g (ratio %.3f < %.1f) in %llu steps, %.0f s (< %.0f s); resume from step %llu: "
              "trace %s, checkpoint %s",
              initial, final_loss, ratio, kOverfitRatio, static_cast<unsigned long long>(kOverfitSteps), secs,
              kOverfitBudgetS, static_cast<unsigned long long>(kResumeStep), same_trace ? "bitwise equal" : "DIFFERS",
              same_ckpt ? "byte-identical" : "DIFFERS"));
}

std::vector<sadu::TrackPair> heldout_pairs() {
  return sadu::load_manifest(sadu::gen_dataset(3, sadu::SynthSpec{}, scratch("heldout"), 1011));
}

void criterion_separation() {
  const auto plain = train_logged(train_pairs, overfit_config(false), overfit_options()).final;
  const auto held = heldout_pairs();
  bool beats_baseline = true;
  double attn_voice = 0, plain_voice = 0;
  std::string detail;
  for (const auto& p : held) {
    const auto m = sadu::mix(p);
    const auto base = sadu::evaluate_track(p.name, m, m, p.voice, p.accompaniment);
    const auto sa = sadu::separate_track(m, attention_model);
    const auto ra = sadu::evaluate_track(p.name, sa.voice, sa.accompaniment, p.voice, p.accompaniment);
    const auto sp = sadu::separate_track(m, plain);
    const auto rp = sadu::evaluate_track(p.name, sp.voice, sp.accompaniment, p.voice, p.accompaniment);
    for (int s = 0; s < 2; ++s)
      beats_baseline = beats_baseline && ra.sources[s].metrics.sdr > base.sources[s].metrics.sdr;
    attn_voice += ra.sources[0].metrics.sdr / static_cast<double>(held.size());
    plain_voice += rp.sources[0].metrics.sdr / static_cast<double>(held.size());
    detail += fmt("  [%s voice %.2f/%.2f base %.2f, accomp %.2f/%.2f base %.2f (attn/plain)]", p.name.c_str(),
                  ra.sources[0].metrics.sdr, rp.sources[0].metrics.sdr, base.sources[0].metrics.sdr,
                  ra.sources[1].metrics.sdr, rp.sources[1].metrics.sdr, base.sources[1].metrics.sdr);
  }
  verdict(6, beats_baseline && attn_voice >= plain_voice,
          fmt("both sources beat the mixture baseline on every held-out track: %s; mean voice SDR attention %.2f dB "
              "vs plain %.2f dB",
              beats_baseline ? "yes" : "NO", attn_voice, plain_voice) +
              detail);
}

// ---------------------------------------------------------------- 7

void criterion_repetition() {
  const auto track = sadu::mix(heldout_pairs().front());
  const auto& config = attention_model.config;
  const std::size_t period_frames = sadu::SynthSpec{}.period_samples() / sadu::kHopSize;
  const auto blocks = config.attention_blocks();
  const std::size_t windows = sadu::window_starts(sadu::stft(track).frames, config.t_window).size();
  double best = 0.0;
  std::string detail;
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    const std::size_t period = period_frames >> config.block_depth(blocks[s]);
    double mass = 0, uniform = 0;
    for (std::size_t w = 0; w < windows; ++w) {
      const auto dump = sadu::dump_attention(track, attention_model, w, s);
      mass += sadu::periodic_lag_mass(dump.map, period) / static_cast<double>(windows);
      uniform = sadu::uniform_periodic_lag_mass(dump.map.dim(0), period);
    }
    best = std::max(best, mass / uniform);
    detail += fmt("  [block %zu: period %zu segments, mass %.3f vs uniform %.3f]", blocks[s], period, mass, uniform);
  }
  verdict(7, best >= kPeriodicMassFactor,
          fmt("best periodic-lag attention mass %.2fx uniform (>= %.1fx, diagnostic only)", best,
              kPeriodicMassFactor) +
              detail,
          /*soft=*/true);
}

// ---------------------------------------------------------------- 8

struct RunArtifacts {
  std::string corpus, checkpoint, voice, accompaniment, report;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

RunArtifacts pipeline(const std::string& tag) {
  const auto dir = scratch("determinism_" + tag);
  sadu::SynthSpec spec;
  spec.duration_s = 2.048;
  const auto manifest = sadu::gen_dataset(3, spec, dir, 5);
  RunArtifacts r;
  for (const auto& name : {"manifest.tsv", "voice_000.wav", "accomp_000.wav", "voice_002.wav", "accomp_002.wav"})
    r.corpus += slurp(dir / name);
  auto pairs = sadu::load_manifest(manifest);
  const sadu::TrackPair test = pairs.back();
  pairs.pop_back();
  auto options = overfit_options();
  options.steps = kDeterminismSteps;
  options.seed = 17;
  const auto ckpt = sadu::train(pairs, {}, overfit_config(true), options);
  sadu::save_checkpoint(dir / "model.ckpt", ckpt);
  r.checkpoint = slurp(dir / "model.ckpt");
  const auto sep = sadu::separate_track(sadu::mix(test), sadu::load_checkpoint(dir / "model.ckpt"));
  sadu::save_wav(dir / "voice.wav", sep.voice);
  sadu::save_wav(dir / "accomp.wav", sep.accompaniment);
  r.voice = slurp(dir / "voice.wav");
  r.accompaniment = slurp(dir / "accomp.wav");
  r.report = sadu::report_json(
      {sadu::evaluate_track(test.name, sep.voice, sep.accompaniment, test.voice, test.accompaniment)});
  return r;
}

void criterion_determinism() {
  const auto a = pipeline("a"), b = pipeline("b");
  auto same = [](const std::string& x, const std::string& y) { return !x.empty() && x == y; };
  const bool c = same(a.corpus, b.corpus), k = same(a.checkpoint, b.checkpoint), v = same(a.voice, b.voice),
             s = same(a.accompaniment, b.accompaniment), r = same(a.report, b.report);
  auto word = [](bool ok) { return ok ? "identical" : "DIFFER"; };
  verdict(8, c && k && v && s && r,
          fmt("two runs: corpus %s, checkpoint %s, separations %s/%s, report %s", word(c), word(k), word(v), word(s),
              word(r)));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion_gradients, criterion_attention, criterion_oracle_masks,
                                                    criterion_stft,      criterion_overfit,   criterion_separation,
                                                    criterion_repetition, criterion_determinism};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      verdict(static_cast<int>(i + 1), false, std::string("exception: ") + e.what());
    }
  }
  std::printf("acceptance: %s (%d hard failure%s)\n", hard_failures == 0 ? "PASS" : "FAIL", hard_failures,
              hard_failures == 1 ? "" : "s");
  return hard_failures == 0 ? 0 : 1;
}
