// SPDX-License-Identifier: Apache-2.0
//
// sadu: corpus generation, training, separation, evaluation and model checks.
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 check failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sadu/bss.hpp"
#include "sadu/checkpoint.hpp"
#include "sadu/error.hpp"
#include "sadu/grad_suite.hpp"
#include "sadu/kernels.hpp"
#include "sadu/run_config.hpp"
#include "sadu/separator.hpp"
#include "sadu/synth.hpp"
#include "sadu/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw sadu::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw sadu::IoError("failed writing " + path.string());
}

std::pair<std::size_t, std::size_t> parse_pair(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw UsageError("expected 'window,subnet', got '" + text + "'");
  try {
    return {std::stoul(text.substr(0, comma)), std::stoul(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw UsageError("expected 'window,subnet', got '" + text + "'");
  }
}

struct GenDataArgs {
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t tracks = 4;
  sadu::SynthSpec spec;
};

int run_gen_data(const GenDataArgs& a) {
  const auto manifest = sadu::gen_dataset(a.tracks, a.spec, a.out, a.seed);
  std::cout << manifest.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::filesystem::path config, manifest, out_ckpt, resume, metrics;
  std::optional<std::uint64_t> seed, steps;
};

int run_train(const TrainArgs& a) {
  sadu::RunConfig rc = sadu::load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  if (a.steps) rc.train.steps = *a.steps;

  auto pairs = sadu::load_manifest(a.manifest);
  if (rc.train.val_tracks >= pairs.size()) {
    throw sadu::FormatError("val_tracks = " + std::to_string(rc.train.val_tracks) +
                            " leaves no training pairs out of " + std::to_string(pairs.size()));
  }
  std::vector<sadu::TrackPair> val(pairs.end() - static_cast<std::ptrdiff_t>(rc.train.val_tracks),
                                   pairs.end());
  pairs.resize(pairs.size() - rc.train.val_tracks);

  std::optional<sadu::Checkpoint> resume;
  if (!a.resume.empty()) resume = sadu::load_checkpoint(a.resume);

  const std::filesystem::path metrics =
      a.metrics.empty() ? std::filesystem::path(a.out_ckpt.string() + ".metrics.csv") : a.metrics;
  const bool append = resume.has_value() && std::filesystem::exists(metrics);
  std::ofstream log(metrics, append ? std::ios::app : std::ios::trunc);
  if (!log) throw sadu::IoError("cannot write " + metrics.string());
  if (!append) log << "step,loss,val_loss\n";

  sadu::TrainHooks hooks;
  hooks.on_step = [&](const sadu::TrainLogRow& row) {
    log << sadu::format_log_row(row) << '\n';
    log.flush();
    if (!log) throw sadu::IoError("failed writing " + metrics.string());
  };
  hooks.on_checkpoint = [&](const sadu::Checkpoint& ckpt) {
    sadu::save_checkpoint(a.out_ckpt.string() + ".step" + std::to_string(ckpt.step), ckpt);
  };
  const sadu::Checkpoint final =
      sadu::train(pairs, val, rc.model, rc.train, resume ? &*resume : nullptr, hooks);
  sadu::save_checkpoint(a.out_ckpt, final);
  std::cerr << "trained " << final.step << " steps -> " << a.out_ckpt.string() << "\n";
  return kExitOk;
}

struct SeparateArgs {
  std::filesystem::path ckpt, in, out_voice, out_accomp, attn_out;
  std::string dump_attn;
};

int run_separate(const SeparateArgs& a) {
  const sadu::Checkpoint ckpt = sadu::load_checkpoint(a.ckpt);
  const sadu::AudioClip clip = sadu::load_wav(a.in);
  sadu::SeparateOptions options;
  if (!a.dump_attn.empty()) options.dump_attention = parse_pair(a.dump_attn);
  const auto result = sadu::separate_track(clip, ckpt, options);
  sadu::save_wav(a.out_voice, result.voice);
  sadu::save_wav(a.out_accomp, result.accompaniment);
  if (!result.attention.empty()) {
    std::filesystem::path path = a.attn_out;
    if (path.empty()) path = a.out_voice.parent_path() / (a.out_voice.stem().string() + ".attn.csv");
    sadu::write_matrix_csv(path, result.attention.front().map);
  }
  return kExitOk;
}

struct DumpAttnArgs {
  std::filesystem::path ckpt, in, out;
  std::size_t window = 0, subnet = 0;
};

int run_dump_attention(const DumpAttnArgs& a) {
  const sadu::Checkpoint ckpt = sadu::load_checkpoint(a.ckpt);
  const auto dump = sadu::dump_attention(sadu::load_wav(a.in), ckpt, a.window, a.subnet);
  sadu::write_matrix_csv(a.out, dump.map);
  std::cerr << "block " << dump.block << ", " << dump.map.dim(0) << " segments -> " << a.out.string()
            << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::filesystem::path est_voice, est_accomp, ref_voice, ref_accomp, json;
  std::string track = "track";
  bool table = false;
};

int run_eval(const EvalArgs& a) {
  const auto report = sadu::evaluate_track(a.track, sadu::load_wav(a.est_voice), sadu::load_wav(a.est_accomp),
                                           sadu::load_wav(a.ref_voice), sadu::load_wav(a.ref_accomp));
  std::cout << (a.table ? sadu::report_table({report}) : sadu::report_csv({report}));
  if (!a.json.empty()) write_text(a.json, sadu::report_json({report}));
  return kExitOk;
}

int run_gradcheck(bool tiny, std::size_t seeds) {
  bool ok = true;
  double worst = 0.0;
  auto print = [&](const sadu::GradSuiteEntry& e) {
    if (e.zero_gradient) {
      std::printf("%-40s max |grad| %.3e  (zero-gradient bound %.1e, %zu seeds)  %s\n", e.name.c_str(),
                  e.max_abs_gradient, e.abs_tolerance, e.seeds, e.passed() ? "ok" : "FAIL");
    } else {
      std::printf("%-40s max_rel_error %.3e  (tol %.0e, %zu seeds)  %s\n", e.name.c_str(), e.max_rel_error,
                  e.tolerance, e.seeds, e.passed() ? "ok" : "FAIL");
    }
    ok = ok && e.passed();
  };
  for (const auto& e : sadu::run_op_grad_suite(seeds)) {
    print(e);
    if (!e.zero_gradient) worst = std::max(worst, e.max_rel_error);
  }
  std::printf("op-level max relative error: %.3e\n", worst);
  if (tiny) {
    const auto entries = sadu::run_end_to_end_grad_check();
    for (const auto& e : entries) print(e);
    std::printf("end-to-end max relative error: %.3e\n", entries.front().max_rel_error);
  }
  return ok ? kExitOk : kExitCheck;
}

sadu::ModelConfig config_or_default(const std::filesystem::path& path) {
  return path.empty() ? sadu::ModelConfig::attention_default() : sadu::load_run_config(path).model;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense-UNet singing voice separation with self-attention"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads for the parallel kernels")->check(CLI::PositiveNumber);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic corpus and its manifest");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Corpus seed")->required();
  gen_cmd->add_option("--tracks", gen.tracks, "Number of track pairs")->capture_default_str();
  gen_cmd->add_option("--duration", gen.spec.duration_s, "Track length in seconds")->capture_default_str();
  gen_cmd->add_option("--period", gen.spec.accompaniment.period_s, "Accompaniment pattern period in seconds")
      ->capture_default_str();
  gen_cmd->add_option("--chord", gen.spec.accompaniment.chord_hz, "Accompaniment chord tones in Hz")
      ->delimiter(',');
  gen_cmd->add_option("--click-rate", gen.spec.accompaniment.click_rate_hz, "Clicks per second")
      ->capture_default_str();
  gen_cmd->add_option("--transpose", gen.spec.accompaniment.transpose_semitones,
                      "Per-track random transposition range in semitones")
      ->capture_default_str();
  gen_cmd->add_option("--voice-min-pitch", gen.spec.voice.min_pitch_hz)->capture_default_str();
  gen_cmd->add_option("--voice-max-pitch", gen.spec.voice.max_pitch_hz)->capture_default_str();
  gen_cmd->add_option("--notes-per-s", gen.spec.voice.notes_per_s, "Voice onset density")->capture_default_str();

  TrainArgs train;
  std::uint64_t train_seed = 0, train_steps = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a manifest");
  train_cmd->add_option("--config", train.config, "Run configuration file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--manifest", train.manifest, "Track manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out-ckpt", train.out_ckpt, "Final checkpoint path")->required();
  train_cmd->add_option("--resume", train.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--metrics", train.metrics, "Metrics CSV (default <out-ckpt>.metrics.csv)");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override the configured seed");
  auto* steps_opt = train_cmd->add_option("--steps", train_steps, "Override the configured step count");

  SeparateArgs sep;
  auto* sep_cmd = app.add_subcommand("separate", "Separate a mixture into voice and accompaniment");
  sep_cmd->add_option("--ckpt", sep.ckpt)->required()->check(CLI::ExistingFile);
  sep_cmd->add_option("--in", sep.in, "Mixture WAV")->required()->check(CLI::ExistingFile);
  sep_cmd->add_option("--out-voice", sep.out_voice)->required();
  sep_cmd->add_option("--out-accomp", sep.out_accomp)->required();
  sep_cmd->add_option("--dump-attn", sep.dump_attn, "Also write the attention map of 'window,subnet'");
  sep_cmd->add_option("--attn-out", sep.attn_out, "Attention CSV path (default <out-voice>.attn.csv)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "SDR/SIR/SAR of estimates against references");
  eval_cmd->add_option("--est-voice", ev.est_voice)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--est-accomp", ev.est_accomp)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--ref-voice", ev.ref_voice)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--ref-accomp", ev.ref_accomp)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--track", ev.track, "Track name in the report")->capture_default_str();
  eval_cmd->add_flag("--table", ev.table, "Pretty table instead of CSV");
  eval_cmd->add_option("--json", ev.json, "Also write a JSON report");

  bool tiny = false;
  std::size_t grad_seeds = 10;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad_cmd->add_flag("--tiny", tiny, "Include the end-to-end tiny network check");
  grad_cmd->add_option("--seeds", grad_seeds, "Random points per op")->capture_default_str();

  DumpAttnArgs da;
  auto* da_cmd = app.add_subcommand("dump-attention", "Write one subnet's attention map as CSV");
  da_cmd->add_option("--ckpt", da.ckpt)->required()->check(CLI::ExistingFile);
  da_cmd->add_option("--in", da.in, "Mixture WAV")->required()->check(CLI::ExistingFile);
  da_cmd->add_option("--window", da.window)->required();
  da_cmd->add_option("--subnet", da.subnet)->required();
  da_cmd->add_option("--out", da.out)->required();

  std::filesystem::path describe_config;
  auto* desc_cmd = app.add_subcommand("describe", "Print layer shapes and parameter count");
  desc_cmd->add_option("--config", describe_config, "Run configuration (default: attention model)")
      ->check(CLI::ExistingFile);

  std::filesystem::path dump_config;
  auto* dumpcfg_cmd = app.add_subcommand("dump-config", "Print the canonical form of a configuration");
  dumpcfg_cmd->add_option("--config", dump_config, "Run configuration (default: built-in defaults)")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    sadu::kernels::set_threads(threads);
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) {
      if (*seed_opt) train.seed = train_seed;
      if (*steps_opt) train.steps = train_steps;
      return run_train(train);
    }
    if (*sep_cmd) return run_separate(sep);
    if (*eval_cmd) return run_eval(ev);
    if (*grad_cmd) return run_gradcheck(tiny, grad_seeds);
    if (*da_cmd) return run_dump_attention(da);
    if (*desc_cmd) {
      std::cout << sadu::describe_model(config_or_default(describe_config));
      return kExitOk;
    }
    if (*dumpcfg_cmd) {
      const sadu::RunConfig rc = dump_config.empty() ? sadu::RunConfig{} : sadu::load_run_config(dump_config);
      std::cout << sadu::format_run_config(rc);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const sadu::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
