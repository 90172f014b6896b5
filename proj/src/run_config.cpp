// SPDX-License-Identifier: Apache-2.0
#include "sadu/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sadu/error.hpp"

namespace sadu {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct LineError {
  std::size_t line;
  std::string key;

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError("config line " + std::to_string(line) + " (" + key + "): " + msg);
  }
};

template <typename T>
T parse_uint(const std::string& v, const LineError& where) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    where.fail("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& v, const LineError& where) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    where.fail("expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v, const LineError& where) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  where.fail("expected true or false, got '" + v + "'");
}

std::optional<std::vector<std::size_t>> parse_blocks(const std::string& v, const LineError& where) {
  if (v == "default") return std::nullopt;
  std::vector<std::size_t> blocks;
  if (v == "none") return blocks;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) blocks.push_back(parse_uint<std::size_t>(trim(item), where));
  if (blocks.empty()) where.fail("empty block list");
  return blocks;
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

const std::set<std::string> kModelKeys = {"channels",  "layers_per_block", "levels",
                                          "attn_channels", "embed_dim",   "attn_blocks",
                                          "freq_bins", "t_window",         "attention"};
const std::set<std::string> kTrainKeys = {"lr",         "adam_beta1",       "adam_beta2",
                                          "adam_eps",   "steps",            "batch_size",
                                          "checkpoint_every", "val_every",  "val_tracks",
                                          "seed",       "augment"};

RunConfig parse(const std::string& text, bool allow_training) {
  RunConfig cfg;
  bool t_window_set = false;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const LineError where{line_no, key};
    const bool model_key = kModelKeys.contains(key);
    if (!model_key && !(allow_training && kTrainKeys.contains(key))) where.fail("unknown key");
    if (!seen.insert(key).second) where.fail("duplicate key");
    if (value.empty()) where.fail("missing value");

    ModelConfig& m = cfg.model;
    TrainOptions& t = cfg.train;
    if (key == "channels") m.channels = parse_uint<std::size_t>(value, where);
    else if (key == "layers_per_block") m.layers_per_block = parse_uint<std::size_t>(value, where);
    else if (key == "levels") m.levels = parse_uint<std::size_t>(value, where);
    else if (key == "attn_channels") m.attn_channels = parse_uint<std::size_t>(value, where);
    else if (key == "embed_dim") m.embed_dim = parse_uint<std::size_t>(value, where);
    else if (key == "attn_blocks") m.attn_blocks = parse_blocks(value, where);
    else if (key == "freq_bins") m.freq_bins = parse_uint<std::size_t>(value, where);
    else if (key == "t_window") {
      m.t_window = parse_uint<std::size_t>(value, where);
      t_window_set = true;
    } else if (key == "attention") m.attention_enabled = parse_bool(value, where);
    else if (key == "lr") t.lr = parse_double(value, where);
    else if (key == "adam_beta1") t.beta1 = parse_double(value, where);
    else if (key == "adam_beta2") t.beta2 = parse_double(value, where);
    else if (key == "adam_eps") t.eps = parse_double(value, where);
    else if (key == "steps") t.steps = parse_uint<std::uint64_t>(value, where);
    else if (key == "batch_size") t.batch_size = parse_uint<std::size_t>(value, where);
    else if (key == "checkpoint_every") t.checkpoint_every = parse_uint<std::uint64_t>(value, where);
    else if (key == "val_every") t.val_every = parse_uint<std::uint64_t>(value, where);
    else if (key == "val_tracks") t.val_tracks = parse_uint<std::size_t>(value, where);
    else if (key == "seed") t.seed = parse_uint<std::uint64_t>(value, where);
    else if (key == "augment") t.augment = parse_bool(value, where);
  }
  if (!t_window_set) {
    cfg.model.t_window = cfg.model.attention_enabled ? ModelConfig::attention_default().t_window
                                                     : ModelConfig::plain_default().t_window;
  }
  try {
    cfg.model.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid model configuration: ") + e.what());
  }
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) { return parse(text, true); }

ModelConfig parse_model_config(const std::string& text) { return parse(text, false).model; }

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_model_config(const ModelConfig& m) {
  std::ostringstream os;
  os << "channels = " << m.channels << '\n'
     << "layers_per_block = " << m.layers_per_block << '\n'
     << "levels = " << m.levels << '\n'
     << "attn_channels = " << m.attn_channels << '\n'
     << "embed_dim = " << m.embed_dim << '\n'
     << "attn_blocks = ";
  if (!m.attn_blocks) {
    os << "default";
  } else if (m.attn_blocks->empty()) {
    os << "none";
  } else {
    for (std::size_t i = 0; i < m.attn_blocks->size(); ++i) {
      os << (i ? "," : "") << (*m.attn_blocks)[i];
    }
  }
  os << '\n'
     << "freq_bins = " << m.freq_bins << '\n'
     << "t_window = " << m.t_window << '\n'
     << "attention = " << (m.attention_enabled ? "true" : "false") << '\n';
  return os.str();
}

std::string format_run_config(const RunConfig& c) {
  const TrainOptions& t = c.train;
  std::ostringstream os;
  os << format_model_config(c.model) << "lr = " << fmt_double(t.lr) << '\n'
     << "adam_beta1 = " << fmt_double(t.beta1) << '\n'
     << "adam_beta2 = " << fmt_double(t.beta2) << '\n'
     << "adam_eps = " << fmt_double(t.eps) << '\n'
     << "steps = " << t.steps << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "checkpoint_every = " << t.checkpoint_every << '\n'
     << "val_every = " << t.val_every << '\n'
     << "val_tracks = " << t.val_tracks << '\n'
     << "seed = " << t.seed << '\n'
     << "augment = " << (t.augment ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace sadu
