// SPDX-License-Identifier: Apache-2.0
#include "sadu/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sadu/error.hpp"
#include "sadu/run_config.hpp"

namespace sadu {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'A', 'D', 'U'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void put_floats(std::span<const float> values) {
    const auto* p = reinterpret_cast<const unsigned char*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }
  void put_raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }

  std::vector<unsigned char> take() { return std::move(bytes_); }

 private:
  std::vector<unsigned char> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::kTruncated,
                            std::string("checkpoint truncated while reading ") + what + " at byte " +
                                std::to_string(pos_));
    }
  }
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<float> get_floats(std::size_t n, const char* what) {
    if (n > (bytes_.size() - pos_) / sizeof(float)) need(n * sizeof(float), what);
    std::vector<float> out(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return out;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

[[noreturn]] void inconsistent(const std::string& msg) {
  throw CheckpointError(CheckpointError::Kind::kInconsistent, "checkpoint inconsistent: " + msg);
}

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_raw(kMagic, 4);
  w.put(kCheckpointVersion);
  w.put_string(format_model_config(ckpt.config));
  const auto& entries = ckpt.params.entries();
  w.put(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    w.put_string(name);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.put(static_cast<std::uint32_t>(e));
    w.put_floats(t.data());
  }
  w.put(static_cast<std::uint8_t>(ckpt.adam ? 1 : 0));
  if (ckpt.adam) {
    const auto& a = *ckpt.adam;
    if (a.m.size() != entries.size() || a.v.size() != entries.size()) {
      throw ContractError("optimizer state does not match the parameter set");
    }
    w.put(a.step);
    w.put(a.lr);
    w.put(a.beta1);
    w.put(a.beta2);
    w.put(a.eps);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (a.m[i].size() != entries[i].second.numel() || a.v[i].size() != entries[i].second.numel()) {
        throw ContractError("optimizer state does not match parameter '" + entries[i].first + "'");
      }
      w.put_floats(a.m[i]);
      w.put_floats(a.v[i]);
    }
  }
  w.put(ckpt.seed);
  w.put(ckpt.step);
  w.put_string(ckpt.rng_state);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::kBadMagic, "not a checkpoint (bad magic)");
  }
  (void)r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersionMismatch,
                          "checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }

  Checkpoint ckpt;
  try {
    ckpt.config = parse_model_config(r.get_string("model config"));
  } catch (const FormatError& e) {
    inconsistent(e.what());
  }

  const auto plan = parameter_plan(ckpt.config);
  const auto n_params = r.get<std::uint32_t>("parameter count");
  if (n_params != plan.size()) {
    inconsistent("holds " + std::to_string(n_params) + " parameters, configuration needs " +
                 std::to_string(plan.size()));
  }
  for (const auto& spec : plan) {
    std::string name = r.get_string("parameter name");
    if (name != spec.name) inconsistent("expected parameter '" + spec.name + "', found '" + name + "'");
    const auto rank = r.get<std::uint32_t>("parameter rank");
    if (rank != spec.shape.size()) inconsistent("rank of '" + name + "'");
    Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint32_t>("parameter shape");
    if (shape != spec.shape) {
      inconsistent("'" + name + "' has shape " + shape_str(shape) + ", expected " +
                   shape_str(spec.shape));
    }
    auto data = r.get_floats(shape_numel(shape), "parameter data");
    ckpt.params.add(std::move(name), Tensor<float>(shape, std::move(data)));
  }

  const auto has_adam = r.get<std::uint8_t>("optimizer flag");
  if (has_adam > 1) inconsistent("optimizer flag is " + std::to_string(has_adam));
  if (has_adam) {
    AdamState<float> a;
    a.step = r.get<std::uint64_t>("optimizer step");
    a.lr = r.get<double>("optimizer lr");
    a.beta1 = r.get<double>("optimizer beta1");
    a.beta2 = r.get<double>("optimizer beta2");
    a.eps = r.get<double>("optimizer eps");
    for (const auto& [name, t] : ckpt.params.entries()) {
      a.m.push_back(r.get_floats(t.numel(), "optimizer moments"));
      a.v.push_back(r.get_floats(t.numel(), "optimizer moments"));
    }
    ckpt.adam = std::move(a);
  }
  ckpt.seed = r.get<std::uint64_t>("seed");
  ckpt.step = r.get<std::uint64_t>("step");
  ckpt.rng_state = r.get_string("rng state");
  if (!r.at_end()) inconsistent("trailing bytes after offset " + std::to_string(r.pos()));
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace sadu
