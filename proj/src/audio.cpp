// SPDX-License-Identifier: Apache-2.0
#include "sadu/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>

#include "sadu/error.hpp"

namespace sadu {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("WAV: truncated ") + what + " at byte offset " +
                        std::to_string(offset_));
    }
  }

  template <typename T>
  T read(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  std::string tag(const char* what) {
    need(4, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), 4);
    offset_ += 4;
    return s;
  }

  void skip(std::size_t n) { offset_ = std::min(bytes_.size(), offset_ + n); }
  const unsigned char* here() const { return bytes_.data() + offset_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t offset_ = 0;
};

template <typename T>
void put(std::vector<unsigned char>& out, T value) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioClip decode_wav(const std::vector<unsigned char>& bytes, int target_rate) {
  ByteReader r(bytes);
  if (r.tag("RIFF header") != "RIFF") throw FormatError("WAV: missing RIFF tag at byte offset 0");
  r.read<std::uint32_t>("RIFF size");
  if (r.tag("WAVE tag") != "WAVE") throw FormatError("WAV: missing WAVE tag at byte offset 8");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  while (r.remaining() > 0) {
    const std::size_t chunk_start = r.offset();
    const std::string id = r.tag("chunk id");
    const auto size = r.read<std::uint32_t>("chunk size");
    if (id == "fmt ") {
      if (size < 16) {
        throw FormatError("WAV: fmt chunk too short at byte offset " + std::to_string(chunk_start));
      }
      r.need(size, "fmt chunk");
      const std::size_t body = r.offset();
      format = r.read<std::uint16_t>("format tag");
      channels = r.read<std::uint16_t>("channel count");
      rate = r.read<std::uint32_t>("sample rate");
      r.read<std::uint32_t>("byte rate");
      block_align = r.read<std::uint16_t>("block align");
      bits = r.read<std::uint16_t>("bits per sample");
      if (format == kFormatExtensible) {
        if (size < 40) {
          throw FormatError("WAV: extensible fmt chunk too short at byte offset " +
                            std::to_string(chunk_start));
        }
        r.skip(8);  // cbSize, valid bits, channel mask
        format = r.read<std::uint16_t>("sub-format");
      }
      r.skip(body + size + (size & 1u) - r.offset());
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) {
        throw FormatError("WAV: data chunk before fmt chunk at byte offset " +
                          std::to_string(chunk_start));
      }
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32) {
        throw FormatError("WAV: unsupported codec (format " + std::to_string(format) + ", " +
                          std::to_string(bits) + " bits) declared before byte offset " +
                          std::to_string(chunk_start));
      }
      if (channels != 1 && channels != 2) {
        throw FormatError("WAV: unsupported channel count " + std::to_string(channels));
      }
      if (rate == 0) throw FormatError("WAV: zero sample rate");
      const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
      if (block_align != frame_bytes) {
        throw FormatError("WAV: block align " + std::to_string(block_align) +
                          " inconsistent with format");
      }
      const std::size_t available = std::min<std::size_t>(size, r.remaining());
      if (available < size) {
        throw FormatError("WAV: data chunk truncated at byte offset " +
                          std::to_string(r.offset() + available));
      }
      const std::size_t frames = size / frame_bytes;
      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(frames);
      const unsigned char* p = r.here();
      for (std::size_t i = 0; i < frames; ++i) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < channels; ++c) {
          const unsigned char* s = p + i * frame_bytes + c * (bits / 8);
          if (pcm16) {
            std::int16_t v;
            std::memcpy(&v, s, 2);
            acc += static_cast<float>(v) / 32768.0f;
          } else {
            float v;
            std::memcpy(&v, s, 4);
            acc += v;
          }
        }
        clip.samples[i] = channels == 2 ? 0.5f * acc : acc;
      }
      if (target_rate > 0 && clip.sample_rate != target_rate) {
        std::cerr << "warning: resampling " << clip.sample_rate << " Hz input to " << target_rate
                  << " Hz (linear interpolation)\n";
        clip = resample_linear(clip, target_rate);
      }
      return clip;
    } else {
      r.need(size, "chunk body");
      r.skip(size + (size & 1u));
    }
  }
  throw FormatError("WAV: no data chunk before end of file at byte offset " +
                    std::to_string(r.offset()));
}

std::vector<unsigned char> encode_wav(const AudioClip& clip, WavEncoding encoding) {
  if (clip.sample_rate <= 0) throw ContractError("save_wav: sample rate must be positive");
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * (bits / 8));

  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put<std::uint32_t>(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, format);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  put<std::uint16_t>(out, bits / 8);
  put<std::uint16_t>(out, bits);
  put_tag(out, "data");
  put<std::uint32_t>(out, data_bytes);
  for (float v : clip.samples) {
    if (encoding == WavEncoding::kPcm16) {
      const float q = std::round(std::clamp(v, -1.0f, 1.0f) * 32768.0f);
      put<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(q, -32768.0f, 32767.0f)));
    } else {
      put<float>(out, v);
    }
  }
  return out;
}

AudioClip load_wav(const std::filesystem::path& path, int target_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes, target_rate);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  const auto bytes = encode_wav(clip, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

AudioClip resample_linear(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate <= 0 || target_rate <= 0) {
    throw ContractError("resample_linear: sample rates must be positive");
  }
  AudioClip out;
  out.sample_rate = target_rate;
  if (clip.samples.empty() || clip.sample_rate == target_rate) {
    out.samples = clip.samples;
    return out;
  }
  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.samples.size()) / ratio));
  out.samples.resize(std::max<std::size_t>(n_out, 1));
  const std::size_t last = clip.samples.size() - 1;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto i0 = std::min(static_cast<std::size_t>(pos), last);
    const std::size_t i1 = std::min(i0 + 1, last);
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] = static_cast<float>((1.0 - frac) * clip.samples[i0] + frac * clip.samples[i1]);
  }
  return out;
}

}  // namespace sadu
