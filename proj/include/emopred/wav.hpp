// Mono PCM WAV reading and writing.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "emopred/common.hpp"

namespace emopred {

inline constexpr int kMinSampleRate = 16000;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;

  void validate() const {
    if (sample_rate < kMinSampleRate) {
      throw Error("sample rate below 16000 (" + std::to_string(sample_rate) + " Hz)");
    }
    if (samples.empty()) throw Error("audio clip has no samples");
    for (double s : samples) {
      if (!std::isfinite(s)) throw Error("audio clip contains non-finite samples");
    }
  }
};

namespace wav_detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline constexpr std::uint16_t kFormatPcm = 1;
inline constexpr std::uint16_t kFormatFloat = 3;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace wav_detail

/// Decodes an in-memory RIFF/WAVE image. Accepts 16-bit integer PCM and
/// 32-bit IEEE float; everything else is rejected.
inline AudioClip decode_wav(const std::vector<unsigned char>& bytes) {
  using namespace wav_detail;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw Error("corrupt WAV: chunk overruns file");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error("corrupt WAV: short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw Error("corrupt WAV: short extensible fmt chunk");
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw Error("corrupt WAV: missing fmt chunk");
  if (data == nullptr) throw Error("corrupt WAV: missing data chunk");
  if (channels != 1) throw Error("multi-channel unsupported (" + std::to_string(channels) + " channels)");
  if (rate < static_cast<std::uint32_t>(kMinSampleRate)) {
    throw Error("sample rate below 16000 (" + std::to_string(rate) + " Hz)");
  }

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_size / 2;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
      clip.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_size / 4;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t raw = read_u32(data + 4 * i);
      float v;
      std::memcpy(&v, &raw, sizeof v);
      clip.samples[i] = std::clamp(static_cast<double>(v), -1.0, 1.0);
    }
  } else {
    throw Error("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                std::to_string(bits) + " bits)");
  }
  clip.validate();
  return clip;
}

inline AudioClip load_audio(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

/// Encodes samples as 16-bit PCM with the given channel count (interleaved).
inline std::vector<unsigned char> encode_wav_pcm16(const std::vector<double>& samples, int sample_rate,
                                                   int channels = 1) {
  using namespace wav_detail;
  std::vector<unsigned char> out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate * channels * 2));
  put_u16(out, static_cast<std::uint16_t>(channels * 2));
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double s : samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, int sample_rate,
                      int channels = 1) {
  const auto bytes = encode_wav_pcm16(samples, sample_rate, channels);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace emopred
