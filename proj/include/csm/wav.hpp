#pragma once
// RIFF/WAVE PCM reader and writer (16-bit signed little-endian, mono).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "csm/error.hpp"
#include "csm/io.hpp"
#include "csm/signal.hpp"

namespace csm {

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

inline SpeechBuffer decode_wav(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>") {
  auto fail = [&](const std::string& why) { throw IoError(origin + ": " + why); };
  if (bytes.size() < 12) fail("truncated RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail("not a RIFF/WAVE file");

  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::read_u32le(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) fail("chunk extends past end of file");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) fail("fmt chunk too short");
      format = detail::read_u16le(bytes.data() + body);
      channels = detail::read_u16le(bytes.data() + body + 2);
      rate = detail::read_u32le(bytes.data() + body + 4);
      bits = detail::read_u16le(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) fail("data chunk before fmt chunk");
      if (format != 1) fail("only PCM (format 1) is supported");
      if (channels != 1) fail("only mono audio is supported");
      if (bits != 16) fail("only 16-bit samples are supported");
      if (rate == 0) fail("sample rate is zero");
      SpeechBuffer out;
      out.sample_rate = static_cast<int>(rate);
      const std::size_t n = size / 2;
      out.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto raw = static_cast<std::int16_t>(detail::read_u16le(bytes.data() + body + 2 * i));
        out.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  fail(have_fmt ? "missing data chunk" : "missing fmt chunk");
  return {};
}

inline std::vector<unsigned char> encode_wav(const SpeechBuffer& buffer) {
  buffer.validate();
  const auto n = static_cast<std::uint32_t>(buffer.size());
  const std::uint32_t data_bytes = 2 * n;
  ByteWriter w;
  w.bytes("RIFF");
  w.u32(36 + data_bytes);
  w.bytes("WAVE");
  w.bytes("fmt ");
  w.u32(16);
  w.u16(1);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(buffer.sample_rate));
  w.u32(static_cast<std::uint32_t>(buffer.sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.bytes("data");
  w.u32(data_bytes);
  for (double s : buffer.samples) {
    const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  return std::move(w).take();
}

inline SpeechBuffer read_wav(const std::filesystem::path& path) {
  return decode_wav(read_file_bytes(path), path.string());
}

inline void write_wav(const std::filesystem::path& path, const SpeechBuffer& buffer) {
  write_file_atomic(path, encode_wav(buffer));
}

// Round a buffer through 16-bit quantisation without touching disk.
inline SpeechBuffer quantize16(const SpeechBuffer& buffer) { return decode_wav(encode_wav(buffer)); }

}  // namespace csm
