#pragma once
// Track container: named frame-major float32 matrices sharing one frame
// count, used both for vocoder parameters and for linguistic features.
//
// Layout (little-endian):
//   "CSMT", u32 version, u32 sample_rate, f64 frame_hop, u32 n_channels,
//   then per channel: u16 name length, name bytes, u32 rows, u32 cols,
//   rows*cols f32 in row-major order.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csm/analysis.hpp"
#include "csm/error.hpp"
#include "csm/io.hpp"

namespace csm {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Channel {
  std::string name;
  FloatMatrix data;
};

inline constexpr std::uint32_t kContainerVersion = 1;

struct TrackContainer {
  int sample_rate = 16000;
  double frame_hop = 0.005;
  std::vector<Channel> channels;

  std::size_t n_frames() const { return channels.empty() ? 0 : static_cast<std::size_t>(channels.front().data.rows()); }

  const Channel* find(const std::string& name) const {
    auto it = std::find_if(channels.begin(), channels.end(), [&](const Channel& c) { return c.name == name; });
    return it == channels.end() ? nullptr : &*it;
  }
  const Channel& require(const std::string& name) const {
    const Channel* c = find(name);
    if (!c) throw PreconditionError("container has no '" + name + "' channel");
    return *c;
  }
  void set(std::string name, FloatMatrix data) {
    for (auto& c : channels)
      if (c.name == name) {
        c.data = std::move(data);
        return;
      }
    channels.push_back({std::move(name), std::move(data)});
  }

  void validate() const {
    if (sample_rate <= 0) throw DomainError("TrackContainer: sample_rate must be positive");
    if (!(frame_hop > 0.0)) throw DomainError("TrackContainer: frame_hop must be positive");
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const auto& c = channels[i];
      if (c.name.empty() || c.name.size() > 0xffff) throw ShapeError("TrackContainer: bad channel name");
      if (static_cast<std::size_t>(c.data.rows()) != n_frames())
        throw ShapeError("TrackContainer: channel '" + c.name + "' has " + std::to_string(c.data.rows()) +
                         " frames, expected " + std::to_string(n_frames()));
      for (std::size_t j = 0; j < i; ++j)
        if (channels[j].name == c.name) throw ShapeError("TrackContainer: duplicate channel '" + c.name + "'");
    }
  }
};

inline std::vector<unsigned char> encode_container(const TrackContainer& c) {
  c.validate();
  ByteWriter w;
  w.bytes("CSMT");
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(c.sample_rate));
  w.f64(c.frame_hop);
  w.u32(static_cast<std::uint32_t>(c.channels.size()));
  for (const auto& ch : c.channels) {
    w.u16(static_cast<std::uint16_t>(ch.name.size()));
    w.bytes(ch.name);
    w.u32(static_cast<std::uint32_t>(ch.data.rows()));
    w.u32(static_cast<std::uint32_t>(ch.data.cols()));
    for (Eigen::Index i = 0; i < ch.data.size(); ++i) w.f32(ch.data.data()[i]);
  }
  return std::move(w).take();
}

inline TrackContainer decode_container(const std::vector<unsigned char>& bytes, const std::string& origin = "container") {
  ByteReader r(bytes, origin);
  if (r.bytes(4) != "CSMT") r.fail("not a track container (bad magic)");
  if (const auto v = r.u32(); v != kContainerVersion) r.fail("unsupported container version " + std::to_string(v));
  TrackContainer c;
  c.sample_rate = static_cast<int>(r.u32());
  c.frame_hop = r.f64();
  const std::uint32_t n = r.u32();
  for (std::uint32_t k = 0; k < n; ++k) {
    Channel ch;
    ch.name = r.bytes(r.u16());
    const std::uint64_t rows = r.u32(), cols = r.u32();
    if (rows * cols * 4 > r.remaining()) r.fail("channel '" + ch.name + "' extends past the end of the file");
    ch.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < ch.data.size(); ++i) ch.data.data()[i] = r.f32();
    c.channels.push_back(std::move(ch));
  }
  if (!r.at_end()) r.fail("trailing bytes after the last channel");
  try {
    c.validate();
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
  return c;
}

inline void write_container(const std::filesystem::path& path, const TrackContainer& c) {
  write_file_atomic(path, encode_container(c));
}

inline TrackContainer read_container(const std::filesystem::path& path) {
  return decode_container(read_file_bytes(path), path.string());
}

// ---------------------------------------------------------------------------
// ParameterTrack and feature matrices <-> container

inline FloatMatrix to_float(const Eigen::MatrixXd& m) { return m.cast<float>(); }

inline FloatMatrix column(const std::vector<double>& v) {
  FloatMatrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<float>(v[i]);
  return m;
}

inline TrackContainer container_from_track(const ParameterTrack& t) {
  t.validate();
  TrackContainer c;
  c.sample_rate = t.sample_rate;
  c.frame_hop = t.frame_hop;
  c.set("f0", column(t.f0.values));
  std::vector<double> voicing(t.n_frames());
  for (std::size_t i = 0; i < voicing.size(); ++i) voicing[i] = t.f0.voicing[i] ? 1.0 : 0.0;
  c.set("voicing", column(voicing));
  c.set("mvf", column(t.mvf));
  c.set("envelope", to_float(t.envelope));
  if (t.has_noise_env()) c.set("noise_env", to_float(t.noise_env));
  return c;
}

inline ParameterTrack track_from_container(const TrackContainer& c) {
  c.validate();
  auto vec = [&](const char* name) {
    const auto& m = c.require(name).data;
    if (m.cols() != 1) throw ShapeError(std::string("channel '") + name + "' must have one column");
    std::vector<double> v(static_cast<std::size_t>(m.rows()));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m(static_cast<Eigen::Index>(i), 0);
    return v;
  };
  ParameterTrack t;
  t.sample_rate = c.sample_rate;
  t.frame_hop = c.frame_hop;
  t.f0.frame_hop = c.frame_hop;
  t.f0.values = vec("f0");
  const auto voicing = vec("voicing");
  t.f0.voicing.resize(voicing.size());
  for (std::size_t i = 0; i < voicing.size(); ++i) t.f0.voicing[i] = voicing[i] >= 0.5;
  t.mvf = vec("mvf");
  t.envelope = c.require("envelope").data.cast<double>();
  if (const Channel* ne = c.find("noise_env")) t.noise_env = ne->data.cast<double>();
  t.validate();
  return t;
}

inline TrackContainer container_from_features(const Eigen::MatrixXd& features, double frame_hop, int sample_rate) {
  TrackContainer c;
  c.sample_rate = sample_rate;
  c.frame_hop = frame_hop;
  c.set("features", to_float(features));
  c.validate();
  return c;
}

inline Eigen::MatrixXd features_from_container(const TrackContainer& c) {
  return c.require("features").data.cast<double>();
}

}  // namespace csm
