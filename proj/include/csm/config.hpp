#pragma once
// Run configuration as `key = value` text. Every key maps onto a field of
// the module configs; unknown keys and malformed values are rejected, and
// dump() reproduces an equal config when parsed back.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "csm/acoustic_model.hpp"
#include "csm/analysis.hpp"
#include "csm/error.hpp"
#include "csm/io.hpp"
#include "csm/metrics.hpp"

namespace csm {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::uint64_t seed = 42;
  AnalysisConfig analysis{};
  NetworkDims network{};
  double init_range = kInitRange;
  bool standardize_targets = false;
  TrainConfig train{};
  MetricConfig metrics{};

  void validate() const;
  std::string dump() const;
  static RunConfig parse(std::string_view text, const std::string& origin = "config");
  static RunConfig load(const std::filesystem::path& path);

  bool operator==(const RunConfig& o) const { return dump() == o.dump(); }
};

namespace detail {

inline std::string format_value(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
inline std::string format_value(bool v) { return v ? "true" : "false"; }

template <class T>
T parse_number(std::string_view s, const std::string& key) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "': cannot parse '" + std::string(s) + "'");
  return v;
}

inline bool parse_bool(std::string_view s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + std::string(s) + "'");
}

struct ConfigField {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <class Get>
ConfigField real(std::string key, Get member) {
  return {key, [member](const RunConfig& c) { return format_value(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, std::string_view s) { member(c) = parse_number<double>(s, key); }};
}
template <class Get>
ConfigField count(std::string key, Get member) {
  return {key, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, std::string_view s) {
            using T = std::remove_reference_t<decltype(member(c))>;
            member(c) = parse_number<T>(s, key);
          }};
}
template <class Get>
ConfigField flag(std::string key, Get member) {
  return {key, [member](const RunConfig& c) { return format_value(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, std::string_view s) { member(c) = parse_bool(s, key); }};
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields{
      count("seed", [](RunConfig& c) -> auto& { return c.seed; }),
      real("analysis.frame_hop", [](RunConfig& c) -> auto& { return c.analysis.frame_hop_s; }),
      real("analysis.window", [](RunConfig& c) -> auto& { return c.analysis.baseline.window_s; }),
      real("analysis.f0_min", [](RunConfig& c) -> auto& { return c.analysis.baseline.f0_min; }),
      real("analysis.f0_max", [](RunConfig& c) -> auto& { return c.analysis.baseline.f0_max; }),
      real("analysis.voicing_threshold", [](RunConfig& c) -> auto& { return c.analysis.baseline.voicing_threshold; }),
      real("analysis.silence_rms", [](RunConfig& c) -> auto& { return c.analysis.baseline.silence_rms; }),
      real("analysis.default_f0", [](RunConfig& c) -> auto& { return c.analysis.baseline.default_f0; }),
      flag("refine.enabled", [](RunConfig& c) -> auto& { return c.analysis.refine_f0; }),
      count("refine.harmonics", [](RunConfig& c) -> auto& { return c.analysis.refine.n_harmonics; }),
      count("refine.iterations", [](RunConfig& c) -> auto& { return c.analysis.refine.n_iterations; }),
      real("refine.tolerance", [](RunConfig& c) -> auto& { return c.analysis.refine.convergence_tol; }),
      count("refine.guide_smoothing", [](RunConfig& c) -> auto& { return c.analysis.refine.guide_smoothing; }),
      count("envelope.bins", [](RunConfig& c) -> auto& { return c.analysis.envelope.n_bins; }),
      real("envelope.window_periods", [](RunConfig& c) -> auto& { return c.analysis.envelope.window_periods; }),
      count("envelope.true_envelope_iters", [](RunConfig& c) -> auto& { return c.analysis.envelope.true_envelope_iters; }),
      real("envelope.true_envelope_tol", [](RunConfig& c) -> auto& { return c.analysis.envelope.true_envelope_tol_db; }),
      real("envelope.dynamic_range", [](RunConfig& c) -> auto& { return c.analysis.envelope.dynamic_range_db; }),
      real("mvf.window_periods", [](RunConfig& c) -> auto& { return c.analysis.mvf.window_periods; }),
      real("mvf.contrast", [](RunConfig& c) -> auto& { return c.analysis.mvf.contrast_db; }),
      count("mvf.allowed_failures", [](RunConfig& c) -> auto& { return c.analysis.mvf.allowed_failures; }),
      count("mvf.median_frames", [](RunConfig& c) -> auto& { return c.analysis.mvf.median_frames; }),
      flag("noise.enabled", [](RunConfig& c) -> auto& { return c.analysis.noise_envelope; }),
      real("noise.smoothing_hz", [](RunConfig& c) -> auto& { return c.analysis.noise.smoothing_hz; }),
      real("noise.transition_fraction", [](RunConfig& c) -> auto& { return c.analysis.noise.transition_fraction; }),
      {"network.hidden_dims",
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.network.hidden_dims.size(); ++i)
           s += (i ? "," : "") + std::to_string(c.network.hidden_dims[i]);
         return s;
       },
       [](RunConfig& c, std::string_view s) {
         c.network.hidden_dims.clear();
         while (!s.empty()) {
           const auto comma = s.find(',');
           c.network.hidden_dims.push_back(parse_number<std::size_t>(s.substr(0, comma), "network.hidden_dims"));
           s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
         }
       }},
      count("network.lstm_dim", [](RunConfig& c) -> auto& { return c.network.lstm_dim; }),
      real("network.init_range", [](RunConfig& c) -> auto& { return c.init_range; }),
      flag("network.standardize_targets", [](RunConfig& c) -> auto& { return c.standardize_targets; }),
      real("train.learning_rate", [](RunConfig& c) -> auto& { return c.train.learning_rate; }),
      real("train.momentum", [](RunConfig& c) -> auto& { return c.train.momentum; }),
      real("train.momentum_late", [](RunConfig& c) -> auto& { return c.train.momentum_late; }),
      count("train.momentum_switch_epoch", [](RunConfig& c) -> auto& { return c.train.momentum_switch_epoch; }),
      count("train.halving_start_epoch", [](RunConfig& c) -> auto& { return c.train.halving_start_epoch; }),
      count("train.epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }),
      real("metrics.frame", [](RunConfig& c) -> auto& { return c.metrics.frame_s; }),
      real("metrics.hop", [](RunConfig& c) -> auto& { return c.metrics.hop_s; }),
      count("metrics.lpc_order", [](RunConfig& c) -> auto& { return c.metrics.lpc_order; }),
      real("metrics.llr_cap", [](RunConfig& c) -> auto& { return c.metrics.llr_cap; }),
      real("metrics.snr_floor", [](RunConfig& c) -> auto& { return c.metrics.snr_floor_db; }),
      real("metrics.snr_ceiling", [](RunConfig& c) -> auto& { return c.metrics.snr_ceiling_db; }),
      count("metrics.lsd_bins", [](RunConfig& c) -> auto& { return c.metrics.lsd_bins; }),
      count("metrics.lsd_lifter", [](RunConfig& c) -> auto& { return c.metrics.lsd_lifter; }),
      count("metrics.lsd_true_envelope_iters", [](RunConfig& c) -> auto& { return c.metrics.lsd_true_envelope_iters; }),
  };
  return fields;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

inline void RunConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("config: " + why); };
  const auto& a = analysis;
  if (!(a.frame_hop_s > 0.0 && a.frame_hop_s <= 0.05)) fail("analysis.frame_hop must lie in (0, 0.05] s");
  if (!(a.baseline.window_s > 0.0)) fail("analysis.window must be positive");
  if (!(a.baseline.f0_min > 0.0 && a.baseline.f0_min < a.baseline.f0_max)) fail("need 0 < analysis.f0_min < analysis.f0_max");
  if (!(a.baseline.default_f0 > 0.0)) fail("analysis.default_f0 must be positive");
  if (!(a.baseline.voicing_threshold >= 0.0 && a.baseline.voicing_threshold <= 1.0))
    fail("analysis.voicing_threshold must lie in [0, 1]");
  if (!(a.baseline.silence_rms >= 0.0)) fail("analysis.silence_rms must be >= 0");
  if (a.refine.n_harmonics < 1) fail("refine.harmonics must be >= 1");
  if (!(a.refine.convergence_tol >= 0.0)) fail("refine.tolerance must be >= 0");
  if (a.envelope.n_bins < 2) fail("envelope.bins must be >= 2");
  if (!(a.envelope.window_periods > 0.0)) fail("envelope.window_periods must be positive");
  if (a.envelope.true_envelope_iters < 0) fail("envelope.true_envelope_iters must be >= 0");
  if (!(a.envelope.dynamic_range_db > 0.0)) fail("envelope.dynamic_range must be positive");
  if (!(a.mvf.window_periods > 0.0)) fail("mvf.window_periods must be positive");
  if (a.mvf.median_frames < 1) fail("mvf.median_frames must be >= 1");
  if (!(a.noise.smoothing_hz > 0.0)) fail("noise.smoothing_hz must be positive");
  if (!(a.noise.transition_fraction > 0.0 && a.noise.transition_fraction < 1.0))
    fail("noise.transition_fraction must lie in (0, 1)");
  if (network.lstm_dim < 1) fail("network.lstm_dim must be >= 1");
  for (std::size_t h : network.hidden_dims)
    if (h < 1) fail("network.hidden_dims entries must be >= 1");
  if (!(init_range >= 0.0 && std::isfinite(init_range))) fail("network.init_range must be >= 0");
  try {
    train.validate();
  } catch (const std::exception& e) {
    fail(e.what());
  }
  const auto& m = metrics;
  if (!(m.frame_s > 0.0 && m.hop_s > 0.0)) fail("metrics.frame and metrics.hop must be positive");
  if (m.lpc_order < 1) fail("metrics.lpc_order must be >= 1");
  if (!(m.llr_cap > 0.0)) fail("metrics.llr_cap must be positive");
  if (!(m.snr_floor_db < m.snr_ceiling_db)) fail("need metrics.snr_floor < metrics.snr_ceiling");
  if (m.lsd_bins < 2 || m.lsd_lifter < 1) fail("metrics.lsd_bins must be >= 2 and metrics.lsd_lifter >= 1");
}

inline std::string RunConfig::dump() const {
  std::string out;
  for (const auto& f : detail::config_fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

inline RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
  RunConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    const auto& fields = detail::config_fields();
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == key; });
    if (it == fields.end()) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      it->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  c.validate();
  return c;
}

inline RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

}  // namespace csm
