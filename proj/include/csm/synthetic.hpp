#pragma once
// Synthetic test voices with known generator truth: harmonic complexes with
// vibrato or glides, optional broadband and high-band noise.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "csm/random.hpp"
#include "csm/signal.hpp"

namespace csm::synthetic {

struct VoiceSpec {
  int sample_rate = 16000;
  double duration_s = 1.0;
  double f0_hz = 150.0;
  double vibrato_depth_hz = 0.0;
  double vibrato_rate_hz = 5.0;
  // Linear amplitude of harmonics 1..K.
  std::vector<double> harmonic_amplitudes{1.0};
  // White noise over the full band, relative to the harmonic power.
  double snr_db = std::numeric_limits<double>::infinity();
  // Additional noise high-passed at `highband_cutoff_hz` with the given RMS.
  double highband_noise_rms = 0.0;
  double highband_cutoff_hz = 2000.0;
  std::uint64_t seed = 1;
};

inline double vibrato_f0(const VoiceSpec& spec, double t) {
  return spec.f0_hz + spec.vibrato_depth_hz * std::sin(kTwoPi * spec.vibrato_rate_hz * t);
}

// Fundamental phase (radians) at time t for the vibrato contour; exact
// integral of vibrato_f0.
inline double vibrato_phase(const VoiceSpec& spec, double t) {
  double phase = kTwoPi * spec.f0_hz * t;
  if (spec.vibrato_depth_hz != 0.0)
    phase += spec.vibrato_depth_hz / spec.vibrato_rate_hz * (1.0 - std::cos(kTwoPi * spec.vibrato_rate_hz * t));
  return phase;
}

inline std::vector<double> white_noise(std::size_t n, double rms_level, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = rms_level * rng.gaussian();
  return out;
}

inline SpeechBuffer render_voice(const VoiceSpec& spec) {
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  SpeechBuffer out{std::vector<double>(n, 0.0), spec.sample_rate};
  double harmonic_power = 0.0;
  for (std::size_t k = 0; k < spec.harmonic_amplitudes.size(); ++k)
    harmonic_power += 0.5 * spec.harmonic_amplitudes[k] * spec.harmonic_amplitudes[k];
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.sample_rate;
    const double phase = vibrato_phase(spec, t);
    const double f0 = vibrato_f0(spec, t);
    double acc = 0.0;
    for (std::size_t k = 0; k < spec.harmonic_amplitudes.size(); ++k) {
      const double kk = static_cast<double>(k + 1);
      if (kk * f0 >= 0.5 * spec.sample_rate) break;
      acc += spec.harmonic_amplitudes[k] * std::cos(kk * phase);
    }
    out.samples[i] = acc;
  }
  if (std::isfinite(spec.snr_db)) {
    const double noise_rms = std::sqrt(harmonic_power / std::pow(10.0, spec.snr_db / 10.0));
    const auto noise = white_noise(n, noise_rms, derive_seed(spec.seed, 1));
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += noise[i];
  }
  if (spec.highband_noise_rms > 0.0) {
    // Pad so the filter edges do not thin out the noise at the ends.
    const auto h = design_highpass(spec.highband_cutoff_hz, spec.sample_rate);
    const std::size_t pad = h.size();
    auto raw = white_noise(n + 2 * pad, 1.0, derive_seed(spec.seed, 2));
    auto filtered = apply_fir_centered(raw, h);
    std::vector<double> band(filtered.begin() + static_cast<std::ptrdiff_t>(pad),
                             filtered.begin() + static_cast<std::ptrdiff_t>(pad + n));
    const double scale = spec.highband_noise_rms / std::max(rms(band), 1e-300);
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += scale * band[i];
  }
  return out;
}

inline SpeechBuffer tone(double freq_hz, double duration_s, int sample_rate = 16000, double amplitude = 1.0) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  SpeechBuffer out{std::vector<double>(n), sample_rate};
  for (std::size_t i = 0; i < n; ++i)
    out.samples[i] = amplitude * std::sin(kTwoPi * freq_hz * static_cast<double>(i) / sample_rate);
  return out;
}

// Linear glide of a single sinusoid from f_start to f_end.
inline SpeechBuffer chirp(double f_start, double f_end, double duration_s, int sample_rate = 16000,
                          double amplitude = 1.0) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  SpeechBuffer out{std::vector<double>(n), sample_rate};
  const double rate = (f_end - f_start) / duration_s;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    out.samples[i] = amplitude * std::sin(kTwoPi * (f_start * t + 0.5 * rate * t * t));
  }
  return out;
}

inline double chirp_f0(double f_start, double f_end, double duration_s, double t) {
  return f_start + (f_end - f_start) * t / duration_s;
}

}  // namespace csm::synthetic
