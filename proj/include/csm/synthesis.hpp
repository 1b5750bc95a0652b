#pragma once
// Harmonic-plus-noise resynthesis of a ParameterTrack: harmonics below the
// maximum voiced frequency, envelope-shaped high-passed noise above it,
// assembled frame by frame with overlap-add.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "csm/analysis.hpp"
#include "csm/error.hpp"
#include "csm/random.hpp"
#include "csm/signal.hpp"

namespace csm {

// round() half away from zero, clamped so K never goes negative.
inline std::size_t harmonic_count(double f0, double mvf, bool voiced) {
  if (!(f0 > 0.0) || !std::isfinite(f0)) throw DomainError("harmonic_count: f0 must be positive");
  if (!(mvf > 0.0) || !std::isfinite(mvf)) throw DomainError("harmonic_count: mvf must be positive");
  if (!voiced) return 0;
  const double k = std::round(mvf / f0) - 1.0;
  return k > 0.0 ? static_cast<std::size_t>(k) : 0;
}

struct HarmonicFrame {
  std::size_t k_max = 0;
  std::vector<double> amplitudes;  // linear, harmonics 1..k_max
  std::vector<double> phases;      // radians at the first sample of the frame
  double f0 = 0.0;

  void validate() const {
    if (amplitudes.size() != k_max || phases.size() != k_max)
      throw ShapeError("HarmonicFrame: amplitudes and phases need k_max entries");
    if (k_max > 0 && !(f0 > 0.0)) throw DomainError("HarmonicFrame: f0 must be positive");
    for (double a : amplitudes)
      if (!(a >= 0.0) || !std::isfinite(a)) throw DomainError("HarmonicFrame: amplitudes must be finite and >= 0");
    for (double p : phases)
      if (!std::isfinite(p)) throw DomainError("HarmonicFrame: phases must be finite");
  }
};

inline double wrap_phase(double p) {
  p = std::remainder(p, kTwoPi);
  return p <= -kPi ? p + kTwoPi : p;
}

// Sum of harmonics, multiplied by the periodic Hann synthesis window.
inline std::vector<double> synth_voiced_frame(const HarmonicFrame& frame, std::size_t length, int sample_rate) {
  frame.validate();
  if (sample_rate <= 0) throw DomainError("synth_voiced_frame: sample_rate must be positive");
  if (frame.k_max > 0 && !(static_cast<double>(frame.k_max) * frame.f0 < 0.5 * sample_rate))
    throw DomainError("synth_voiced_frame: highest harmonic at or above Nyquist");
  std::vector<double> out(length, 0.0);
  if (frame.k_max == 0) return out;
  const auto w = periodic_hann(length);
  for (std::size_t k = 0; k < frame.k_max; ++k) {
    if (frame.amplitudes[k] == 0.0) continue;
    const double omega = kTwoPi * static_cast<double>(k + 1) * frame.f0 / sample_rate;
    for (std::size_t t = 0; t < length; ++t)
      out[t] += frame.amplitudes[k] * std::cos(omega * static_cast<double>(t) + frame.phases[k]);
  }
  for (std::size_t t = 0; t < length; ++t) out[t] *= w[t];
  return out;
}

// Minimum-phase response (radians) of a dB envelope row at its own bins,
// by folding the real cepstrum of the log amplitude.
inline std::vector<double> minimum_phase(std::span<const double> envelope_db) {
  const std::size_t n_bins = envelope_db.size();
  if (n_bins < 2) throw ShapeError("minimum_phase: need at least 2 bins");
  const std::size_t nfft = 2 * (n_bins - 1);
  std::vector<cdouble> logamp(nfft);
  const double to_ln = std::log(10.0) / 20.0;
  for (std::size_t j = 0; j < n_bins; ++j) logamp[j] = envelope_db[j] * to_ln;
  for (std::size_t j = n_bins; j < nfft; ++j) logamp[j] = logamp[nfft - j];
  auto c = ifft(logamp);
  std::vector<cdouble> folded(nfft, 0.0);
  folded[0] = c[0].real();
  for (std::size_t q = 1; q < nfft / 2; ++q) folded[q] = 2.0 * c[q].real();
  folded[nfft / 2] = c[nfft / 2].real();
  const auto spec = fft(std::move(folded));
  std::vector<double> phase(n_bins);
  for (std::size_t j = 0; j < n_bins; ++j) phase[j] = spec[j].imag();
  return phase;
}

struct NoiseShape {
  std::vector<double> gain;  // |H_hp| * envelope amplitude on an rfft grid of size nfft
  std::size_t nfft = 0;
  double expected_rms = 0.0;  // RMS of unit white noise after shaping
};

// Noise synthesis uses the high-pass's default transition unless it would
// cross Nyquist.
inline std::vector<double> noise_highpass(double mvf, int sample_rate) {
  const double nyq = 0.5 * sample_rate;
  const double half = std::min(FirDesign{}.transition_fraction * mvf, 0.9 * (nyq - mvf));
  return design_highpass_with_transition(mvf, sample_rate, half);
}

inline NoiseShape noise_shape(std::span<const double> envelope_db, double mvf, std::size_t length,
                              int sample_rate) {
  if (!(mvf > 0.0) || !(mvf < 0.5 * sample_rate))
    throw DomainError("synth_noise_frame: mvf must lie in (0, sample_rate/2)");
  NoiseShape s;
  s.nfft = std::max(next_pow2(2 * length), next_pow2(2 * (envelope_db.size() - 1)));
  const auto h = noise_highpass(mvf, sample_rate);
  const auto half = static_cast<double>(h.size() / 2);
  s.gain.resize(s.nfft / 2 + 1);
  double power = 0.0;
  for (std::size_t m = 0; m <= s.nfft / 2; ++m) {
    const double omega = kTwoPi * static_cast<double>(m) / static_cast<double>(s.nfft);
    // Zero-phase response of the symmetric kernel: a cosine series.
    double hr = h[h.size() / 2];
    for (std::size_t n = 0; n < h.size() / 2; ++n) hr += 2.0 * h[n] * std::cos(omega * (half - static_cast<double>(n)));
    const double f = static_cast<double>(m) * sample_rate / static_cast<double>(s.nfft);
    const double g = std::abs(hr) * db_to_amp(envelope_db_at(envelope_db, f, sample_rate));
    s.gain[m] = g;
    const double mult = (m == 0 || m == s.nfft / 2) ? 1.0 : 2.0;
    power += mult * g * g;
  }
  s.expected_rms = std::sqrt(power / static_cast<double>(s.nfft));
  return s;
}

// White Gaussian noise, high-passed at mvf and coloured by the envelope
// (applied as a zero-phase gain on a circular block, so the result is
// stationary over the frame), normalised to unit expected RMS, then scaled
// by the time envelope and the square-root Hann window. An empty
// `time_env` means unit level.
inline std::vector<double> synth_noise_frame(std::span<const double> envelope_db, double mvf, std::size_t length,
                                             int sample_rate, std::uint64_t seed,
                                             std::span<const double> time_env = {}) {
  if (!time_env.empty() && time_env.size() != length)
    throw ShapeError("synth_noise_frame: time envelope must match the frame length");
  const auto shape = noise_shape(envelope_db, mvf, length, sample_rate);
  std::vector<double> out(length, 0.0);
  if (shape.expected_rms <= 0.0) return out;

  Rng rng(seed);
  std::vector<cdouble> block(shape.nfft);
  for (auto& v : block) v = rng.gaussian();
  block = fft(std::move(block));
  for (std::size_t m = 0; m < shape.nfft; ++m) block[m] *= shape.gain[m <= shape.nfft / 2 ? m : shape.nfft - m];
  const auto y = ifft(block);

  const auto w = sqrt_periodic_hann(length);
  const std::size_t offset = (shape.nfft - length) / 2;
  for (std::size_t t = 0; t < length; ++t) {
    const double e = time_env.empty() ? 1.0 : time_env[t];
    out[t] = w[t] * e * y[offset + t].real() / shape.expected_rms;
  }
  return out;
}

// Noise level implied by the envelope alone, for tracks without a time
// envelope. A pitch-adaptive Hann window of length L reads white noise of
// variance s^2 as amplitude^2 = 6 s^2 / L. The true-envelope fit rides the
// periodogram peaks; kTrueEnvelopeNoiseBiasDb is the measured excess on
// white noise (flat within 0.1 dB for f0 between 80 and 300 Hz).
inline constexpr double kTrueEnvelopeNoiseBiasDb = 2.3;

inline double flat_noise_rms(std::span<const double> envelope_db, double mvf, double f0, int sample_rate,
                             double window_periods = EnvelopeConfig{}.window_periods) {
  const auto shape = noise_shape(envelope_db, mvf, 64, sample_rate);
  const double L = static_cast<double>(pitch_window_length(f0, sample_rate, window_periods));
  return shape.expected_rms * std::sqrt(L / 6.0) * db_to_amp(-kTrueEnvelopeNoiseBiasDb);
}

struct SynthesisConfig {
  std::uint64_t seed = 42;
  bool voiced = true;
  bool noise = true;
};

struct SynthesisComponents {
  SpeechBuffer voiced;
  SpeechBuffer noise;
};

namespace detail {

// e(t) at every output sample: the analysis envelope points placed at their
// quarter-hop positions and joined linearly.
inline std::vector<double> time_envelope_per_sample(const ParameterTrack& track, std::size_t hop, std::size_t n) {
  std::vector<double> pos, val;
  for (Eigen::Index i = 0; i < track.noise_env.rows(); ++i)
    for (Eigen::Index j = 0; j < track.noise_env.cols(); ++j) {
      pos.push_back(static_cast<double>(i) * static_cast<double>(hop) - 0.5 * static_cast<double>(hop) +
                    (static_cast<double>(j) + 0.5) * static_cast<double>(hop) / kNoiseEnvPoints);
      val.push_back(track.noise_env(i, j));
    }
  std::vector<double> e(n);
  std::size_t k = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = static_cast<double>(t);
    while (k + 1 < pos.size() && pos[k + 1] <= x) ++k;
    if (x <= pos.front()) e[t] = val.front();
    else if (k + 1 >= pos.size()) e[t] = val.back();
    else e[t] = val[k] + (val[k + 1] - val[k]) * (x - pos[k]) / (pos[k + 1] - pos[k]);
  }
  return e;
}

}  // namespace detail

// Frame i is centred at i*hop and spans [i*hop - hop, i*hop + hop). The
// output covers n_frames * hop samples starting at the first frame centre.
inline SynthesisComponents synthesize_components(const ParameterTrack& track, const SynthesisConfig& cfg = {}) {
  track.validate();
  const int fs = track.sample_rate;
  const std::size_t n = track.n_frames();
  SynthesisComponents out{{{}, fs}, {{}, fs}};
  if (n == 0) return out;
  const std::size_t hop = hop_samples_for(track.frame_hop, fs);
  const std::size_t len = 2 * hop;
  const std::size_t n_out = n * hop;

  std::vector<double> e_all;
  if (track.has_noise_env()) e_all = detail::time_envelope_per_sample(track, hop, n_out + hop);

  std::vector<std::vector<double>> vframes(n), nframes(n);
  double theta = 0.0;  // fundamental phase at the current frame centre
  for (std::size_t i = 0; i < n; ++i) {
    const double f0 = track.f0.values[i];
    if (i > 0) theta = wrap_phase(theta + kPi * (track.f0.values[i - 1] + f0) * static_cast<double>(hop) / fs);
    const Eigen::VectorXd row_v = track.envelope.row(static_cast<Eigen::Index>(i));
    const std::span<const double> row(row_v.data(), static_cast<std::size_t>(row_v.size()));

    HarmonicFrame hf;
    hf.f0 = f0;
    hf.k_max = harmonic_count(f0, track.mvf[i], track.f0.voicing[i]);
    while (hf.k_max > 0 && static_cast<double>(hf.k_max) * f0 >= 0.5 * fs) --hf.k_max;
    if (cfg.voiced && hf.k_max > 0) {
      const auto mp = minimum_phase(row);
      for (std::size_t k = 1; k <= hf.k_max; ++k) {
        const double fk = static_cast<double>(k) * f0;
        const double idx = fk / (0.5 * fs) * static_cast<double>(row.size() - 1);
        hf.amplitudes.push_back(db_to_amp(envelope_db_at(row, fk, fs)));
        // Phase referenced back from the frame centre to its first sample.
        hf.phases.push_back(wrap_phase(static_cast<double>(k) * (theta - kTwoPi * f0 * static_cast<double>(hop) / fs) +
                                       interp_uniform(mp, idx)));
      }
    } else {
      hf.k_max = 0;
    }
    vframes[i] = synth_voiced_frame(hf, len, fs);

    const double mvf = track.mvf[i];
    if (cfg.noise && mvf < 0.95 * 0.5 * fs) {
      std::vector<double> e(len);
      if (track.has_noise_env()) {
        for (std::size_t t = 0; t < len; ++t) {
          const auto g = static_cast<std::ptrdiff_t>(i * hop + t) - static_cast<std::ptrdiff_t>(hop);
          e[t] = e_all[static_cast<std::size_t>(std::max<std::ptrdiff_t>(g, 0))];
        }
      } else {
        std::fill(e.begin(), e.end(), flat_noise_rms(row, mvf, f0, fs));
      }
      nframes[i] = synth_noise_frame(row, mvf, len, fs, derive_seed(cfg.seed, i), e);
    } else {
      nframes[i].assign(len, 0.0);
    }
  }

  const FrameGrid grid{len, hop, n};
  auto trim = [&](const SpeechBuffer& full) {
    return SpeechBuffer{std::vector<double>(full.samples.begin() + static_cast<std::ptrdiff_t>(hop),
                                            full.samples.begin() + static_cast<std::ptrdiff_t>(hop + n_out)),
                        fs};
  };
  out.voiced = trim(overlap_add(vframes, grid, fs));
  out.noise = trim(overlap_add(nframes, grid, fs));
  return out;
}

inline SpeechBuffer synthesize(const ParameterTrack& track, std::uint64_t seed = 42) {
  auto parts = synthesize_components(track, SynthesisConfig{seed, true, true});
  for (std::size_t t = 0; t < parts.voiced.size(); ++t) parts.voiced.samples[t] += parts.noise.samples[t];
  return parts.voiced;
}

}  // namespace csm
