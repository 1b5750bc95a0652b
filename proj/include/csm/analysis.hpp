#pragma once
// Analysis half of the vocoder: contF0, maximum voiced frequency, a
// log-amplitude spectral envelope and the time envelope of the noise band.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "csm/contf0.hpp"
#include "csm/error.hpp"
#include "csm/signal.hpp"

namespace csm {

inline constexpr std::size_t kNoiseEnvPoints = 4;  // time-envelope points per frame
inline constexpr double kAmplitudeFloor = 1e-6;    // -120 dB

inline double amp_to_db(double a) { return 20.0 * std::log10(std::max(a, kAmplitudeFloor)); }
inline double db_to_amp(double d) { return std::pow(10.0, d / 20.0); }

struct ParameterTrack {
  F0Track f0;
  std::vector<double> mvf;      // Hz per frame
  Eigen::MatrixXd envelope;     // frames x n_bins, dB; bin j at j * (fs/2) / (n_bins - 1)
  Eigen::MatrixXd noise_env;    // frames x kNoiseEnvPoints linear RMS, or empty
  double frame_hop = 0.005;
  int sample_rate = 16000;

  std::size_t n_frames() const { return f0.size(); }
  std::size_t n_bins() const { return static_cast<std::size_t>(envelope.cols()); }
  bool has_noise_env() const { return noise_env.size() > 0; }
  double bin_hz(std::size_t j) const {
    return static_cast<double>(j) * 0.5 * sample_rate / static_cast<double>(n_bins() - 1);
  }

  void validate() const {
    if (sample_rate <= 0) throw DomainError("ParameterTrack: sample_rate must be positive");
    f0.validate();
    const auto n = static_cast<Eigen::Index>(f0.size());
    if (mvf.size() != f0.size() || envelope.rows() != n)
      throw ShapeError("ParameterTrack: channels differ in frame count");
    if (envelope.cols() < 2) throw ShapeError("ParameterTrack: envelope needs at least 2 bins");
    if (has_noise_env() && (noise_env.rows() != n || noise_env.cols() != static_cast<Eigen::Index>(kNoiseEnvPoints)))
      throw ShapeError("ParameterTrack: noise_env must be frames x 4");
    for (double m : mvf)
      if (!std::isfinite(m) || m <= 0.0 || m > 0.5 * sample_rate + 1e-9)
        throw DomainError("ParameterTrack: mvf must lie in (0, sample_rate/2]");
    if (!envelope.allFinite()) throw DomainError("ParameterTrack: envelope must be finite");
    if (has_noise_env() && (!noise_env.allFinite() || noise_env.minCoeff() < 0.0))
      throw DomainError("ParameterTrack: noise_env must be finite and nonnegative");
  }
};

// ---------------------------------------------------------------------------
// Framing helpers

// Copies x[centre - half .. centre + half] multiplied by w (length 2*half+1),
// zero outside the signal.
inline std::vector<double> windowed_segment(std::span<const double> x, std::ptrdiff_t centre,
                                            std::span<const double> w) {
  const auto half = static_cast<std::ptrdiff_t>(w.size() / 2);
  std::vector<double> seg(w.size(), 0.0);
  for (std::ptrdiff_t m = -half; m <= half; ++m) {
    const std::ptrdiff_t i = centre + m;
    if (i >= 0 && i < static_cast<std::ptrdiff_t>(x.size()))
      seg[static_cast<std::size_t>(m + half)] = x[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(m + half)];
  }
  return seg;
}

// Odd Hann length spanning `periods` pitch periods.
inline std::size_t pitch_window_length(double f0, int sample_rate, double periods) {
  return 2 * static_cast<std::size_t>(std::floor(0.5 * periods * sample_rate / f0)) + 1;
}

// ---------------------------------------------------------------------------
// Envelope core

struct EnvelopeSettings {
  std::size_t lifter = 40;     // cepstral order kept (quefrency in samples)
  int true_envelope_iters = 50;  // 0: plain cepstral smoothing
  double true_envelope_tol_db = 1.0;
  double dynamic_range_db = 80.0;  // spectrum floored this far below its peak
};

// Log-amplitude envelope of one windowed frame, in dB at n_bins frequencies
// uniformly covering [0, fs/2]. Amplitudes are normalised by sum(w) / 2 so a
// sinusoid of amplitude A reads A at its peak.
inline std::vector<double> frame_envelope_db(std::span<const double> windowed, double window_sum,
                                             std::size_t n_bins, const EnvelopeSettings& s) {
  if (n_bins < 2) throw ShapeError("frame_envelope_db: n_bins must be >= 2");
  const std::size_t nfft = std::max<std::size_t>(next_pow2(2 * windowed.size()), next_pow2(2 * (n_bins - 1)));
  const std::size_t lifter = std::min(s.lifter, nfft / 2 - 1);
  const auto spec = real_spectrum(windowed, nfft);
  const double scale = 2.0 / window_sum;

  double peak = 0.0;
  for (const auto& c : spec) peak = std::max(peak, scale * std::abs(c));
  const double floor = std::max(kAmplitudeFloor, peak * db_to_amp(-s.dynamic_range_db));
  std::vector<double> target(nfft);  // natural-log amplitude, full symmetric grid
  for (std::size_t k = 0; k < nfft; ++k) target[k] = std::log(std::max(scale * std::abs(spec[k]), floor));

  std::vector<double> ceps(lifter + 1);
  auto smooth = [&](const std::vector<double>& logamp) {
    std::vector<cdouble> buf(logamp.begin(), logamp.end());
    const auto c = ifft(buf);
    for (std::size_t q = 0; q <= lifter; ++q) ceps[q] = c[q].real();
    std::vector<cdouble> lift(nfft, 0.0);
    lift[0] = ceps[0];
    for (std::size_t q = 1; q <= lifter; ++q) lift[q] = lift[nfft - q] = ceps[q];
    const auto back = fft(std::move(lift));
    std::vector<double> v(nfft);
    for (std::size_t k = 0; k < nfft; ++k) v[k] = back[k].real();
    return v;
  };

  std::vector<double> work = target;
  std::vector<double> v = smooth(work);
  const double tol = s.true_envelope_tol_db * std::log(10.0) / 20.0;
  for (int it = 0; it < s.true_envelope_iters; ++it) {
    double excess = 0.0;
    for (std::size_t k = 0; k < nfft; ++k) {
      excess = std::max(excess, target[k] - v[k]);
      work[k] = std::max(target[k], v[k]);
    }
    if (excess < tol) break;
    v = smooth(work);
  }

  std::vector<double> out(n_bins);
  const double to_db = 20.0 / std::log(10.0);
  for (std::size_t j = 0; j < n_bins; ++j) {
    const double omega = kPi * static_cast<double>(j) / static_cast<double>(n_bins - 1);
    double acc = ceps[0];
    for (std::size_t q = 1; q <= lifter; ++q) acc += 2.0 * ceps[q] * std::cos(omega * static_cast<double>(q));
    out[j] = std::max(acc * to_db, amp_to_db(kAmplitudeFloor));
  }
  return out;
}

struct EnvelopeConfig {
  std::size_t n_bins = 257;
  double window_periods = 3.0;
  int true_envelope_iters = 50;
  double true_envelope_tol_db = 1.0;
  double dynamic_range_db = 80.0;
};

inline Eigen::MatrixXd extract_envelope(const SpeechBuffer& wave, const F0Track& f0, const EnvelopeConfig& cfg = {}) {
  wave.validate();
  f0.validate();
  const std::size_t hop = hop_samples_for(f0.frame_hop, wave.sample_rate);
  if (f0.size() != frame_count(wave.size(), hop)) throw ShapeError("extract_envelope: track and wave not aligned");
  Eigen::MatrixXd env(static_cast<Eigen::Index>(f0.size()), static_cast<Eigen::Index>(cfg.n_bins));
  for (std::size_t i = 0; i < f0.size(); ++i) {
    const auto w = hann(pitch_window_length(f0.values[i], wave.sample_rate, cfg.window_periods));
    double wsum = 0.0;
    for (double v : w) wsum += v;
    const auto seg = windowed_segment(wave.samples, static_cast<std::ptrdiff_t>(i * hop), w);
    EnvelopeSettings s;
    s.lifter = static_cast<std::size_t>(std::floor(0.5 * wave.sample_rate / f0.values[i]));
    s.true_envelope_iters = cfg.true_envelope_iters;
    s.true_envelope_tol_db = cfg.true_envelope_tol_db;
    s.dynamic_range_db = cfg.dynamic_range_db;
    const auto e = frame_envelope_db(seg, wsum, cfg.n_bins, s);
    for (std::size_t j = 0; j < cfg.n_bins; ++j) env(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e[j];
  }
  return env;
}

// Linear interpolation of one envelope row at frequency f (Hz), in dB.
inline double envelope_db_at(std::span<const double> row, double f, int sample_rate) {
  const double idx = f / (0.5 * sample_rate) * static_cast<double>(row.size() - 1);
  return interp_uniform(row, idx);
}

// ---------------------------------------------------------------------------
// Maximum voiced frequency

struct MvfConfig {
  double window_periods = 5.0;
  double contrast_db = 6.0;
  std::size_t allowed_failures = 1;  // consecutive failing harmonics that end the voiced band
  std::size_t median_frames = 5;
};

namespace detail {

// Running median over a centred window of `width` frames, restricted to the
// frames flagged in `use`; frames not flagged are left untouched.
inline std::vector<double> masked_median(const std::vector<double>& v, const std::vector<bool>& use,
                                         std::size_t width) {
  std::vector<double> out = v;
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  const auto n = static_cast<std::ptrdiff_t>(v.size());
  std::vector<double> pool;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!use[static_cast<std::size_t>(i)]) continue;
    pool.clear();
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - half); j <= std::min(n - 1, i + half); ++j)
      if (use[static_cast<std::size_t>(j)]) pool.push_back(v[static_cast<std::size_t>(j)]);
    out[static_cast<std::size_t>(i)] = median(pool);
  }
  return out;
}

}  // namespace detail

// Raw per-frame estimate: harmonics are scanned upward and the band ends
// before the first run of `allowed_failures` harmonics whose peak-to-valley
// contrast stays under the threshold. Returns (k* + 1/2) * f0.
inline double frame_mvf(std::span<const double> x, std::ptrdiff_t centre, double f0, int sample_rate,
                        const MvfConfig& cfg) {
  const auto w = hann(pitch_window_length(f0, sample_rate, cfg.window_periods));
  double wsum = 0.0;
  for (double v : w) wsum += v;
  const auto seg = windowed_segment(x, centre, w);
  const std::size_t nfft = std::max<std::size_t>(2048, next_pow2(4 * seg.size()));
  const auto spec = real_spectrum(seg, nfft);
  std::vector<double> mag_db(nfft / 2 + 1);
  for (std::size_t k = 0; k <= nfft / 2; ++k) mag_db[k] = amp_to_db(2.0 * std::abs(spec[k]) / wsum);
  const double hz_per_bin = static_cast<double>(sample_rate) / static_cast<double>(nfft);
  auto at = [&](double f) { return interp_uniform(mag_db, f / hz_per_bin); };

  const double nyq = 0.5 * sample_rate;
  std::size_t last_pass = 0, failures = 0;
  for (std::size_t k = 1; (static_cast<double>(k) + 0.5) * f0 < nyq; ++k) {
    const double fk = static_cast<double>(k) * f0;
    const auto lo = static_cast<std::size_t>(std::ceil((fk - f0 / 8.0) / hz_per_bin));
    const auto hi = static_cast<std::size_t>(std::floor((fk + f0 / 8.0) / hz_per_bin));
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t b = lo; b <= hi && b < mag_db.size(); ++b) peak = std::max(peak, mag_db[b]);
    const double valley = 0.5 * (at(fk - 0.5 * f0) + at(fk + 0.5 * f0));
    if (peak - valley >= cfg.contrast_db) {
      last_pass = k;
      failures = 0;
    } else if (++failures >= cfg.allowed_failures) {
      break;
    }
  }
  return (static_cast<double>(last_pass) + 0.5) * f0;
}

inline std::vector<double> estimate_mvf(const SpeechBuffer& wave, const F0Track& f0, const MvfConfig& cfg = {}) {
  wave.validate();
  f0.validate();
  const std::size_t hop = hop_samples_for(f0.frame_hop, wave.sample_rate);
  if (f0.size() != frame_count(wave.size(), hop)) throw ShapeError("estimate_mvf: track and wave not aligned");
  std::vector<double> mvf(f0.size(), 0.0);
  for (std::size_t i = 0; i < f0.size(); ++i)
    if (f0.voicing[i])
      mvf[i] = frame_mvf(wave.samples, static_cast<std::ptrdiff_t>(i * hop), f0.values[i], wave.sample_rate, cfg);
  mvf = detail::masked_median(mvf, f0.voicing, cfg.median_frames);
  if (!interpolate_unvoiced(mvf, f0.voicing))
    for (std::size_t i = 0; i < mvf.size(); ++i) mvf[i] = 2.0 * f0.values[i];
  const double nyq = 0.5 * wave.sample_rate;
  for (std::size_t i = 0; i < mvf.size(); ++i) mvf[i] = std::min(std::max(mvf[i], 2.0 * f0.values[i]), nyq);
  return mvf;
}

// ---------------------------------------------------------------------------
// Noise-band time envelope

struct NoiseEnvelopeConfig {
  double smoothing_hz = 50.0;      // bandwidth of the energy smoother
  double transition_fraction = 0.1;  // high-pass half transition as a fraction of the cutoff
};

// High-band residual: each hop-long stretch around frame i is high-passed at
// that frame's MVF. The transition band is narrower than the synthesis
// filter's (and under 0.4 f0 wide on each side) so the last voiced harmonic,
// half a harmonic spacing below the MVF, does not leak into the residual.
inline std::vector<double> highband_residual(const SpeechBuffer& wave, std::span<const double> f0,
                                             std::span<const double> mvf, std::size_t hop,
                                             double transition_fraction) {
  const auto& x = wave.samples;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> r(x.size(), 0.0);
  for (std::size_t i = 0; i < mvf.size(); ++i) {
    const double nyq = 0.5 * wave.sample_rate;
    const double cutoff = std::min(mvf[i], 0.95 * nyq);
    const double half_transition = std::min({transition_fraction * cutoff, 0.4 * f0[i], 0.9 * (nyq - cutoff)});
    const auto h = design_highpass_with_transition(cutoff, wave.sample_rate, half_transition);
    const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
    const auto c = static_cast<std::ptrdiff_t>(i * hop);
    const auto lo = std::max<std::ptrdiff_t>(0, c - static_cast<std::ptrdiff_t>(hop / 2));
    const auto hi = std::min<std::ptrdiff_t>(n, c + static_cast<std::ptrdiff_t>((hop + 1) / 2));
    for (std::ptrdiff_t t = lo; t < hi; ++t) {
      double acc = 0.0;
      for (std::ptrdiff_t m = -half; m <= half; ++m) {
        const std::ptrdiff_t s = t - m;
        if (s >= 0 && s < n) acc += h[static_cast<std::size_t>(m + half)] * x[static_cast<std::size_t>(s)];
      }
      r[static_cast<std::size_t>(t)] = acc;
    }
  }
  return r;
}

// e(t): square root of the smoothed residual power, sampled at the centres
// of the four quarter-hop blocks of every frame.
inline Eigen::MatrixXd noise_time_envelope(const SpeechBuffer& wave, std::span<const double> f0,
                                           std::span<const double> mvf, std::size_t hop,
                                           const NoiseEnvelopeConfig& cfg = {}) {
  if (f0.size() != mvf.size()) throw ShapeError("noise_time_envelope: f0 and mvf differ in length");
  const auto r = highband_residual(wave, f0, mvf, hop, cfg.transition_fraction);
  const auto len = static_cast<std::size_t>(std::lround(wave.sample_rate / cfg.smoothing_hz));
  const auto w = hann(len | 1u);
  const auto half = static_cast<std::ptrdiff_t>(w.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(r.size());
  Eigen::MatrixXd env(static_cast<Eigen::Index>(mvf.size()), static_cast<Eigen::Index>(kNoiseEnvPoints));
  for (std::size_t i = 0; i < mvf.size(); ++i) {
    for (std::size_t j = 0; j < kNoiseEnvPoints; ++j) {
      const double pos = static_cast<double>(i * hop) - 0.5 * static_cast<double>(hop) +
                         (static_cast<double>(j) + 0.5) * static_cast<double>(hop) / kNoiseEnvPoints;
      const auto c = static_cast<std::ptrdiff_t>(std::lround(pos));
      double acc = 0.0, norm = 0.0;
      for (std::ptrdiff_t m = -half; m <= half; ++m) {
        const std::ptrdiff_t t = c + m;
        if (t < 0 || t >= n) continue;
        acc += w[static_cast<std::size_t>(m + half)] * r[static_cast<std::size_t>(t)] * r[static_cast<std::size_t>(t)];
        norm += w[static_cast<std::size_t>(m + half)];
      }
      env(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = norm > 0.0 ? std::sqrt(acc / norm) : 0.0;
    }
  }
  return env;
}

// ---------------------------------------------------------------------------
// Full analysis

struct AnalysisConfig {
  double frame_hop_s = 0.005;
  BaselineConfig baseline{};
  RefineConfig refine{};
  bool refine_f0 = true;
  EnvelopeConfig envelope{};
  MvfConfig mvf{};
  NoiseEnvelopeConfig noise{};
  bool noise_envelope = true;
};

inline ParameterTrack analyze(const SpeechBuffer& wave, const AnalysisConfig& cfg = {}) {
  wave.validate();
  if (wave.duration() < kMinAnalysisSeconds - 1e-12) throw PreconditionError("analyze: input shorter than 100 ms");
  BaselineConfig bcfg = cfg.baseline;
  bcfg.frame_hop_s = cfg.frame_hop_s;
  ParameterTrack out;
  out.sample_rate = wave.sample_rate;
  out.f0 = estimate_baseline_contf0(wave, bcfg);
  out.frame_hop = out.f0.frame_hop;
  const bool any_voiced = std::find(out.f0.voicing.begin(), out.f0.voicing.end(), true) != out.f0.voicing.end();
  if (cfg.refine_f0 && any_voiced) out.f0 = refine_contf0(wave, out.f0, cfg.refine).track;
  out.mvf = estimate_mvf(wave, out.f0, cfg.mvf);
  out.envelope = extract_envelope(wave, out.f0, cfg.envelope);
  if (cfg.noise_envelope)
    out.noise_env = noise_time_envelope(wave, out.f0.values, out.mvf, hop_samples_for(out.frame_hop, wave.sample_rate), cfg.noise);
  out.validate();
  return out;
}

}  // namespace csm
