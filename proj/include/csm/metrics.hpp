#pragma once
// Objective distances between a natural and a synthesized utterance (LLR,
// frequency-weighted segmental SNR, log-spectral distortion) and the
// periodogram of an F0 track.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csm/analysis.hpp"
#include "csm/contf0.hpp"
#include "csm/error.hpp"
#include "csm/signal.hpp"

namespace csm {

struct MetricConfig {
  double frame_s = 0.025;
  double hop_s = 0.010;
  std::size_t lpc_order = 10;
  double llr_cap = 2.0;
  double snr_floor_db = -10.0;
  double snr_ceiling_db = 35.0;
  std::size_t lsd_bins = 257;
  std::size_t lsd_lifter = 24;
  int lsd_true_envelope_iters = 50;
};

// ---------------------------------------------------------------------------
// LPC

struct LpcModel {
  std::vector<double> a;  // a[0] = 1, prediction polynomial
  std::vector<double> r;  // autocorrelation lags 0..order
  double error = 0.0;     // final prediction error power
  bool degenerate = false;
};

// Autocorrelation method with Levinson-Durbin. An all-zero frame (or one
// whose recursion loses positivity) comes back flagged with a = (1, 0, ...).
inline LpcModel lpc_analyze(std::span<const double> frame, std::size_t order) {
  if (frame.size() <= order) throw PreconditionError("lpc_analyze: frame must be longer than the order");
  LpcModel m;
  m.r.assign(order + 1, 0.0);
  for (std::size_t lag = 0; lag <= order; ++lag)
    for (std::size_t t = lag; t < frame.size(); ++t) m.r[lag] += frame[t] * frame[t - lag];
  m.a.assign(order + 1, 0.0);
  m.a[0] = 1.0;
  m.error = m.r[0];
  if (!(m.r[0] > 1e-20)) {
    m.degenerate = true;
    return m;
  }
  std::vector<double> prev(order + 1);
  for (std::size_t i = 1; i <= order; ++i) {
    double acc = m.r[i];
    for (std::size_t j = 1; j < i; ++j) acc += m.a[j] * m.r[i - j];
    const double k = -acc / m.error;
    prev = m.a;
    for (std::size_t j = 1; j < i; ++j) m.a[j] = prev[j] + k * prev[i - j];
    m.a[i] = k;
    m.error *= 1.0 - k * k;
    if (!(m.error > 1e-20 * m.r[0])) {
      m.degenerate = true;
      std::fill(m.a.begin() + 1, m.a.end(), 0.0);
      m.error = m.r[0];
      return m;
    }
  }
  return m;
}

// a^T R a with R the symmetric Toeplitz matrix of r.
inline double toeplitz_quadratic(std::span<const double> a, std::span<const double> r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) acc += a[i] * a[j] * r[i > j ? i - j : j - i];
  return acc;
}

// ---------------------------------------------------------------------------
// Framing shared by all metrics

namespace detail {

struct AlignedPair {
  std::span<const double> x, y;
  int sample_rate;
};

inline AlignedPair align(const SpeechBuffer& natural, const SpeechBuffer& synth) {
  if (natural.sample_rate != synth.sample_rate) throw DomainError("metrics: sample rates differ");
  const std::size_t n = std::min(natural.size(), synth.size());
  if (n == 0) throw PreconditionError("metrics: signals do not overlap");
  return {std::span<const double>(natural.samples).first(n), std::span<const double>(synth.samples).first(n),
          natural.sample_rate};
}

struct Frames {
  std::size_t length = 0, hop = 0, count = 0;
};

inline Frames frames_for(std::size_t n, int fs, const MetricConfig& cfg) {
  Frames f;
  f.length = std::min(n, static_cast<std::size_t>(std::lround(cfg.frame_s * fs)));
  f.hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.hop_s * fs)));
  f.count = (n - f.length) / f.hop + 1;
  return f;
}

inline std::vector<double> windowed(std::span<const double> x, std::size_t start, const std::vector<double>& w) {
  std::vector<double> out(w.size());
  for (std::size_t t = 0; t < w.size(); ++t) out[t] = w[t] * x[start + t];
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LLR

struct FrameScores {
  std::vector<double> values;  // one per used frame
  double mean = 0.0;
};

// Frames where the natural signal is silent are skipped. A silent synthetic
// frame against a live natural one scores the cap.
inline FrameScores llr_frames(const SpeechBuffer& natural, const SpeechBuffer& synth, const MetricConfig& cfg = {}) {
  const auto p = detail::align(natural, synth);
  const auto fr = detail::frames_for(p.x.size(), p.sample_rate, cfg);
  if (fr.length <= cfg.lpc_order) throw PreconditionError("llr: signals shorter than the LPC order");
  const auto w = hann(fr.length);
  FrameScores s;
  for (std::size_t i = 0; i < fr.count; ++i) {
    const auto lx = lpc_analyze(detail::windowed(p.x, i * fr.hop, w), cfg.lpc_order);
    if (lx.degenerate) continue;
    const auto ly = lpc_analyze(detail::windowed(p.y, i * fr.hop, w), cfg.lpc_order);
    double v = cfg.llr_cap;
    if (!ly.degenerate) {
      const double num = toeplitz_quadratic(ly.a, lx.r);
      const double den = toeplitz_quadratic(lx.a, lx.r);
      v = std::min(cfg.llr_cap, std::max(0.0, std::log(num / den)));
    }
    s.values.push_back(v);
  }
  for (double v : s.values) s.mean += v;
  if (!s.values.empty()) s.mean /= static_cast<double>(s.values.size());
  return s;
}

inline double llr(const SpeechBuffer& natural, const SpeechBuffer& synth, const MetricConfig& cfg = {}) {
  return llr_frames(natural, synth, cfg).mean;
}

// ---------------------------------------------------------------------------
// fwSNRseg

struct CriticalBand {
  double centre_hz, bandwidth_hz, weight;
};

// 25 critical bands (centre, bandwidth) with articulation-index band
// importance weights.
inline constexpr std::array<CriticalBand, 25> kCriticalBands{{
    {50.0, 70.0, 0.003},       {120.0, 70.0, 0.003},      {190.0, 70.0, 0.003},      {260.0, 70.0, 0.007},
    {330.0, 70.0, 0.010},      {400.0, 70.0, 0.016},      {470.0, 70.0, 0.016},      {540.0, 77.3724, 0.017},
    {617.372, 86.0056, 0.017}, {703.378, 95.3398, 0.022}, {798.717, 105.411, 0.027}, {904.128, 116.256, 0.028},
    {1020.38, 127.914, 0.030}, {1148.30, 140.423, 0.032}, {1288.72, 153.823, 0.034}, {1442.54, 168.154, 0.035},
    {1610.70, 183.457, 0.037}, {1794.16, 199.776, 0.036}, {1993.93, 217.153, 0.036}, {2211.08, 235.631, 0.033},
    {2446.71, 255.255, 0.030}, {2701.97, 276.072, 0.029}, {2978.04, 298.126, 0.027}, {3276.17, 321.465, 0.026},
    {3597.63, 346.136, 0.026},
}};

// Gaussian-shaped band filters on the rfft grid, truncated 30 dB down and
// scaled so wider bands are not favoured.
inline Eigen::MatrixXd critical_band_filters(std::size_t nfft, int sample_rate) {
  const std::size_t half = nfft / 2;
  const double nyq = 0.5 * sample_rate;
  const double min_factor = std::exp(-30.0 / (2.0 * 2.303));
  const double bw_min = kCriticalBands[0].bandwidth_hz;
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kCriticalBands.size()), static_cast<Eigen::Index>(half));
  for (std::size_t b = 0; b < kCriticalBands.size(); ++b) {
    const double centre = std::floor(kCriticalBands[b].centre_hz / nyq * static_cast<double>(half));
    const double bw = kCriticalBands[b].bandwidth_hz / nyq * static_cast<double>(half);
    const double norm = std::log(bw_min) - std::log(kCriticalBands[b].bandwidth_hz);
    for (std::size_t j = 0; j < half; ++j) {
      const double d = (static_cast<double>(j) - centre) / bw;
      const double v = std::exp(-11.0 * d * d + norm);
      if (v > min_factor) f(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return f;
}

// Per band, SNR = 10 log10(X^2 / (X - Y)^2) on critical-band magnitudes;
// frames combine bands by weighted mean and are clamped. Frames where the
// natural signal is silent are skipped.
inline FrameScores fwsnrseg_frames(const SpeechBuffer& natural, const SpeechBuffer& synth,
                                   const MetricConfig& cfg = {}) {
  const auto p = detail::align(natural, synth);
  const auto fr = detail::frames_for(p.x.size(), p.sample_rate, cfg);
  const auto w = hann(fr.length);
  const std::size_t nfft = next_pow2(2 * fr.length);
  const auto filters = critical_band_filters(nfft, p.sample_rate);
  const auto nb = filters.rows();
  double wsum = 0.0;
  for (const auto& b : kCriticalBands) wsum += b.weight;

  auto band_magnitudes = [&](const std::vector<double>& seg) {
    const auto spec = real_spectrum(seg, nfft);
    Eigen::VectorXd mag(filters.cols());
    for (Eigen::Index j = 0; j < mag.size(); ++j) mag(j) = std::abs(spec[static_cast<std::size_t>(j)]);
    return Eigen::VectorXd(filters * mag);
  };

  FrameScores s;
  for (std::size_t i = 0; i < fr.count; ++i) {
    const auto sx = detail::windowed(p.x, i * fr.hop, w);
    double ex = 0.0;
    for (double v : sx) ex += v * v;
    if (!(ex > 1e-20)) continue;
    const auto bx = band_magnitudes(sx);
    const auto by = band_magnitudes(detail::windowed(p.y, i * fr.hop, w));
    double acc = 0.0;
    for (Eigen::Index b = 0; b < nb; ++b) {
      const double err = bx(b) - by(b);
      double snr;
      if (err == 0.0) snr = cfg.snr_ceiling_db;
      else if (bx(b) == 0.0) snr = cfg.snr_floor_db;
      else snr = 10.0 * std::log10(bx(b) * bx(b) / (err * err));
      acc += kCriticalBands[static_cast<std::size_t>(b)].weight * std::clamp(snr, cfg.snr_floor_db, cfg.snr_ceiling_db);
    }
    s.values.push_back(std::clamp(acc / wsum, cfg.snr_floor_db, cfg.snr_ceiling_db));
  }
  for (double v : s.values) s.mean += v;
  if (!s.values.empty()) s.mean /= static_cast<double>(s.values.size());
  return s;
}

inline double fwsnrseg(const SpeechBuffer& natural, const SpeechBuffer& synth, const MetricConfig& cfg = {}) {
  return fwsnrseg_frames(natural, synth, cfg).mean;
}

// ---------------------------------------------------------------------------
// LSD

// Log envelope of one windowed metric frame (dB): the analysis module's
// true-envelope estimator at a fixed lifter, so the distance does not
// depend on either signal's pitch and stays symmetric.
inline std::vector<double> lsd_envelope(std::span<const double> seg, double window_sum, const MetricConfig& cfg) {
  EnvelopeSettings s;
  s.lifter = cfg.lsd_lifter;
  s.true_envelope_iters = cfg.lsd_true_envelope_iters;
  return frame_envelope_db(seg, window_sum, cfg.lsd_bins, s);
}

// Frames where both signals are silent are skipped.
inline FrameScores lsd_frames(const SpeechBuffer& natural, const SpeechBuffer& synth, const MetricConfig& cfg = {}) {
  const auto p = detail::align(natural, synth);
  const auto fr = detail::frames_for(p.x.size(), p.sample_rate, cfg);
  const auto w = hann(fr.length);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  FrameScores s;
  for (std::size_t i = 0; i < fr.count; ++i) {
    const auto sx = detail::windowed(p.x, i * fr.hop, w);
    const auto sy = detail::windowed(p.y, i * fr.hop, w);
    double ex = 0.0, ey = 0.0;
    for (std::size_t t = 0; t < sx.size(); ++t) {
      ex += sx[t] * sx[t];
      ey += sy[t] * sy[t];
    }
    if (!(ex > 1e-20) && !(ey > 1e-20)) continue;
    const auto lx = lsd_envelope(sx, wsum, cfg);
    const auto ly = lsd_envelope(sy, wsum, cfg);
    double acc = 0.0;
    for (std::size_t j = 0; j < lx.size(); ++j) acc += (lx[j] - ly[j]) * (lx[j] - ly[j]);
    s.values.push_back(std::sqrt(acc / static_cast<double>(lx.size())));
  }
  for (double v : s.values) s.mean += v;
  if (!s.values.empty()) s.mean /= static_cast<double>(s.values.size());
  return s;
}

inline double lsd(const SpeechBuffer& natural, const SpeechBuffer& synth, const MetricConfig& cfg = {}) {
  return lsd_frames(natural, synth, cfg).mean;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
  double llr = 0.0;
  double fwsnrseg = 0.0;
  double lsd = 0.0;
  std::size_t n_frames = 0;
  std::vector<double> llr_per_frame, fwsnrseg_per_frame, lsd_per_frame;
};

inline MetricReport evaluate(const SpeechBuffer& natural, const SpeechBuffer& synth, const MetricConfig& cfg = {},
                             bool keep_per_frame = false) {
  auto a = llr_frames(natural, synth, cfg);
  auto b = fwsnrseg_frames(natural, synth, cfg);
  auto c = lsd_frames(natural, synth, cfg);
  MetricReport r;
  r.llr = a.mean;
  r.fwsnrseg = b.mean;
  r.lsd = c.mean;
  const auto p = detail::align(natural, synth);
  r.n_frames = detail::frames_for(p.x.size(), p.sample_rate, cfg).count;
  if (keep_per_frame) {
    r.llr_per_frame = std::move(a.values);
    r.fwsnrseg_per_frame = std::move(b.values);
    r.lsd_per_frame = std::move(c.values);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Track periodogram

struct TrackPsd {
  std::vector<double> freq_hz;
  std::vector<double> power;  // one-sided, Hz^2 per Hz
};

inline TrackPsd track_psd(const F0Track& track) {
  track.validate();
  const std::size_t n = track.size();
  if (n < 32) throw PreconditionError("track_psd: need at least 32 frames");
  const double rate = 1.0 / track.frame_hop;
  double mean = 0.0;
  for (double v : track.values) mean += v;
  mean /= static_cast<double>(n);
  const auto w = hann(n);
  double w2 = 0.0;
  std::vector<cdouble> buf(n);
  for (std::size_t i = 0; i < n; ++i) {
    buf[i] = w[i] * (track.values[i] - mean);
    w2 += w[i] * w[i];
  }
  const auto spec = fft(std::move(buf));
  TrackPsd out;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    out.freq_hz.push_back(static_cast<double>(k) * rate / static_cast<double>(n));
    out.power.push_back((edge ? 1.0 : 2.0) * std::norm(spec[k]) / (rate * w2));
  }
  return out;
}

}  // namespace csm
