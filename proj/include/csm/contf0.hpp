#pragma once
// Continuous F0: a gap-free baseline tracker and the iterative time-warping
// refinement driven by instantaneous frequency of harmonic bands.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "csm/error.hpp"
#include "csm/signal.hpp"

namespace csm {

inline constexpr double kF0Min = 40.0;
inline constexpr double kF0Max = 600.0;

struct F0Track {
  std::vector<double> values;  // Hz, one per frame, frame i centred at i * frame_hop
  double frame_hop = 0.005;
  std::vector<bool> voicing;

  std::size_t size() const { return values.size(); }
  double time(std::size_t i) const { return static_cast<double>(i) * frame_hop; }

  void validate() const {
    if (!(frame_hop > 0.0)) throw DomainError("F0Track: frame_hop must be positive");
    if (voicing.size() != values.size()) throw ShapeError("F0Track: voicing and values differ in length");
    for (double v : values)
      if (!std::isfinite(v) || v <= 0.0) throw DomainError("F0Track: values must be finite and positive");
  }
};

// Fills every non-voiced frame by linear interpolation between the flanking
// voiced frames, holding the end values outward. Returns false (and leaves
// `values` untouched) when nothing is voiced.
inline bool interpolate_unvoiced(std::vector<double>& values, const std::vector<bool>& voiced) {
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (voiced[i]) anchors.push_back(i);
  if (anchors.empty()) return false;
  for (std::size_t i = 0; i < anchors.front(); ++i) values[i] = values[anchors.front()];
  for (std::size_t i = anchors.back() + 1; i < values.size(); ++i) values[i] = values[anchors.back()];
  for (std::size_t a = 0; a + 1 < anchors.size(); ++a) {
    const std::size_t lo = anchors[a], hi = anchors[a + 1];
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const double frac = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
      values[i] = values[lo] + frac * (values[hi] - values[lo]);
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Baseline tracker

struct BaselineConfig {
  double frame_hop_s = 0.005;
  double window_s = 0.025;
  double f0_min = kF0Min;
  double f0_max = kF0Max;
  double voicing_threshold = 0.5;  // normalised correlation at the chosen lag
  double silence_rms = 1e-4;       // absolute frame RMS gate
  double default_f0 = 100.0;       // used when no frame is voiced
};

inline constexpr double kMinAnalysisSeconds = 0.1;

namespace detail {

// Normalised cross-correlation between a window and its lag-L shift, the
// pair centred on `centre`. Near the signal ends the pair slides inward so
// every lag is scored on a full-length window; short overlaps make the
// correlation of noise unreliable.
inline double ncc_at(std::span<const double> x, std::span<const double> energy_prefix, std::ptrdiff_t centre,
                     std::ptrdiff_t win, std::ptrdiff_t lag) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (win + lag > n) return 0.0;
  const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(centre - win / 2 - lag / 2, 0, n - win - lag);
  const std::ptrdiff_t hi = lo + win;
  double dot = 0.0;
  for (std::ptrdiff_t i = lo; i < hi; ++i) dot += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i + lag)];
  auto energy = [&](std::ptrdiff_t from, std::ptrdiff_t to) {
    return energy_prefix[static_cast<std::size_t>(to)] - energy_prefix[static_cast<std::size_t>(from)];
  };
  const double ea = energy(lo, hi), eb = energy(lo + lag, hi + lag);
  if (ea <= 1e-20 || eb <= 1e-20) return 0.0;
  return dot / std::sqrt(ea * eb);
}

}  // namespace detail

inline F0Track estimate_baseline_contf0(const SpeechBuffer& wave, const BaselineConfig& cfg = {}) {
  wave.validate();
  if (wave.duration() < kMinAnalysisSeconds - 1e-12)
    throw PreconditionError("estimate_baseline_contf0: input shorter than 100 ms");
  if (!(cfg.f0_min > 0.0) || !(cfg.f0_max > cfg.f0_min)) throw DomainError("baseline: bad F0 search range");

  const double fs = wave.sample_rate;
  const std::size_t hop = hop_samples_for(cfg.frame_hop_s, wave.sample_rate);
  const std::size_t n_frames = frame_count(wave.size(), hop);
  const auto win = static_cast<std::ptrdiff_t>(std::lround(cfg.window_s * fs));
  const auto lag_min = std::max<std::ptrdiff_t>(2, static_cast<std::ptrdiff_t>(std::floor(fs / cfg.f0_max)));
  const auto lag_max = static_cast<std::ptrdiff_t>(std::ceil(fs / cfg.f0_min));

  const auto& x = wave.samples;
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];

  F0Track track;
  track.frame_hop = static_cast<double>(hop) / fs;
  track.values.assign(n_frames, cfg.default_f0);
  track.voicing.assign(n_frames, false);

  std::vector<double> r(static_cast<std::size_t>(lag_max + 2), 0.0);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const auto centre = static_cast<std::ptrdiff_t>(f * hop);
    const auto lo = std::clamp<std::ptrdiff_t>(centre - win / 2, 0, static_cast<std::ptrdiff_t>(x.size()));
    const auto hi = std::clamp<std::ptrdiff_t>(centre + win / 2, 0, static_cast<std::ptrdiff_t>(x.size()));
    if (hi - lo < win / 2) continue;
    const double frame_rms = std::sqrt((prefix[static_cast<std::size_t>(hi)] - prefix[static_cast<std::size_t>(lo)]) /
                                       static_cast<double>(hi - lo));
    if (frame_rms < cfg.silence_rms) continue;

    double best = -1.0;
    for (std::ptrdiff_t lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      r[static_cast<std::size_t>(lag)] = detail::ncc_at(x, prefix, centre, win, lag);
      if (lag >= lag_min && lag <= lag_max) best = std::max(best, r[static_cast<std::size_t>(lag)]);
    }
    if (best < cfg.voicing_threshold) continue;
    // Smallest-lag local maximum close to the global one avoids octave drops.
    for (std::ptrdiff_t lag = lag_min; lag <= lag_max; ++lag) {
      const double c = r[static_cast<std::size_t>(lag)];
      const double prev = r[static_cast<std::size_t>(lag - 1)], next = r[static_cast<std::size_t>(lag + 1)];
      if (c < 0.9 * best || c < prev || c < next) continue;
      double shift = 0.0;
      const double denom = prev - 2.0 * c + next;
      if (denom < 0.0) shift = std::clamp(0.5 * (prev - next) / denom, -0.5, 0.5);
      const double f0 = fs / (static_cast<double>(lag) + shift);
      track.values[f] = std::clamp(f0, cfg.f0_min, cfg.f0_max);
      track.voicing[f] = true;
      break;
    }
  }
  interpolate_unvoiced(track.values, track.voicing);
  return track;
}

// ---------------------------------------------------------------------------
// Warping

inline double geometric_mean(std::span<const double> v) {
  if (v.empty()) throw PreconditionError("geometric_mean of empty sequence");
  double acc = 0.0;
  for (double x : v) acc += std::log(x);
  return std::exp(acc / static_cast<double>(v.size()));
}

// F0 at time t by linear interpolation between frame centres, held flat
// beyond the first and last frame.
inline double track_value_at(const F0Track& track, double t) {
  return interp_uniform(track.values, t / track.frame_hop);
}

// Warp tau = p(t) with dp/dt = f0(t) / f0_ref, integrated on a knot grid of
// one knot per sample at `sample_rate`. The map spans [0, n_frames * hop],
// which covers any signal aligned with the track. f0_ref <= 0 selects the
// geometric mean of the track.
inline WarpMap build_warp_map(const F0Track& track, int sample_rate, double f0_ref = 0.0) {
  track.validate();
  if (track.size() == 0) throw PreconditionError("build_warp_map: empty track");
  if (sample_rate <= 0) throw DomainError("build_warp_map: sample_rate must be positive");
  if (f0_ref <= 0.0) f0_ref = geometric_mean(track.values);
  const double span = static_cast<double>(track.size()) * track.frame_hop;
  const auto n_knots = static_cast<std::size_t>(std::ceil(span * sample_rate - 1e-9)) + 1;
  std::vector<double> t(n_knots), tau(n_knots);
  double prev_rate = track_value_at(track, 0.0) / f0_ref;
  for (std::size_t m = 0; m < n_knots; ++m) {
    t[m] = static_cast<double>(m) / sample_rate;
    const double rate = track_value_at(track, t[m]) / f0_ref;
    tau[m] = (m == 0) ? 0.0 : tau[m - 1] + 0.5 * (prev_rate + rate) / sample_rate;
    prev_rate = rate;
  }
  return WarpMap(std::move(t), std::move(tau));
}

// Short weighted moving average over frames (symmetric Hann weights,
// renormalised at the edges).
inline F0Track smooth_track(const F0Track& track, std::size_t width) {
  if (width <= 1) return track;
  const auto w = hann(width | 1u);
  const auto half = static_cast<std::ptrdiff_t>(w.size() / 2);
  F0Track out = track;
  const auto n = static_cast<std::ptrdiff_t>(track.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0, norm = 0.0;
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const std::ptrdiff_t j = i + k;
      if (j < 0 || j >= n) continue;
      acc += w[static_cast<std::size_t>(k + half)] * track.values[static_cast<std::size_t>(j)];
      norm += w[static_cast<std::size_t>(k + half)];
    }
    out.values[static_cast<std::size_t>(i)] = acc / norm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Harmonic band separation and instantaneous frequency

// Complex band-pass around `center_hz`: convolution with
// w(tau) * exp(i 2 pi center tau), where w is the Nuttall taper for a band of
// width `bandwidth_hz` (defaults to center_hz, i.e. the fundamental band).
// The kernel is centred, so there is no group delay, and scaled so that a
// unit-amplitude cosine at center_hz yields magnitude 1.
inline std::vector<cdouble> bandpass_harmonic(const SpeechBuffer& signal, double center_hz,
                                              double bandwidth_hz = 0.0) {
  const double fs = signal.sample_rate;
  if (!(center_hz > 0.0) || !(center_hz < fs / 2.0))
    throw DomainError("bandpass_harmonic: need 0 < f_c < sample_rate/2");
  if (bandwidth_hz <= 0.0) bandwidth_hz = center_hz;
  const auto w = nuttall_window(bandwidth_hz, fs);
  const auto half = static_cast<std::ptrdiff_t>(w.size() / 2);
  const double gain = 2.0 / std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<cdouble> h(w.size());
  for (std::ptrdiff_t m = -half; m <= half; ++m)
    h[static_cast<std::size_t>(m + half)] =
        gain * w[static_cast<std::size_t>(m + half)] * std::polar(1.0, kTwoPi * center_hz * static_cast<double>(m) / fs);

  const auto& x = signal.samples;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<cdouble> y(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t m_lo = std::max(-half, i - (n - 1));
    const std::ptrdiff_t m_hi = std::min(half, i);
    double re = 0.0, im = 0.0;
    for (std::ptrdiff_t m = m_lo; m <= m_hi; ++m) {
      const double s = x[static_cast<std::size_t>(i - m)];
      const cdouble& c = h[static_cast<std::size_t>(m + half)];
      re += c.real() * s;
      im += c.imag() * s;
    }
    y[static_cast<std::size_t>(i)] = {re, im};
  }
  return y;
}

struct InstantaneousFrequency {
  std::vector<double> hz;
  std::vector<bool> valid;  // false where |z|^2 fell below the floor; value was interpolated
};

inline constexpr double kIfPowerFloor = 1e-12;

namespace detail {

// Central-difference coefficients c_j (j = 1..r) for f'(x) ~ sum c_j (f[x+j] - f[x-j]).
inline const double* central_coeffs(int r) {
  static const double c1[] = {1.0 / 2.0};
  static const double c2[] = {2.0 / 3.0, -1.0 / 12.0};
  static const double c3[] = {3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0};
  static const double c4[] = {4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0};
  switch (r) {
    case 1: return c1;
    case 2: return c2;
    case 3: return c3;
    default: return c4;
  }
}

// Derivative per sample. Uses the widest central stencil (up to 8th order)
// that fits, one-sided differences at the two end points.
inline std::vector<double> derivative(std::span<const double> f) {
  const auto n = static_cast<std::ptrdiff_t>(f.size());
  std::vector<double> d(f.size(), 0.0);
  if (n < 2) return d;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const int r = static_cast<int>(std::min<std::ptrdiff_t>({4, i, n - 1 - i}));
    if (r == 0) {
      d[static_cast<std::size_t>(i)] = (i == 0) ? f[1] - f[0] : f[static_cast<std::size_t>(n - 1)] - f[static_cast<std::size_t>(n - 2)];
      continue;
    }
    const double* c = central_coeffs(r);
    double acc = 0.0;
    for (int j = 1; j <= r; ++j)
      acc += c[j - 1] * (f[static_cast<std::size_t>(i + j)] - f[static_cast<std::size_t>(i - j)]);
    d[static_cast<std::size_t>(i)] = acc;
  }
  return d;
}

}  // namespace detail

// Flanagan's formula: IF = (a b' - b a') / (a^2 + b^2) / (2 pi), in Hz.
inline InstantaneousFrequency instantaneous_frequency(std::span<const cdouble> z, double sample_rate) {
  if (z.empty()) throw PreconditionError("instantaneous_frequency: empty input");
  if (!(sample_rate > 0.0)) throw DomainError("instantaneous_frequency: sample_rate must be positive");
  std::vector<double> a(z.size()), b(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    a[i] = z[i].real();
    b[i] = z[i].imag();
  }
  const auto da = detail::derivative(a);
  const auto db = detail::derivative(b);
  InstantaneousFrequency out;
  out.hz.assign(z.size(), 0.0);
  out.valid.assign(z.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = a[i] * a[i] + b[i] * b[i];
    if (p < kIfPowerFloor) continue;
    out.hz[i] = (a[i] * db[i] - b[i] * da[i]) / p * sample_rate / kTwoPi;
    out.valid[i] = true;
    any = true;
  }
  if (!any) throw NumericalError("instantaneous_frequency: signal power below floor everywhere");
  interpolate_unvoiced(out.hz, out.valid);
  return out;
}

// ---------------------------------------------------------------------------
// Refinement

struct RefineConfig {
  std::size_t n_harmonics = 3;
  std::size_t n_iterations = 3;
  std::vector<double> harmonic_weights;  // empty: proportional to 1/k
  double convergence_tol = 0.1;          // Hz, max-norm change between iterations
  std::size_t guide_smoothing = 5;       // frames; warp guide is a smoothed copy of the track

  std::vector<double> weights() const {
    if (!harmonic_weights.empty()) return harmonic_weights;
    std::vector<double> w(n_harmonics);
    double sum = 0.0;
    for (std::size_t k = 0; k < n_harmonics; ++k) sum += w[k] = 1.0 / static_cast<double>(k + 1);
    for (auto& v : w) v /= sum;
    return w;
  }

  void validate() const {
    if (n_harmonics < 1) throw PreconditionError("RefineConfig: n_harmonics must be >= 1");
    if (n_iterations < 1) throw PreconditionError("RefineConfig: n_iterations must be >= 1");
    if (!(convergence_tol >= 0.0)) throw DomainError("RefineConfig: convergence_tol must be >= 0");
    if (!harmonic_weights.empty()) {
      if (harmonic_weights.size() != n_harmonics)
        throw ShapeError("RefineConfig: one weight per harmonic required");
      double sum = 0.0;
      for (double w : harmonic_weights) {
        if (!(w >= 0.0)) throw DomainError("RefineConfig: weights must be nonnegative");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw DomainError("RefineConfig: weights must sum to 1");
    }
  }
};

struct RefineResult {
  F0Track track;
  std::vector<double> max_change;  // Hz, one entry per iteration run
  std::vector<bool> diverged;      // frames held after leaving the F0 range twice in a row
};

// Replaces the unflagged frames before the first and after the last flagged
// frame by a least-squares line through the nearest `fit` flagged frames.
// Interior gaps are bridged linearly. No-op when nothing is flagged.
inline void extrapolate_edges(std::vector<double>& values, const std::vector<bool>& ok, std::size_t fit = 3) {
  std::vector<std::size_t> good;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (ok[i]) good.push_back(i);
  if (good.empty()) return;
  auto line_through = [&](std::span<const std::size_t> idx) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(idx.size());
    for (std::size_t i : idx) {
      const double x = static_cast<double>(i);
      sx += x;
      sy += values[i];
      sxx += x * x;
      sxy += x * values[i];
    }
    const double den = n * sxx - sx * sx;
    const double slope = (idx.size() < 2 || den == 0.0) ? 0.0 : (n * sxy - sx * sy) / den;
    const double icpt = (sy - slope * sx) / n;
    return std::pair{slope, icpt};
  };
  const std::size_t m = std::min(fit, good.size());
  const auto [s0, c0] = line_through(std::span<const std::size_t>(good).first(m));
  for (std::size_t i = 0; i < good.front(); ++i) values[i] = c0 + s0 * static_cast<double>(i);
  const auto [s1, c1] = line_through(std::span<const std::size_t>(good).last(m));
  for (std::size_t i = good.back() + 1; i < values.size(); ++i) values[i] = c1 + s1 * static_cast<double>(i);
  std::vector<double> inner(values.begin() + static_cast<std::ptrdiff_t>(good.front()),
                            values.begin() + static_cast<std::ptrdiff_t>(good.back()) + 1);
  std::vector<bool> inner_ok(ok.begin() + static_cast<std::ptrdiff_t>(good.front()),
                             ok.begin() + static_cast<std::ptrdiff_t>(good.back()) + 1);
  interpolate_unvoiced(inner, inner_ok);
  std::copy(inner.begin(), inner.end(), values.begin() + static_cast<std::ptrdiff_t>(good.front()));
}

// One measurement pass: warp by `guide`, measure the IF of harmonic bands
// k * f0_ref, map back to the original axis and combine with the weights.
// Returns the per-frame median of the per-sample combined estimate.
inline std::vector<double> measure_contf0(const SpeechBuffer& wave, const F0Track& guide,
                                          std::span<const double> weights) {
  const double fs = wave.sample_rate;
  const double f0_ref = geometric_mean(guide.values);
  const WarpMap map = build_warp_map(guide, wave.sample_rate, f0_ref);
  const SpeechBuffer warped = resample_by_warp(wave, map, WarpDirection::forward);

  std::vector<std::vector<double>> if_k;
  std::vector<double> used_weights;
  for (std::size_t k = 1; k <= weights.size(); ++k) {
    const double centre = static_cast<double>(k) * f0_ref;
    if (weights[k - 1] == 0.0 || centre + 0.5 * f0_ref >= fs / 2.0) continue;
    const auto z = bandpass_harmonic(warped, centre, f0_ref);
    auto inst = instantaneous_frequency(z, fs);
    for (auto& v : inst.hz) v /= static_cast<double>(k);
    if_k.push_back(std::move(inst.hz));
    used_weights.push_back(weights[k - 1]);
  }
  if (if_k.empty()) throw DomainError("measure_contf0: no harmonic band below Nyquist");
  const double wsum = std::accumulate(used_weights.begin(), used_weights.end(), 0.0);

  // Per original sample: estimate = sum_k w_k IF_k(p(t)) p'(t) / k.
  std::vector<double> per_sample(wave.size());
  for (std::size_t n = 0; n < wave.size(); ++n) {
    const double t = static_cast<double>(n) / fs;
    const double idx = map.forward(t) * fs;
    const double slope = track_value_at(guide, t) / f0_ref;
    double acc = 0.0;
    for (std::size_t j = 0; j < if_k.size(); ++j) acc += used_weights[j] * interp_uniform(if_k[j], idx);
    per_sample[n] = acc / wsum * slope;
  }

  // A sample is reliable when the band filter's whole support lies inside
  // the warped signal; truncated kernels lose their nulls and leak.
  const double support = std::floor(2.0 * fs / f0_ref);
  const double last = static_cast<double>(warped.size()) - 1.0;
  std::vector<bool> reliable(wave.size());
  for (std::size_t n = 0; n < wave.size(); ++n) {
    const double idx = map.forward(static_cast<double>(n) / fs) * fs;
    reliable[n] = idx >= support && idx <= last - support;
  }

  const auto hop = static_cast<std::ptrdiff_t>(std::lround(guide.frame_hop * fs));
  std::vector<double> frames(guide.size());
  std::vector<bool> frame_ok(guide.size(), false);
  std::vector<double> pool;
  for (std::size_t i = 0; i < guide.size(); ++i) {
    const auto c = static_cast<std::ptrdiff_t>(i) * hop;
    const auto lo = std::max<std::ptrdiff_t>(0, c - hop / 2);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(wave.size()), c + (hop + 1) / 2);
    pool.clear();
    for (auto n = lo; n < hi; ++n)
      if (reliable[static_cast<std::size_t>(n)]) pool.push_back(per_sample[static_cast<std::size_t>(n)]);
    if (hi > lo && 4 * pool.size() >= static_cast<std::size_t>(hi - lo)) {
      frames[i] = median(pool);
      frame_ok[i] = true;
    } else {
      frames[i] = per_sample[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(wave.size()) - 1))];
    }
  }
  extrapolate_edges(frames, frame_ok);
  return frames;
}

inline RefineResult refine_contf0(const SpeechBuffer& wave, const F0Track& initial, const RefineConfig& cfg = {}) {
  wave.validate();
  initial.validate();
  cfg.validate();
  const std::size_t hop = hop_samples_for(initial.frame_hop, wave.sample_rate);
  if (initial.size() != frame_count(wave.size(), hop))
    throw ShapeError("refine_contf0: track has " + std::to_string(initial.size()) + " frames, wave needs " +
                     std::to_string(frame_count(wave.size(), hop)));
  const auto weights = cfg.weights();
  const bool any_voiced = std::find(initial.voicing.begin(), initial.voicing.end(), true) != initial.voicing.end();

  RefineResult result;
  result.track = initial;
  for (auto& v : result.track.values) v = std::clamp(v, kF0Min, kF0Max);
  result.diverged.assign(initial.size(), false);
  std::vector<int> out_of_range(initial.size(), 0);

  for (std::size_t it = 0; it < cfg.n_iterations; ++it) {
    const F0Track guide = smooth_track(result.track, cfg.guide_smoothing);
    auto raw = measure_contf0(wave, guide, weights);
    std::vector<double> next(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const bool outside = !std::isfinite(raw[i]) || raw[i] < kF0Min || raw[i] > kF0Max;
      out_of_range[i] = outside ? out_of_range[i] + 1 : 0;
      if (out_of_range[i] >= 2) result.diverged[i] = true;
      if (result.diverged[i])
        next[i] = result.track.values[i];
      else
        next[i] = std::isfinite(raw[i]) ? std::clamp(raw[i], kF0Min, kF0Max) : result.track.values[i];
    }
    if (any_voiced) {
      // Unvoiced stretches carry no harmonic evidence; bridge them from the
      // refined voiced frames.
      std::vector<bool> anchor(next.size());
      for (std::size_t i = 0; i < next.size(); ++i) anchor[i] = initial.voicing[i] && !result.diverged[i];
      interpolate_unvoiced(next, anchor);
    }
    double change = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) change = std::max(change, std::abs(next[i] - result.track.values[i]));
    result.track.values = std::move(next);
    result.max_change.push_back(change);
    if (change < cfg.convergence_tol) break;
  }
  return result;
}

}  // namespace csm
