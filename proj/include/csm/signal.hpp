#pragma once
// Shared DSP primitives: sample buffers, windows, FFT wrappers, overlap-add,
// linear-phase FIR high-pass filtering and monotone time-axis resampling.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "csm/error.hpp"

namespace csm {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

using cdouble = std::complex<double>;

struct SpeechBuffer {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  void validate() const {
    if (sample_rate <= 0) throw DomainError("sample_rate must be positive");
    for (double s : samples)
      if (!std::isfinite(s)) throw DomainError("non-finite sample in buffer");
  }
};

struct FrameGrid {
  std::size_t frame_length_samples = 0;
  std::size_t hop_samples = 0;
  std::size_t n_frames = 0;

  void validate() const {
    if (hop_samples == 0 || hop_samples > frame_length_samples)
      throw ShapeError("frame grid requires 0 < hop <= frame length");
    if (n_frames == 0) throw ShapeError("frame grid requires at least one frame");
  }
  std::size_t output_length() const {
    return (n_frames - 1) * hop_samples + frame_length_samples;
  }
};

// Frames are centred at i*hop; the last frame centre is the last sample
// position reachable on that grid.
inline std::size_t frame_count(std::size_t n_samples, std::size_t hop) {
  if (hop == 0) throw ShapeError("hop must be positive");
  if (n_samples == 0) return 0;
  return (n_samples - 1) / hop + 1;
}

inline std::size_t hop_samples_for(double frame_hop_s, int sample_rate) {
  const auto hop = static_cast<std::size_t>(std::lround(frame_hop_s * sample_rate));
  if (hop == 0) throw DomainError("frame hop shorter than one sample");
  return hop;
}

// ---------------------------------------------------------------------------
// Windows

inline std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

// Symmetric Hann without zero end points (length n, support n + 1).
inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  return w;
}

// Square root of the periodic Hann window. Power-complementary at 50%
// overlap: w[i]^2 + w[i + n/2]^2 == 1.
inline std::vector<double> sqrt_periodic_hann(std::size_t n) {
  auto w = periodic_hann(n);
  for (auto& v : w) v = std::sqrt(v);
  return w;
}

inline double kaiser_beta_for_attenuation(double atten_db) {
  if (atten_db > 50.0) return 0.1102 * (atten_db - 8.7);
  if (atten_db >= 21.0)
    return 0.5842 * std::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0);
  return 0.0;
}

// Modified Bessel function I0 by its power series; converges quickly for the
// arguments used by Kaiser windows (< 20) and is much cheaper than
// std::cyl_bessel_i in inner loops.
inline double bessel_i0(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

// Kaiser window evaluated at normalised position x in [-1, 1].
inline double kaiser_at(double x, double beta) {
  if (std::abs(x) > 1.0) return 0.0;
  return bessel_i0(beta * std::sqrt(1.0 - x * x)) / bessel_i0(beta);
}

inline constexpr double kNuttall[4] = {0.338946, 0.481973, 0.161054, 0.018027};

// Four-term Nuttall taper for a band of width f_c, evaluated at time tau
// (seconds). Support is |tau| <= 2 / f_c where it reaches zero.
inline double nuttall_at(double tau, double f_c) {
  if (std::abs(tau) > 2.0 / f_c) return 0.0;
  const double x = kPi * f_c * tau;
  return kNuttall[0] + kNuttall[1] * std::cos(0.5 * x) + kNuttall[2] * std::cos(x) +
         kNuttall[3] * std::cos(1.5 * x);
}

// Samples of the Nuttall taper on tau = n / sample_rate, n = -M..M with
// M = floor(2 * sample_rate / f_c). Element M is tau = 0.
inline std::vector<double> nuttall_window(double f_c, double sample_rate) {
  if (!(sample_rate > 0.0) || !(f_c > 0.0) || !(f_c < sample_rate / 2.0))
    throw DomainError("nuttall_window: need 0 < f_c < sample_rate/2");
  const auto half = static_cast<std::ptrdiff_t>(std::floor(2.0 * sample_rate / f_c));
  std::vector<double> w(static_cast<std::size_t>(2 * half + 1));
  for (std::ptrdiff_t n = -half; n <= half; ++n)
    w[static_cast<std::size_t>(n + half)] = nuttall_at(static_cast<double>(n) / sample_rate, f_c);
  return w;
}

// ---------------------------------------------------------------------------
// FFT helpers (Eigen's kissfft backend; any length)

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// One engine per thread keeps its plans (twiddle tables) across calls.
inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

inline std::vector<cdouble> fft(std::vector<cdouble> x) {
  auto& engine = fft_engine();
  std::vector<cdouble> out;
  engine.fwd(out, x);
  return out;
}

// Scaled inverse (1/N).
inline std::vector<cdouble> ifft(const std::vector<cdouble>& x) {
  auto& engine = fft_engine();
  std::vector<cdouble> out;
  engine.inv(out, x);
  return out;
}

// Full-length complex spectrum of a real sequence zero-padded to nfft.
inline std::vector<cdouble> real_spectrum(std::span<const double> x, std::size_t nfft) {
  std::vector<cdouble> buf(nfft, cdouble{0.0, 0.0});
  const std::size_t n = std::min(nfft, x.size());
  for (std::size_t i = 0; i < n; ++i) buf[i] = x[i];
  return fft(std::move(buf));
}

// Linear interpolation of a uniformly sampled sequence at fractional index.
inline double interp_uniform(std::span<const double> y, double index) {
  if (y.empty()) return 0.0;
  if (index <= 0.0) return y.front();
  const double last = static_cast<double>(y.size() - 1);
  if (index >= last) return y.back();
  const auto i = static_cast<std::size_t>(index);
  const double frac = index - static_cast<double>(i);
  return y[i] + frac * (y[i + 1] - y[i]);
}

// ---------------------------------------------------------------------------
// Overlap-add

// Sums frames placed at offsets i*hop. Frames are expected to be already
// multiplied by the synthesis window (periodic Hann at 50% overlap).
inline SpeechBuffer overlap_add(const std::vector<std::vector<double>>& frames,
                                const FrameGrid& grid, int sample_rate) {
  grid.validate();
  if (frames.size() != grid.n_frames)
    throw ShapeError("overlap_add: frame count does not match grid");
  SpeechBuffer out;
  out.sample_rate = sample_rate;
  out.samples.assign(grid.output_length(), 0.0);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].size() != grid.frame_length_samples)
      throw ShapeError("overlap_add: frame " + std::to_string(i) + " has wrong length");
    const std::size_t offset = i * grid.hop_samples;
    for (std::size_t k = 0; k < frames[i].size(); ++k) out.samples[offset + k] += frames[i][k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// FIR filtering

struct FirDesign {
  double stopband_attenuation_db = 80.0;
  // Half-width of the transition band as a fraction of the cutoff; the
  // default places the stopband edge at 0.8*cutoff and the passband edge at
  // 1.2*cutoff.
  double transition_fraction = 0.2;
};

// Kaiser-windowed linear-phase low-pass with the given transition half-width
// (Hz). Odd length, symmetric.
inline std::vector<double> design_lowpass(double cutoff, double sample_rate, double half_transition_hz,
                                          double atten_db = 80.0) {
  if (!(cutoff > 0.0) || !(cutoff < sample_rate / 2.0))
    throw DomainError("FIR cutoff must lie in (0, sample_rate/2)");
  if (!(half_transition_hz > 0.0)) throw DomainError("FIR transition width must be positive");
  const double beta = kaiser_beta_for_attenuation(atten_db);
  const double delta_omega = kTwoPi * (2.0 * half_transition_hz) / sample_rate;
  auto taps = static_cast<std::size_t>(std::ceil((atten_db - 7.95) / (2.285 * delta_omega))) + 1;
  if (taps % 2 == 0) ++taps;
  const auto half = static_cast<std::ptrdiff_t>(taps / 2);
  const double fc = cutoff / sample_rate;  // cycles per sample
  std::vector<double> h(taps);
  for (std::ptrdiff_t n = -half; n <= half; ++n) {
    const double x = static_cast<double>(n);
    const double ideal = (n == 0) ? 2.0 * fc : std::sin(kTwoPi * fc * x) / (kPi * x);
    h[static_cast<std::size_t>(n + half)] = ideal * kaiser_at(x / static_cast<double>(half + 1), beta);
  }
  return h;
}

// Spectral inversion of the matching low-pass.
inline std::vector<double> design_highpass(double cutoff, double sample_rate, const FirDesign& d = {}) {
  auto h = design_lowpass(cutoff, sample_rate, d.transition_fraction * cutoff, d.stopband_attenuation_db);
  for (auto& v : h) v = -v;
  h[h.size() / 2] += 1.0;
  return h;
}

inline std::vector<double> design_highpass_with_transition(double cutoff, double sample_rate,
                                                           double half_transition_hz,
                                                           double atten_db = 80.0) {
  auto h = design_lowpass(cutoff, sample_rate, half_transition_hz, atten_db);
  for (auto& v : h) v = -v;
  h[h.size() / 2] += 1.0;
  return h;
}

// Centred (zero group delay) convolution with an odd-length symmetric
// kernel; the input is zero outside its support.
inline std::vector<double> apply_fir_centered(std::span<const double> x, std::span<const double> h) {
  if (h.size() % 2 == 0) throw ShapeError("centred FIR needs an odd kernel length");
  const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t k_lo = std::max<std::ptrdiff_t>(-half, i - (n - 1));
    const std::ptrdiff_t k_hi = std::min<std::ptrdiff_t>(half, i);
    double acc = 0.0;
    for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k)
      acc += h[static_cast<std::size_t>(k + half)] * x[static_cast<std::size_t>(i - k)];
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

inline SpeechBuffer highpass_fir(const SpeechBuffer& signal, double cutoff, const FirDesign& d = {}) {
  if (!(cutoff > 0.0) || !(cutoff < signal.sample_rate / 2.0))
    throw DomainError("highpass_fir: cutoff must lie in (0, sample_rate/2)");
  const auto h = design_highpass(cutoff, signal.sample_rate, d);
  return {apply_fir_centered(signal.samples, h), signal.sample_rate};
}

// ---------------------------------------------------------------------------
// Monotone time warping

// Piecewise-linear monotone map tau = p(t) anchored at the origin.
class WarpMap {
 public:
  WarpMap() = default;
  WarpMap(std::vector<double> t, std::vector<double> tau) : t_(std::move(t)), tau_(std::move(tau)) {
    if (t_.size() != tau_.size() || t_.size() < 2)
      throw ShapeError("WarpMap needs at least two (t, tau) knots");
    for (std::size_t i = 1; i < t_.size(); ++i)
      if (!(t_[i] > t_[i - 1]) || !(tau_[i] > tau_[i - 1]))
        throw DomainError("WarpMap knots must be strictly increasing in both coordinates");
  }

  static WarpMap identity(double duration) {
    return WarpMap({0.0, std::max(duration, 1e-9)}, {0.0, std::max(duration, 1e-9)});
  }
  static WarpMap linear(double slope, double duration) {
    if (!(slope > 0.0)) throw DomainError("linear warp slope must be positive");
    const double d = std::max(duration, 1e-9);
    return WarpMap({0.0, d}, {0.0, slope * d});
  }

  std::span<const double> t_knots() const { return t_; }
  std::span<const double> tau_knots() const { return tau_; }
  double t_begin() const { return t_.front(); }
  double t_end() const { return t_.back(); }
  double tau_begin() const { return tau_.front(); }
  double tau_end() const { return tau_.back(); }

  double forward(double t) const { return eval(t_, tau_, t); }
  double inverse(double tau) const { return eval(tau_, t_, tau); }
  // d tau / d t at t (segment slope; right-continuous).
  double slope(double t) const {
    const std::size_t i = segment(t_, t);
    return (tau_[i + 1] - tau_[i]) / (t_[i + 1] - t_[i]);
  }

 private:
  static std::size_t segment(const std::vector<double>& x, double v) {
    auto it = std::upper_bound(x.begin(), x.end(), v);
    std::size_t i = (it == x.begin()) ? 0 : static_cast<std::size_t>(it - x.begin()) - 1;
    return std::min(i, x.size() - 2);
  }
  static double eval(const std::vector<double>& x, const std::vector<double>& y, double v) {
    const std::size_t i = segment(x, v);
    return y[i] + (v - x[i]) * (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
  }

  std::vector<double> t_;
  std::vector<double> tau_;
};

enum class WarpDirection { forward, inverse };

struct ResampleConfig {
  // Kernel half-width in input samples at unit slope (total taps = 2*half).
  int half_taps = 32;
  double kaiser_beta = 8.6;
};

namespace detail {

// Band-limited evaluation of x at fractional sample position u with a
// Kaiser-windowed sinc whose cutoff is scaled by `bandwidth` (<= 1).
inline double sinc_interpolate(std::span<const double> x, double u, double bandwidth,
                               const ResampleConfig& cfg) {
  const double reach = cfg.half_taps / bandwidth;
  const auto lo = static_cast<std::ptrdiff_t>(std::ceil(u - reach));
  const auto hi = static_cast<std::ptrdiff_t>(std::floor(u + reach));
  const double nearest = std::round(u);
  if (bandwidth >= 1.0 && std::abs(u - nearest) < 1e-12) {
    const auto i = static_cast<std::ptrdiff_t>(nearest);
    return (i >= 0 && i < static_cast<std::ptrdiff_t>(x.size())) ? x[static_cast<std::size_t>(i)] : 0.0;
  }
  double acc = 0.0;
  double norm = 0.0;
  for (std::ptrdiff_t k = lo; k <= hi; ++k) {
    const double d = u - static_cast<double>(k);
    const double arg = kPi * bandwidth * d;
    const double s = (std::abs(arg) < 1e-12) ? 1.0 : std::sin(arg) / arg;
    const double w = bandwidth * s * kaiser_at(d / reach, cfg.kaiser_beta);
    norm += w;
    if (k >= 0 && k < static_cast<std::ptrdiff_t>(x.size())) acc += w * x[static_cast<std::size_t>(k)];
  }
  return (norm != 0.0) ? acc / norm : 0.0;
}

}  // namespace detail

// Forward: y(tau) = x(p^-1(tau)) on the warped axis; inverse: x(t) = y(p(t)).
// Output sample m sits at time m / sample_rate on the destination axis.
// When the mapping compresses time the interpolation kernel is narrowed to
// the local slope so the output stays band-limited.
inline SpeechBuffer resample_by_warp(const SpeechBuffer& signal, const WarpMap& map, WarpDirection direction,
                                     const ResampleConfig& cfg = {}) {
  if (signal.empty()) return {{}, signal.sample_rate};
  const double fs = signal.sample_rate;
  const double span_end = static_cast<double>(signal.size() - 1) / fs;
  const double tol = 0.5 / fs;
  const bool fwd = direction == WarpDirection::forward;
  const double src_begin = fwd ? map.t_begin() : map.tau_begin();
  const double src_end = fwd ? map.t_end() : map.tau_end();
  if (src_begin > tol || src_end < span_end - tol)
    throw DomainError("resample_by_warp: warp map does not cover the signal span");
  if (std::abs(map.forward(0.0)) > 1e-12)
    throw DomainError("resample_by_warp: warp map must be anchored at the origin");

  const double dest_end = fwd ? map.forward(span_end) : map.inverse(span_end);
  const auto n_out = static_cast<std::size_t>(std::floor(dest_end * fs + 1e-9)) + 1;
  SpeechBuffer out{std::vector<double>(n_out, 0.0), signal.sample_rate};
  for (std::size_t m = 0; m < n_out; ++m) {
    const double dest_time = static_cast<double>(m) / fs;
    double src_time;
    double src_per_dest;  // source samples advanced per destination sample
    if (fwd) {
      src_time = map.inverse(dest_time);
      src_per_dest = 1.0 / map.slope(src_time);
    } else {
      src_time = map.forward(dest_time);
      src_per_dest = map.slope(dest_time);
    }
    const double bandwidth = std::min(1.0, 1.0 / src_per_dest);
    out.samples[m] = detail::sinc_interpolate(signal.samples, src_time * fs, bandwidth, cfg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Small numeric helpers shared across modules

inline double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

}  // namespace csm
