#pragma once
// Measurement helpers shared by the test suites. These are deliberately
// direct (plain DFT sums, least-squares fits) and do not reuse library
// internals beyond the data types.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace csm::testing {

inline constexpr double kPi = std::numbers::pi;

inline double rms_of(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

inline double db(double ratio) { return 20.0 * std::log10(ratio); }

// Least-squares amplitude of a sinusoid at a known frequency.
inline double tone_amplitude(std::span<const double> x, double freq, double fs) {
  double ss = 0, sc = 0, cc = 0, xs = 0, xc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = std::sin(2 * kPi * freq * static_cast<double>(i) / fs);
    const double c = std::cos(2 * kPi * freq * static_cast<double>(i) / fs);
    ss += s * s; cc += c * c; sc += s * c; xs += x[i] * s; xc += x[i] * c;
  }
  const double det = ss * cc - sc * sc;
  const double a = (xs * cc - xc * sc) / det;
  const double b = (xc * ss - xs * sc) / det;
  return std::hypot(a, b);
}

// Direct DFT power at an arbitrary frequency (Hann windowed).
inline double dft_power(std::span<const double> x, double freq, double fs) {
  std::complex<double> acc{0, 0};
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = 0.5 - 0.5 * std::cos(2 * kPi * static_cast<double>(i) / n);
    acc += w * x[i] * std::polar(1.0, -2 * kPi * freq * static_cast<double>(i) / fs);
  }
  return std::norm(acc);
}

// Frequency of the strongest component found by scanning a DFT grid and
// refining with a golden-section search.
inline double dominant_frequency(std::span<const double> x, double fs, double f_lo, double f_hi, double step = 1.0) {
  double best_f = f_lo, best_p = -1;
  for (double f = f_lo; f <= f_hi; f += step) {
    const double p = dft_power(x, f, fs);
    if (p > best_p) { best_p = p; best_f = f; }
  }
  double a = best_f - step, b = best_f + step;
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 60; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (dft_power(x, c, fs) > dft_power(x, d, fs)) b = d; else a = c;
  }
  return 0.5 * (a + b);
}

// Power spectrum of a real sequence by direct DFT on bins k*fs/nfft
// (Blackman-Harris window), k = 0..nfft/2.
inline std::vector<double> power_spectrum_bh(std::span<const double> x, std::size_t nfft) {
  const double a0 = 0.35875, a1 = 0.48829, a2 = 0.14128, a3 = 0.01168;
  const double n = static_cast<double>(x.size());
  std::vector<std::complex<double>> buf(nfft, {0, 0});
  for (std::size_t i = 0; i < x.size() && i < nfft; ++i) {
    const double p = 2 * kPi * static_cast<double>(i) / n;
    buf[i] = x[i] * (a0 - a1 * std::cos(p) + a2 * std::cos(2 * p) - a3 * std::cos(3 * p));
  }
  // radix-2 FFT (nfft must be a power of two)
  for (std::size_t i = 1, j = 0; i < nfft; ++i) {
    std::size_t bit = nfft >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= nfft; len <<= 1) {
    const auto w = std::polar(1.0, -2 * kPi / static_cast<double>(len));
    for (std::size_t i = 0; i < nfft; i += len) {
      std::complex<double> wk{1, 0};
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = buf[i + k], v = buf[i + k + len / 2] * wk;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
        wk *= w;
      }
    }
  }
  std::vector<double> p(nfft / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(buf[k]);
  return p;
}

// Total power in [f_lo, f_hi) from a one-sided power spectrum.
inline double band_power(const std::vector<double>& spec, double fs, std::size_t nfft, double f_lo, double f_hi) {
  double acc = 0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(nfft);
    if (f >= f_lo && f < f_hi) acc += spec[k];
  }
  return acc;
}

}  // namespace csm::testing
