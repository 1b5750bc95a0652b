#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "csm/metrics.hpp"
#include "csm/random.hpp"
#include "csm/synthetic.hpp"
#include "test_support.hpp"

using namespace csm;
namespace ct = csm::testing;

namespace {

constexpr int kFs = 16000;

SpeechBuffer ar1(std::size_t n, double a, std::uint64_t seed) {
  Rng rng(seed);
  SpeechBuffer x{std::vector<double>(n), kFs};
  double prev = 0.0;
  for (auto& v : x.samples) v = prev = a * prev + 0.1 * rng.gaussian();
  return x;
}

SpeechBuffer noise(std::size_t n, double level, std::uint64_t seed) {
  return {synthetic::white_noise(n, level, seed), kFs};
}

SpeechBuffer fuzz_signal(Rng& rng) {
  const auto n = static_cast<std::size_t>(2000 + rng.below(6000));
  SpeechBuffer x{std::vector<double>(n), kFs};
  const double f = rng.uniform(80.0, 3000.0), a = rng.uniform(0.01, 1.0), s = rng.uniform(0.001, 0.3);
  for (std::size_t i = 0; i < n; ++i)
    x.samples[i] = a * std::sin(2.0 * ct::kPi * f * static_cast<double>(i) / kFs) + s * rng.gaussian();
  return x;
}

std::vector<double> hann_sym(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * ct::kPi * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  return w;
}

// LLR straight from the definition: explicit Toeplitz matrices and a dense
// solve of the normal equations per frame.
double llr_oracle(const SpeechBuffer& x, const SpeechBuffer& y, std::size_t p = 10) {
  const std::size_t len = 400, hop = 160;
  const auto w = hann_sym(len);
  auto analyse = [&](const std::vector<double>& s, std::size_t start, Eigen::MatrixXd& R, Eigen::VectorXd& a) {
    std::vector<double> f(len);
    for (std::size_t t = 0; t < len; ++t) f[t] = w[t] * s[start + t];
    Eigen::VectorXd r(p + 1);
    for (std::size_t k = 0; k <= p; ++k) {
      r(static_cast<Eigen::Index>(k)) = 0.0;
      for (std::size_t t = k; t < len; ++t) r(static_cast<Eigen::Index>(k)) += f[t] * f[t - k];
    }
    R.resize(static_cast<Eigen::Index>(p + 1), static_cast<Eigen::Index>(p + 1));
    for (std::size_t i = 0; i <= p; ++i)
      for (std::size_t j = 0; j <= p; ++j)
        R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r(static_cast<Eigen::Index>(i > j ? i - j : j - i));
    const Eigen::MatrixXd Rp = R.bottomRightCorner(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    const Eigen::VectorXd rhs = -r.tail(static_cast<Eigen::Index>(p));
    a.resize(static_cast<Eigen::Index>(p + 1));
    a(0) = 1.0;
    a.tail(static_cast<Eigen::Index>(p)) = Rp.fullPivLu().solve(rhs);
  };
  const std::size_t n = std::min(x.size(), y.size());
  double acc = 0.0;
  int count = 0;
  for (std::size_t s = 0; s + len <= n; s += hop) {
    Eigen::MatrixXd Rx, Ry;
    Eigen::VectorXd ax, ay;
    analyse(x.samples, s, Rx, ax);
    analyse(y.samples, s, Ry, ay);
    const double v = std::log((ay.transpose() * Rx * ay)(0) / (ax.transpose() * Rx * ax)(0));
    acc += std::min(2.0, v);
    ++count;
  }
  return acc / count;
}

// Band filters rebuilt from the table, band magnitudes by direct DFT.
double fwsnrseg_oracle(const SpeechBuffer& x, const SpeechBuffer& y) {
  const std::size_t len = 400, hop = 160, nfft = 1024, half = 512;
  const auto w = hann_sym(len);
  std::vector<std::vector<double>> filt(kCriticalBands.size(), std::vector<double>(half, 0.0));
  for (std::size_t b = 0; b < kCriticalBands.size(); ++b) {
    const double c = std::floor(kCriticalBands[b].centre_hz / 8000.0 * half);
    const double bw = kCriticalBands[b].bandwidth_hz / 8000.0 * half;
    for (std::size_t j = 0; j < half; ++j) {
      const double g = (70.0 / kCriticalBands[b].bandwidth_hz) * std::exp(-11.0 * std::pow((static_cast<double>(j) - c) / bw, 2));
      filt[b][j] = g > std::exp(-30.0 / 4.606) ? g : 0.0;
    }
  }
  auto bands = [&](const std::vector<double>& s, std::size_t start) {
    std::vector<double> mag(half);
    for (std::size_t k = 0; k < half; ++k) {
      std::complex<double> acc{0, 0};
      for (std::size_t t = 0; t < len; ++t)
        acc += w[t] * s[start + t] * std::polar(1.0, -2.0 * ct::kPi * static_cast<double>(k * t) / nfft);
      mag[k] = std::abs(acc);
    }
    std::vector<double> out(kCriticalBands.size(), 0.0);
    for (std::size_t b = 0; b < out.size(); ++b)
      for (std::size_t k = 0; k < half; ++k) out[b] += filt[b][k] * mag[k];
    return out;
  };
  double total = 0.0, wsum = 0.0;
  for (const auto& b : kCriticalBands) wsum += b.weight;
  int count = 0;
  const std::size_t n = std::min(x.size(), y.size());
  for (std::size_t s = 0; s + len <= n; s += hop) {
    const auto bx = bands(x.samples, s), by = bands(y.samples, s);
    double acc = 0.0;
    for (std::size_t b = 0; b < bx.size(); ++b) {
      const double snr = 10.0 * std::log10(bx[b] * bx[b] / ((bx[b] - by[b]) * (bx[b] - by[b])));
      acc += kCriticalBands[b].weight * std::clamp(snr, -10.0, 35.0);
    }
    total += std::clamp(acc / wsum, -10.0, 35.0);
    ++count;
  }
  return total / count;
}

}  // namespace

// ---------------------------------------------------------------------------
// LPC

TEST(Lpc, WhiteNoiseHasNoPredictableStructure) {
  const auto x = noise(32000, 1.0, 3);
  const auto m = lpc_analyze(x.samples, 10);
  ASSERT_FALSE(m.degenerate);
  EXPECT_EQ(m.a[0], 1.0);
  for (std::size_t k = 1; k <= 10; ++k) EXPECT_LT(std::abs(m.a[k]), 0.03) << k;
  EXPECT_LT(10.0 * std::log10(m.r[0] / m.error), 0.1);
}

TEST(Lpc, RecoversAr1Coefficient) {
  const auto x = ar1(32000, 0.9, 5);
  const auto m = lpc_analyze(x.samples, 10);
  EXPECT_NEAR(m.a[1], -0.9, 0.02);
  for (std::size_t k = 2; k <= 10; ++k) EXPECT_LT(std::abs(m.a[k]), 0.03);
}

TEST(Lpc, MatchesNormalEquations) {
  Rng rng(8);
  std::vector<double> f(300);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::sin(0.3 * static_cast<double>(i)) + 0.2 * rng.gaussian();
  const std::size_t p = 8;
  const auto m = lpc_analyze(f, p);
  Eigen::MatrixXd R(p, p);
  Eigen::VectorXd rhs(p);
  for (std::size_t i = 0; i < p; ++i) {
    rhs(static_cast<Eigen::Index>(i)) = -m.r[i + 1];
    for (std::size_t j = 0; j < p; ++j) R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m.r[i > j ? i - j : j - i];
  }
  const Eigen::VectorXd a = R.fullPivLu().solve(rhs);
  for (std::size_t k = 0; k < p; ++k) EXPECT_NEAR(m.a[k + 1], a(static_cast<Eigen::Index>(k)), 1e-9);
}

TEST(Lpc, OrderZeroAndDegenerate) {
  const auto x = noise(100, 1.0, 1);
  const auto m0 = lpc_analyze(x.samples, 0);
  ASSERT_EQ(m0.a.size(), 1u);
  EXPECT_EQ(m0.a[0], 1.0);
  const auto z = lpc_analyze(std::vector<double>(100, 0.0), 10);
  EXPECT_TRUE(z.degenerate);
  EXPECT_THROW(lpc_analyze(std::vector<double>(5, 1.0), 10), PreconditionError);
}

// ---------------------------------------------------------------------------
// LLR

TEST(Llr, IdentityAndGainInvariance) {
  const auto x = ar1(8000, 0.8, 2);
  EXPECT_EQ(llr(x, x), 0.0);
  SpeechBuffer half = x;
  for (auto& v : half.samples) v *= 0.5;
  EXPECT_NEAR(llr(x, half), 0.0, 1e-12);
  const auto y = noise(8000, 0.1, 4);
  SpeechBuffer y3 = y;
  for (auto& v : y3.samples) v *= 3.0;
  EXPECT_NEAR(llr(x, y), llr(x, y3), 1e-9);
}

TEST(Llr, MatchesDirectQuadraticForms) {
  const auto x = ar1(6000, 0.9, 21);
  const auto y = noise(6000, 0.3, 22);
  const double v = llr(x, y);
  EXPECT_GT(v, 0.1);
  EXPECT_NEAR(v, llr_oracle(x, y), 1e-9);
}

TEST(Llr, NonNegativeAndCapped) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = fuzz_signal(rng), b = fuzz_signal(rng);
    const auto s = llr_frames(a, b);
    for (double v : s.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 2.0);
    }
  }
}

TEST(Llr, SilentNaturalFramesAreSkipped) {
  SpeechBuffer x{std::vector<double>(8000, 0.0), kFs};
  const auto n = noise(4000, 0.1, 1);
  std::copy(n.samples.begin(), n.samples.end(), x.samples.begin());
  const auto s = llr_frames(x, noise(8000, 0.1, 2));
  EXPECT_LT(s.values.size(), (8000u - 400u) / 160u + 1u);
  EXPECT_GT(s.values.size(), 0u);
}

TEST(Llr, RejectsMismatchedInputs) {
  EXPECT_THROW(llr(noise(1000, 1, 1), SpeechBuffer{std::vector<double>(1000), 8000}), DomainError);
  EXPECT_THROW(llr(noise(1000, 1, 1), SpeechBuffer{{}, kFs}), PreconditionError);
}

// ---------------------------------------------------------------------------
// fwSNRseg

TEST(FwSnrSeg, IdenticalSignalsHitTheCeiling) {
  const auto x = ar1(8000, 0.7, 9);
  EXPECT_DOUBLE_EQ(fwsnrseg(x, x), 35.0);
}

TEST(FwSnrSeg, ZeroSynthScoresZeroDb) {
  // With magnitude differences, |X| / |X - 0| = 1 in every band.
  const auto x = ar1(8000, 0.7, 9);
  EXPECT_NEAR(fwsnrseg(x, SpeechBuffer{std::vector<double>(8000, 0.0), kFs}), 0.0, 1e-9);
}

TEST(FwSnrSeg, MatchesBruteForceEvaluation) {
  const auto x = ar1(4000, 0.9, 31);
  SpeechBuffer y = x;
  const auto n = noise(4000, 0.05, 32);
  for (std::size_t i = 0; i < y.size(); ++i) y.samples[i] += n.samples[i];
  EXPECT_NEAR(fwsnrseg(x, y), fwsnrseg_oracle(x, y), 1e-6);
}

TEST(FwSnrSeg, EqualPowerNoiseGivesTheMagnitudeDefinitionValue) {
  // Natural white noise plus an independent copy at equal power. Under the
  // magnitude-difference definition this sits near 7.7 dB rather than 0.
  double acc = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = noise(16000, 0.1, 100 + s);
    SpeechBuffer y = x;
    const auto n = noise(16000, 0.1, 200 + s);
    for (std::size_t i = 0; i < y.size(); ++i) y.samples[i] += n.samples[i];
    acc += fwsnrseg(x, y);
  }
  EXPECT_NEAR(acc / 5.0, 7.7, 1.0);
}

TEST(FwSnrSeg, MonotoneInAddedNoise) {
  const std::vector<double> levels{0.001, 0.01, 0.03, 0.1, 0.3};
  std::vector<double> score(levels.size(), 0.0);
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const auto x = ar1(6000, 0.9, 300 + trial);
    const auto n = noise(6000, 1.0, 400 + trial);
    for (std::size_t l = 0; l < levels.size(); ++l) {
      SpeechBuffer y = x;
      for (std::size_t i = 0; i < y.size(); ++i) y.samples[i] += levels[l] * n.samples[i];
      score[l] += fwsnrseg(x, y) / 10.0;
    }
  }
  for (std::size_t l = 1; l < levels.size(); ++l) EXPECT_LE(score[l], score[l - 1]);
  EXPECT_GT(score.front() - score.back(), 10.0);
}

// ---------------------------------------------------------------------------
// LSD

TEST(Lsd, IdentityAndGain) {
  Rng rng(12);
  const auto x = fuzz_signal(rng);
  EXPECT_EQ(lsd(x, x), 0.0);
  SpeechBuffer y = x;
  for (auto& v : y.samples) v *= 10.0;
  EXPECT_NEAR(lsd(x, y), 20.0, 1e-3);
}

TEST(Lsd, Symmetric) {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = fuzz_signal(rng), b = fuzz_signal(rng);
    EXPECT_NEAR(lsd(a, b), lsd(b, a), 1e-9);
  }
}

TEST(Lsd, MatchesTwoLoopAccumulation) {
  Rng rng(14);
  const auto a = fuzz_signal(rng), b = fuzz_signal(rng);
  const MetricConfig cfg;
  const std::size_t n = std::min(a.size(), b.size()), len = 400, hop = 160;
  const auto w = hann_sym(len);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  double total = 0.0;
  int frames = 0;
  for (std::size_t s = 0; s + len <= n; s += hop) {
    std::vector<double> fa(len), fb(len);
    for (std::size_t t = 0; t < len; ++t) {
      fa[t] = w[t] * a.samples[s + t];
      fb[t] = w[t] * b.samples[s + t];
    }
    const auto ea = lsd_envelope(fa, wsum, cfg), eb = lsd_envelope(fb, wsum, cfg);
    double acc = 0.0;
    for (std::size_t j = 0; j < ea.size(); ++j) acc += (ea[j] - eb[j]) * (ea[j] - eb[j]);
    total += std::sqrt(acc / static_cast<double>(ea.size()));
    ++frames;
  }
  EXPECT_NEAR(lsd(a, b), total / frames, 1e-9);
}

TEST(Lsd, RejectsMismatchedInputs) {
  EXPECT_THROW(lsd(noise(1000, 1, 1), SpeechBuffer{std::vector<double>(1000), 22050}), DomainError);
}

// ---------------------------------------------------------------------------
// Identity fuzz and reports

TEST(Metrics, FuzzedIdentities) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = fuzz_signal(rng);
    const auto r = evaluate(x, x);
    EXPECT_EQ(r.llr, 0.0);
    EXPECT_EQ(r.lsd, 0.0);
    EXPECT_DOUBLE_EQ(r.fwsnrseg, 35.0);
  }
}

TEST(Metrics, ReportKeepsPerFrameValues) {
  const auto x = ar1(8000, 0.9, 1), y = ar1(8000, 0.5, 2);
  const auto r = evaluate(x, y, {}, true);
  EXPECT_EQ(r.n_frames, (8000u - 400u) / 160u + 1u);
  EXPECT_EQ(r.lsd_per_frame.size(), r.n_frames);
  EXPECT_EQ(r.llr_per_frame.size(), r.n_frames);
  EXPECT_EQ(r.fwsnrseg_per_frame.size(), r.n_frames);
  double m = 0.0;
  for (double v : r.lsd_per_frame) m += v;
  EXPECT_NEAR(m / static_cast<double>(r.n_frames), r.lsd, 1e-12);
}

// ---------------------------------------------------------------------------
// track_psd

TEST(TrackPsd, ConstantTrackHasNoPower) {
  const F0Track t{std::vector<double>(256, 180.0), 0.005, std::vector<bool>(256, true)};
  for (double p : track_psd(t).power) EXPECT_LT(p, 1e-20);
}

TEST(TrackPsd, VibratoPeaksAtItsRate) {
  const std::size_t n = 400;
  F0Track t{std::vector<double>(n), 0.005, std::vector<bool>(n, true)};
  for (std::size_t i = 0; i < n; ++i) t.values[i] = 150.0 + 20.0 * std::sin(2.0 * ct::kPi * 5.0 * t.time(i));
  const auto psd = track_psd(t);
  const double df = psd.freq_hz[1] - psd.freq_hz[0];
  EXPECT_NEAR(df, 200.0 / n, 1e-12);
  std::size_t peak = 0;
  for (std::size_t k = 0; k < psd.power.size(); ++k)
    if (psd.power[k] > psd.power[peak]) peak = k;
  EXPECT_NEAR(psd.freq_hz[peak], 5.0, df);
}

TEST(TrackPsd, WhiteTrackIsFlatOnAverage) {
  const std::size_t n = 256;
  std::vector<double> mean_power(n / 2 + 1, 0.0);
  const int runs = 400;
  for (int r = 0; r < runs; ++r) {
    const auto v = synthetic::white_noise(n, 2.0, static_cast<std::uint64_t>(r) + 1);
    F0Track t{std::vector<double>(n), 0.005, std::vector<bool>(n, true)};
    for (std::size_t i = 0; i < n; ++i) t.values[i] = 150.0 + v[i];
    const auto psd = track_psd(t);
    for (std::size_t k = 0; k < psd.power.size(); ++k) mean_power[k] += psd.power[k] / runs;
  }
  // Two-sided white variance 4 at 200 frames/s: one-sided level 2 * 4 / 200.
  for (std::size_t k = 4; k + 1 < mean_power.size(); ++k) EXPECT_NEAR(mean_power[k], 0.04, 0.04 * 0.25) << k;
}

TEST(TrackPsd, RejectsShortTracks) {
  const F0Track t{std::vector<double>(20, 100.0), 0.005, std::vector<bool>(20, true)};
  EXPECT_THROW(track_psd(t), PreconditionError);
}
