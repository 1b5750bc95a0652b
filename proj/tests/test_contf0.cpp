#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "csm/contf0.hpp"
#include "csm/random.hpp"
#include "csm/synthetic.hpp"
#include "test_support.hpp"

using namespace csm;

namespace {

F0Track constant_track(double f0, std::size_t n, double hop = 0.005) {
  return F0Track{std::vector<double>(n, f0), hop, std::vector<bool>(n, true)};
}

F0Track truth_track(const synthetic::VoiceSpec& spec, std::size_t n, double hop = 0.005) {
  F0Track t{{}, hop, std::vector<bool>(n, true)};
  for (std::size_t i = 0; i < n; ++i) t.values.push_back(synthetic::vibrato_f0(spec, static_cast<double>(i) * hop));
  return t;
}

double rmse(const std::vector<double>& a, const std::vector<double>& b, std::size_t skip = 0) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = skip; i + skip < a.size(); ++i, ++n) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(n));
}

synthetic::VoiceSpec vibrato_voice(double seconds, std::uint64_t seed) {
  synthetic::VoiceSpec s;
  s.duration_s = seconds;
  s.f0_hz = 150.0;
  s.vibrato_depth_hz = 20.0;
  s.vibrato_rate_hz = 5.0;
  s.harmonic_amplitudes = {1.0, 0.6, 0.4};
  s.snr_db = 20.0;
  s.seed = seed;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// estimate_baseline_contf0

TEST(BaselineContF0, PureToneIsTrackedAndVoiced) {
  const auto track = estimate_baseline_contf0(synthetic::tone(200.0, 1.0));
  ASSERT_EQ(track.size(), frame_count(16000, 80));
  for (std::size_t i = 0; i < track.size(); ++i) {
    EXPECT_NEAR(track.values[i], 200.0, 2.0) << "frame " << i;
    EXPECT_TRUE(track.voicing[i]) << "frame " << i;
  }
}

TEST(BaselineContF0, WhiteNoiseIsContinuousAndUnvoiced) {
  SpeechBuffer noise{synthetic::white_noise(16000, 0.3, 5), 16000};
  const auto track = estimate_baseline_contf0(noise);
  for (std::size_t i = 0; i < track.size(); ++i) {
    EXPECT_GT(track.values[i], 0.0);
    EXPECT_FALSE(track.voicing[i]);
  }
}

TEST(BaselineContF0, ChirpFollowedAwayFromEdges) {
  const auto wave = synthetic::chirp(150.0, 250.0, 1.0);
  const auto track = estimate_baseline_contf0(wave);
  for (std::size_t i = 10; i + 10 < track.size(); ++i)
    EXPECT_NEAR(track.values[i], synthetic::chirp_f0(150.0, 250.0, 1.0, track.time(i)), 5.0) << "frame " << i;
}

TEST(BaselineContF0, SilenceGivesDefaultUnvoicedTrack) {
  const auto track = estimate_baseline_contf0(SpeechBuffer{std::vector<double>(8000, 0.0), 16000});
  for (std::size_t i = 0; i < track.size(); ++i) {
    EXPECT_EQ(track.values[i], 100.0);
    EXPECT_FALSE(track.voicing[i]);
  }
}

TEST(BaselineContF0, GapsAreBridgedLinearly) {
  // 0.3 s tone at 150 Hz, 0.2 s silence, 0.3 s tone at 250 Hz.
  auto a = synthetic::tone(150.0, 0.3);
  auto b = synthetic::tone(250.0, 0.3);
  std::vector<double> x = a.samples;
  x.insert(x.end(), 3200, 0.0);
  x.insert(x.end(), b.samples.begin(), b.samples.end());
  const auto track = estimate_baseline_contf0(SpeechBuffer{x, 16000});
  std::size_t first_gap = 0, last_gap = 0;
  for (std::size_t i = 0; i < track.size(); ++i)
    if (!track.voicing[i]) {
      if (first_gap == 0) first_gap = i;
      last_gap = i;
    }
  ASSERT_GT(last_gap, first_gap);
  for (std::size_t i = first_gap; i <= last_gap; ++i) {
    EXPECT_GE(track.values[i], 150.0 - 2.0);
    EXPECT_LE(track.values[i], 250.0 + 2.0);
    if (i > first_gap) {
      EXPECT_GE(track.values[i], track.values[i - 1] - 1e-9);
    }
  }
}

TEST(BaselineContF0, RejectsShortInput) {
  EXPECT_THROW(estimate_baseline_contf0(synthetic::tone(200.0, 0.05)), PreconditionError);
}

// ---------------------------------------------------------------------------
// build_warp_map

TEST(BuildWarpMap, ConstantTrackGivesIdentity) {
  const auto map = build_warp_map(constant_track(173.0, 50), 16000);
  const auto t = map.t_knots();
  const auto tau = map.tau_knots();
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(tau[i], t[i], 1e-12);
}

TEST(BuildWarpMap, SlopeIsRatioToReference) {
  const auto map = build_warp_map(constant_track(200.0, 50), 16000, 100.0);
  for (double t = 0.0; t < 0.24; t += 0.013) EXPECT_NEAR(map.slope(t), 2.0, 1e-9);
}

TEST(BuildWarpMap, StrictlyMonotoneForRandomTracks) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    F0Track track{{}, 0.005, std::vector<bool>(40, true)};
    for (int i = 0; i < 40; ++i) track.values.push_back(rng.uniform(40.0, 600.0));
    const auto map = build_warp_map(track, 8000);
    const auto t = map.t_knots();
    const auto tau = map.tau_knots();
    for (std::size_t i = 1; i < t.size(); ++i) {
      ASSERT_GT(t[i], t[i - 1]);
      ASSERT_GT(tau[i], tau[i - 1]);
    }
  }
}

TEST(BuildWarpMap, VibratoBecomesConstantPitchAfterWarping) {
  synthetic::VoiceSpec spec;
  spec.duration_s = 1.0;
  spec.f0_hz = 150.0;
  spec.vibrato_depth_hz = 20.0;
  spec.vibrato_rate_hz = 5.0;
  const auto wave = synthetic::render_voice(spec);
  const auto truth = truth_track(spec, frame_count(wave.size(), 80));
  const double f0_ref = geometric_mean(truth.values);
  const auto warped = resample_by_warp(wave, build_warp_map(truth, 16000), WarpDirection::forward);
  // Measure in 60 ms pieces; the frequency must not follow the vibrato.
  const std::size_t piece = 960;
  for (std::size_t start = 800; start + piece + 800 < warped.size(); start += piece) {
    std::vector<double> seg(warped.samples.begin() + static_cast<std::ptrdiff_t>(start),
                            warped.samples.begin() + static_cast<std::ptrdiff_t>(start + piece));
    EXPECT_NEAR(csm::testing::dominant_frequency(seg, 16000, 100.0, 200.0, 0.5), f0_ref, 1.0) << "at " << start;
  }
}

// ---------------------------------------------------------------------------
// bandpass_harmonic

TEST(BandpassHarmonic, ToneAtCentreHasSteadyMagnitudeAndPhaseRate) {
  const double fc = 180.0;
  const auto x = synthetic::tone(fc, 0.5, 16000, 0.8);
  const auto z = bandpass_harmonic(x, fc);
  const std::size_t edge = nuttall_window(fc, 16000).size();
  for (std::size_t i = edge; i + edge < z.size(); ++i) {
    EXPECT_NEAR(std::abs(z[i]), 0.8, 1e-3);
    const double step = std::arg(z[i] * std::conj(z[i - 1]));
    EXPECT_NEAR(step, kTwoPi * fc / 16000.0, 1e-6);
  }
}

TEST(BandpassHarmonic, RejectsThirdHarmonic) {
  const double fc = 150.0;
  const auto x = synthetic::tone(3.0 * fc, 0.5);
  const auto z = bandpass_harmonic(x, fc);
  const std::size_t edge = nuttall_window(fc, 16000).size();
  double out = 0.0, in = 0.0;
  for (std::size_t i = edge; i + edge < z.size(); ++i) {
    out += std::norm(z[i]);
    in += x.samples[i] * x.samples[i];
  }
  EXPECT_LT(std::sqrt(out / in), 0.01);
}

TEST(BandpassHarmonic, NeighbouringHarmonicsFallOnNulls) {
  const double f0 = 140.0;
  const auto x = synthetic::tone(2.0 * f0, 0.5);
  const auto z = bandpass_harmonic(x, 3.0 * f0, f0);
  const std::size_t edge = nuttall_window(f0, 16000).size();
  for (std::size_t i = edge; i + edge < z.size(); ++i) EXPECT_LT(std::abs(z[i]), 1e-4);
}

TEST(BandpassHarmonic, ZeroInputGivesZeroOutput) {
  const auto z = bandpass_harmonic(SpeechBuffer{std::vector<double>(1000, 0.0), 16000}, 200.0);
  for (const auto& v : z) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(BandpassHarmonic, RejectsInvalidCentre) {
  SpeechBuffer x{std::vector<double>(100, 0.0), 16000};
  EXPECT_THROW(bandpass_harmonic(x, 0.0), DomainError);
  EXPECT_THROW(bandpass_harmonic(x, 8000.0), DomainError);
}

// ---------------------------------------------------------------------------
// instantaneous_frequency

namespace {

std::vector<cdouble> exponential(double f, std::size_t n, double fs, double (*gain)(double) = nullptr) {
  std::vector<cdouble> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    z[i] = (gain ? gain(t) : 1.0) * std::polar(1.0, kTwoPi * f * t);
  }
  return z;
}

}  // namespace

TEST(InstantaneousFrequency, ExactForComplexExponential) {
  const auto r = instantaneous_frequency(exponential(100.0, 4000, 16000.0), 16000.0);
  for (std::size_t i = 4; i + 4 < r.hz.size(); ++i) EXPECT_NEAR(r.hz[i], 100.0, 1e-6);
}

TEST(InstantaneousFrequency, ConjugateNegatesFrequency) {
  auto z = exponential(100.0, 4000, 16000.0);
  for (auto& v : z) v = std::conj(v);
  const auto r = instantaneous_frequency(z, 16000.0);
  for (std::size_t i = 4; i + 4 < r.hz.size(); ++i) EXPECT_NEAR(r.hz[i], -100.0, 1e-6);
}

TEST(InstantaneousFrequency, AmplitudeModulationDoesNotShiftFrequency) {
  const auto z = exponential(100.0, 4000, 16000.0, [](double t) { return 1.0 + 0.5 * std::sin(kTwoPi * 3.0 * t); });
  const auto r = instantaneous_frequency(z, 16000.0);
  for (std::size_t i = 4; i + 4 < r.hz.size(); ++i) EXPECT_NEAR(r.hz[i], 100.0, 1e-6);
}

TEST(InstantaneousFrequency, LowPowerSamplesAreFilled) {
  auto z = exponential(100.0, 200, 16000.0);
  for (std::size_t i = 90; i < 110; ++i) z[i] = 0.0;
  const auto r = instantaneous_frequency(z, 16000.0);
  for (std::size_t i = 90; i < 110; ++i) {
    EXPECT_FALSE(r.valid[i]);
    EXPECT_TRUE(std::isfinite(r.hz[i]));
  }
  EXPECT_TRUE(r.valid[50]);
}

TEST(InstantaneousFrequency, AllZeroInputIsAnError) {
  EXPECT_THROW(instantaneous_frequency(std::vector<cdouble>(64, 0.0), 16000.0), NumericalError);
  EXPECT_THROW(instantaneous_frequency(std::vector<cdouble>{}, 16000.0), PreconditionError);
}

// ---------------------------------------------------------------------------
// refine_contf0

TEST(RefineContF0, ExactTrackIsNearFixedPoint) {
  synthetic::VoiceSpec spec;
  spec.f0_hz = 200.0;
  spec.harmonic_amplitudes = {1.0, 0.6, 0.4};
  const auto wave = synthetic::render_voice(spec);
  const auto exact = constant_track(200.0, frame_count(wave.size(), 80));
  const auto out = refine_contf0(wave, exact);
  for (double v : out.track.values) EXPECT_NEAR(v, 200.0, 0.5);

  RefineConfig once;
  once.n_iterations = 1;
  const auto single = refine_contf0(wave, exact, once);
  EXPECT_EQ(single.max_change.size(), 1u);
  for (double v : single.track.values) EXPECT_NEAR(v, 200.0, 0.5);
}

TEST(RefineContF0, HalvesErrorOfPerturbedTrack) {
  const auto spec = vibrato_voice(1.0, 3);
  const auto wave = synthetic::render_voice(spec);
  const auto truth = truth_track(spec, frame_count(wave.size(), 80));
  auto perturbed = truth;
  Rng rng(17);
  for (auto& v : perturbed.values) v += rng.uniform(-10.0, 10.0);
  const auto out = refine_contf0(wave, perturbed);
  EXPECT_LE(rmse(out.track.values, truth.values), 0.5 * rmse(perturbed.values, truth.values));
}

TEST(RefineContF0, OutputStaysContinuousOnNoise) {
  SpeechBuffer noise{synthetic::white_noise(8000, 0.3, 8), 16000};
  F0Track initial = estimate_baseline_contf0(noise);
  const auto out = refine_contf0(noise, initial);
  for (double v : out.track.values) {
    EXPECT_GE(v, kF0Min);
    EXPECT_LE(v, kF0Max);
  }
}

TEST(RefineContF0, SingleHarmonicWeightEqualsDirectMeasurement) {
  const auto spec = vibrato_voice(0.5, 4);
  const auto wave = synthetic::render_voice(spec);
  auto initial = truth_track(spec, frame_count(wave.size(), 80));
  Rng rng(2);
  for (auto& v : initial.values) v += rng.uniform(-5.0, 5.0);

  RefineConfig first_only;
  first_only.n_iterations = 1;
  first_only.harmonic_weights = {1.0, 0.0, 0.0};
  RefineConfig k1;
  k1.n_iterations = 1;
  k1.n_harmonics = 1;
  const auto a = refine_contf0(wave, initial, first_only);
  const auto b = refine_contf0(wave, initial, k1);

  // Direct single-band measurement from the public building blocks.
  const F0Track guide = smooth_track(initial, 5);
  const double f0_ref = geometric_mean(guide.values);
  const auto map = build_warp_map(guide, 16000, f0_ref);
  const auto warped = resample_by_warp(wave, map, WarpDirection::forward);
  const auto inst = instantaneous_frequency(bandpass_harmonic(warped, f0_ref, f0_ref), 16000.0);
  std::vector<double> per_sample(wave.size());
  for (std::size_t n = 0; n < wave.size(); ++n) {
    const double t = static_cast<double>(n) / 16000.0;
    per_sample[n] = interp_uniform(inst.hz, map.forward(t) * 16000.0) * track_value_at(guide, t) / f0_ref;
  }
  // Compare frames whose samples all see the full filter support in the
  // warped domain; edge frames are extrapolated and checked elsewhere.
  const double support = std::floor(2.0 * 16000.0 / f0_ref);
  std::size_t compared = 0;
  for (std::size_t i = 0; i < initial.size(); ++i) {
    EXPECT_NEAR(a.track.values[i], b.track.values[i], 1e-9);
    const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(i) * 80;
    const auto lo = std::max<std::ptrdiff_t>(0, c - 40);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(wave.size()), c + 40);
    const double first = map.forward(static_cast<double>(lo) / 16000.0) * 16000.0;
    const double last = map.forward(static_cast<double>(hi - 1) / 16000.0) * 16000.0;
    if (first < support || last > static_cast<double>(warped.size()) - 1.0 - support) continue;
    const double direct = std::clamp(median({per_sample.begin() + lo, per_sample.begin() + hi}), kF0Min, kF0Max);
    EXPECT_NEAR(a.track.values[i], direct, 1e-9);
    ++compared;
  }
  EXPECT_GT(compared, initial.size() / 2);
}

TEST(RefineContF0, ChangeShrinksOnStationarySignal) {
  synthetic::VoiceSpec spec;
  spec.f0_hz = 160.0;
  spec.harmonic_amplitudes = {1.0, 0.6, 0.4};
  const auto wave = synthetic::render_voice(spec);
  auto initial = constant_track(160.0, frame_count(wave.size(), 80));
  Rng rng(5);
  for (auto& v : initial.values) v += rng.uniform(-10.0, 10.0);
  RefineConfig cfg;
  cfg.convergence_tol = 0.0;
  const auto out = refine_contf0(wave, initial, cfg);
  ASSERT_EQ(out.max_change.size(), 3u);
  EXPECT_LE(out.max_change[1], out.max_change[0]);
  EXPECT_LE(out.max_change[2], out.max_change[1]);
}

TEST(RefineContF0, StopsEarlyWhenConverged) {
  synthetic::VoiceSpec spec;
  spec.f0_hz = 200.0;
  spec.harmonic_amplitudes = {1.0, 0.6, 0.4};
  const auto wave = synthetic::render_voice(spec);
  RefineConfig cfg;
  cfg.n_iterations = 10;
  cfg.convergence_tol = 0.5;
  const auto out = refine_contf0(wave, constant_track(200.0, frame_count(wave.size(), 80)), cfg);
  EXPECT_LT(out.max_change.size(), 10u);
  EXPECT_LT(out.max_change.back(), 0.5);
}

TEST(RefineContF0, RejectsBadConfigAndShapes) {
  const auto wave = synthetic::tone(200.0, 0.5);
  const auto track = constant_track(200.0, frame_count(wave.size(), 80));
  RefineConfig zero_iter;
  zero_iter.n_iterations = 0;
  EXPECT_THROW(refine_contf0(wave, track, zero_iter), PreconditionError);
  RefineConfig bad_weights;
  bad_weights.harmonic_weights = {0.5, 0.2, 0.2};
  EXPECT_THROW(refine_contf0(wave, track, bad_weights), DomainError);
  EXPECT_THROW(refine_contf0(wave, constant_track(200.0, 10), {}), ShapeError);
}
