#pragma once
// Synthetic 20-utterance corpus for exercising the acoustic model: phone
// sequences with frame-level linguistic features, rendered to audio with a
// formant-shaped harmonic source (or noise for unvoiced classes) and then
// analysed, so the targets are real analysis tracks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csm/acoustic_model.hpp"
#include "csm/analysis.hpp"
#include "csm/random.hpp"
#include "csm/signal.hpp"

namespace csm::toy {

struct PhoneClass {
  bool voiced;
  double f0_offset_hz;
  double formants_hz[3];
  double level;  // linear peak amplitude of the source
};

// Eight classes: six vowel-like, two fricative-like.
inline const std::vector<PhoneClass>& phone_classes() {
  static const std::vector<PhoneClass> classes{
      {true, 0.0, {700, 1200, 2600}, 0.30},   {true, 10.0, {300, 2300, 3000}, 0.25},
      {true, -10.0, {400, 800, 2500}, 0.28},  {true, 20.0, {500, 1700, 2500}, 0.22},
      {true, -5.0, {600, 1000, 2400}, 0.26},  {true, 5.0, {350, 1900, 2800}, 0.24},
      {false, 0.0, {2500, 4500, 6000}, 0.05}, {false, 0.0, {1500, 3500, 5500}, 0.08},
  };
  return classes;
}

inline constexpr std::size_t kFeatureDim = 8 + 3;  // one-hot class, pos in phone, duration, pos in utterance

struct CorpusConfig {
  std::size_t n_utterances = 20;
  int sample_rate = 16000;
  double frame_hop_s = 0.005;
  std::size_t envelope_bins = 33;
  std::size_t min_phones = 4, max_phones = 8;
  std::size_t min_phone_frames = 12, max_phone_frames = 30;
  double base_f0_hz = 120.0;
  double voiced_mvf_hz = 7800.0;
  double voiced_noise_rms = 0.0005;
  std::uint64_t seed = 42;
};

struct Utterance {
  std::string name;
  std::vector<std::size_t> phones, durations;  // class and frame count per phone
  Sequence features;                           // frames x kFeatureDim
  SpeechBuffer audio;
  ParameterTrack track;                        // analysis of `audio`
  std::vector<double> true_f0;                 // generator contour, Hz per frame
};

inline Sequence phone_features(const std::vector<std::size_t>& phones, const std::vector<std::size_t>& durations) {
  std::size_t total = 0;
  for (std::size_t d : durations) total += d;
  Sequence x = Sequence::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(kFeatureDim));
  Eigen::Index row = 0;
  for (std::size_t p = 0; p < phones.size(); ++p)
    for (std::size_t j = 0; j < durations[p]; ++j, ++row) {
      x(row, static_cast<Eigen::Index>(phones[p])) = 1.0;
      x(row, 8) = (static_cast<double>(j) + 0.5) / static_cast<double>(durations[p]);
      x(row, 9) = static_cast<double>(durations[p]) / 30.0;
      x(row, 10) = (static_cast<double>(row) + 0.5) / static_cast<double>(total);
    }
  return x;
}

// Resonance-shaped spectral weight, peak 1 at each formant.
inline double formant_gain(const PhoneClass& c, double f) {
  double g = 0.05;
  for (int i = 0; i < 3; ++i) {
    const double bw = 80.0 + 0.06 * c.formants_hz[i];
    const double d = (f - c.formants_hz[i]) / bw;
    g += std::pow(0.6, i) / (1.0 + d * d);
  }
  return g;
}

inline Utterance render_utterance(std::size_t index, const CorpusConfig& cfg) {
  const auto& classes = phone_classes();
  Rng rng(derive_seed(cfg.seed, index));
  Utterance u;
  u.name = "utt" + std::string(index < 10 ? "0" : "") + std::to_string(index);
  const std::size_t n_phones = cfg.min_phones + rng.below(cfg.max_phones - cfg.min_phones + 1);
  for (std::size_t p = 0; p < n_phones; ++p) {
    std::size_t c = rng.below(classes.size());
    // Keep the utterance edges voiced so every utterance has a pitch anchor.
    if ((p == 0 || p + 1 == n_phones) && !classes[c].voiced) c = rng.below(6);
    u.phones.push_back(c);
    u.durations.push_back(cfg.min_phone_frames + rng.below(cfg.max_phone_frames - cfg.min_phone_frames + 1));
  }
  u.features = phone_features(u.phones, u.durations);
  const auto n_frames = static_cast<std::size_t>(u.features.rows());

  // Frame-level generator parameters, smoothed over +-4 frames so phone
  // boundaries are gradual: f0 from class offset plus declination, and per
  // harmonic amplitudes from the class formants.
  const std::size_t hop = hop_samples_for(cfg.frame_hop_s, cfg.sample_rate);
  const auto k_max = static_cast<std::size_t>(cfg.voiced_mvf_hz / 60.0);
  std::vector<double> raw_f0(n_frames), raw_noise(n_frames);
  std::vector<std::size_t> cls(n_frames);
  for (std::size_t p = 0, f = 0; p < n_phones; ++p)
    for (std::size_t j = 0; j < u.durations[p]; ++j, ++f) {
      const PhoneClass& c = classes[u.phones[p]];
      cls[f] = u.phones[p];
      raw_f0[f] = cfg.base_f0_hz + c.f0_offset_hz - 20.0 * u.features(static_cast<Eigen::Index>(f), 10);
      raw_noise[f] = c.voiced ? cfg.voiced_noise_rms : c.level;
    }
  auto smooth = [n_frames](const std::vector<double>& v) {
    std::vector<double> out(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
      const std::size_t lo = f >= 4 ? f - 4 : 0, hi = std::min(n_frames - 1, f + 4);
      double s = 0.0;
      for (std::size_t g = lo; g <= hi; ++g) s += v[g];
      out[f] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
  };
  u.true_f0 = smooth(raw_f0);
  const auto noise_level = smooth(raw_noise);
  Eigen::MatrixXd amp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_frames), static_cast<Eigen::Index>(k_max));
  for (std::size_t f = 0; f < n_frames; ++f) {
    const PhoneClass& c = classes[cls[f]];
    if (!c.voiced) continue;
    for (std::size_t k = 1; k <= k_max; ++k) {
      const double fk = static_cast<double>(k) * u.true_f0[f];
      if (fk < cfg.voiced_mvf_hz) amp(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k - 1)) = c.level * formant_gain(c, fk);
    }
  }
  for (Eigen::Index k = 0; k < amp.cols(); ++k) {
    std::vector<double> col(amp.col(k).data(), amp.col(k).data() + amp.rows());
    const auto sm = smooth(col);
    for (std::size_t f = 0; f < n_frames; ++f) amp(static_cast<Eigen::Index>(f), k) = sm[f];
  }

  const std::size_t n = n_frames * hop;
  u.audio = SpeechBuffer{std::vector<double>(n, 0.0), cfg.sample_rate};
  Rng noise(derive_seed(cfg.seed, 1000 + index));
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t f = i / hop, g = std::min(f + 1, n_frames - 1);
    const double a = static_cast<double>(i % hop) / static_cast<double>(hop);
    const double f0 = (1.0 - a) * u.true_f0[f] + a * u.true_f0[g];
    phase += kTwoPi * f0 / cfg.sample_rate;
    double v = ((1.0 - a) * noise_level[f] + a * noise_level[g]) * noise.gaussian();
    for (Eigen::Index k = 0; k < amp.cols(); ++k) {
      const double ak = (1.0 - a) * amp(static_cast<Eigen::Index>(f), k) + a * amp(static_cast<Eigen::Index>(g), k);
      if (ak > 0.0) v += ak * std::cos(static_cast<double>(k + 1) * phase);
    }
    u.audio.samples[i] = v;
  }

  AnalysisConfig acfg;
  acfg.frame_hop_s = cfg.frame_hop_s;
  acfg.envelope.n_bins = cfg.envelope_bins;
  u.track = analyze(u.audio, acfg);
  return u;
}

inline std::vector<Utterance> make_corpus(const CorpusConfig& cfg = {}) {
  std::vector<Utterance> out;
  out.reserve(cfg.n_utterances);
  for (std::size_t i = 0; i < cfg.n_utterances; ++i) out.push_back(render_utterance(i, cfg));
  return out;
}

inline std::vector<TrainingPair> training_pairs(const std::vector<Utterance>& corpus) {
  std::vector<TrainingPair> out;
  for (const auto& u : corpus) out.push_back({u.features, track_to_targets(u.track)});
  return out;
}

}  // namespace csm::toy
