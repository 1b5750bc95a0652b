#pragma once
// Hybrid acoustic model: a tanh feed-forward stack, one bidirectional LSTM
// layer and a linear output, trained on per-utterance sequences with
// momentum SGD and backpropagation through time.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "csm/analysis.hpp"
#include "csm/error.hpp"
#include "csm/io.hpp"
#include "csm/random.hpp"
#include "csm/synthesis.hpp"

namespace csm {

// Sequences are frame-major: one row per frame.
using Sequence = Eigen::MatrixXd;

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
};

// Gate blocks stacked in the order input, forget, cell candidate, output.
struct LstmParams {
  Eigen::MatrixXd Wx;  // 4H x in
  Eigen::MatrixXd Wh;  // 4H x H
  Eigen::VectorXd b;   // 4H
};

struct NetworkDims {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{64, 64, 64, 64};
  std::size_t lstm_dim = 32;  // per direction
  std::size_t output_dim = 0;
};

struct NetworkModel {
  NetworkDims dims;
  std::vector<DenseLayer> ff;
  LstmParams fwd, bwd;
  Eigen::MatrixXd Wy_fwd, Wy_bwd;  // out x H
  Eigen::VectorXd by;

  // Visits every parameter block in checkpoint order.
  template <class F>
  void for_each_param(F&& f) {
    for (auto& l : ff) {
      f(l.W);
      f(l.b);
    }
    for (LstmParams* p : {&fwd, &bwd}) {
      f(p->Wx);
      f(p->Wh);
      f(p->b);
    }
    f(Wy_fwd);
    f(Wy_bwd);
    f(by);
  }
  template <class F>
  void for_each_param(F&& f) const {
    const_cast<NetworkModel*>(this)->for_each_param([&](auto& m) { f(std::as_const(m)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_param([&](const auto& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  void validate() const {
    if (dims.input_dim == 0 || dims.output_dim == 0 || dims.lstm_dim == 0)
      throw ShapeError("NetworkModel: dimensions must be positive");
    if (ff.size() != dims.hidden_dims.size()) throw ShapeError("NetworkModel: feed-forward layer count mismatch");
    auto in = static_cast<Eigen::Index>(dims.input_dim);
    for (std::size_t l = 0; l < ff.size(); ++l) {
      const auto out = static_cast<Eigen::Index>(dims.hidden_dims[l]);
      if (ff[l].W.rows() != out || ff[l].W.cols() != in || ff[l].b.size() != out)
        throw ShapeError("NetworkModel: feed-forward layer " + std::to_string(l) + " has inconsistent shape");
      in = out;
    }
    const auto H = static_cast<Eigen::Index>(dims.lstm_dim);
    for (const LstmParams* p : {&fwd, &bwd})
      if (p->Wx.rows() != 4 * H || p->Wx.cols() != in || p->Wh.rows() != 4 * H || p->Wh.cols() != H ||
          p->b.size() != 4 * H)
        throw ShapeError("NetworkModel: LSTM parameters have inconsistent shape");
    const auto O = static_cast<Eigen::Index>(dims.output_dim);
    if (Wy_fwd.rows() != O || Wy_fwd.cols() != H || Wy_bwd.rows() != O || Wy_bwd.cols() != H || by.size() != O)
      throw ShapeError("NetworkModel: output layer has inconsistent shape");
    bool finite = true;
    for_each_param([&](const auto& m) { finite = finite && m.allFinite(); });
    if (!finite) throw NumericalError("NetworkModel: non-finite parameter");
  }
};

inline std::size_t parameter_count(const NetworkDims& d) {
  std::size_t n = 0, in = d.input_dim;
  for (std::size_t h : d.hidden_dims) {
    n += h * in + h;
    in = h;
  }
  const std::size_t H = d.lstm_dim;
  n += 2 * (4 * H * in + 4 * H * H + 4 * H);
  return n + 2 * d.output_dim * H + d.output_dim;
}

inline NetworkModel make_model(const NetworkDims& dims, double init_range = 0.0, std::uint64_t seed = 42) {
  NetworkModel m;
  m.dims = dims;
  auto in = static_cast<Eigen::Index>(dims.input_dim);
  for (std::size_t h : dims.hidden_dims) {
    const auto out = static_cast<Eigen::Index>(h);
    m.ff.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    in = out;
  }
  const auto H = static_cast<Eigen::Index>(dims.lstm_dim);
  for (LstmParams* p : {&m.fwd, &m.bwd}) {
    p->Wx = Eigen::MatrixXd::Zero(4 * H, in);
    p->Wh = Eigen::MatrixXd::Zero(4 * H, H);
    p->b = Eigen::VectorXd::Zero(4 * H);
  }
  const auto O = static_cast<Eigen::Index>(dims.output_dim);
  m.Wy_fwd = Eigen::MatrixXd::Zero(O, H);
  m.Wy_bwd = Eigen::MatrixXd::Zero(O, H);
  m.by = Eigen::VectorXd::Zero(O);
  if (init_range > 0.0) {
    Rng rng(seed);
    m.for_each_param([&](auto& a) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-init_range, init_range);
    });
  }
  m.validate();
  return m;
}

// Small nonzero start: uniform in [-0.08, 0.08].
inline constexpr double kInitRange = 0.08;

// Flat views of every parameter block, in checkpoint order.
inline std::vector<std::span<double>> parameter_spans(NetworkModel& m) {
  std::vector<std::span<double>> out;
  m.for_each_param([&](auto& a) { out.emplace_back(a.data(), static_cast<std::size_t>(a.size())); });
  return out;
}

// Same shapes, all zero; used as the gradient container.
inline NetworkModel zeros_like(const NetworkModel& m) {
  NetworkModel z = m;
  z.for_each_param([](auto& a) { a.setZero(); });
  return z;
}

namespace detail {

// Zeroes `grad` in place when it already has the shapes of `m`, so spans
// into it stay valid across calls; otherwise rebuilds it.
inline void reset_like(NetworkModel& grad, const NetworkModel& m) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> want, have;
  m.for_each_param([&](const auto& a) { want.emplace_back(a.rows(), a.cols()); });
  grad.for_each_param([&](const auto& a) { have.emplace_back(a.rows(), a.cols()); });
  if (want == have)
    grad.for_each_param([](auto& a) { a.setZero(); });
  else
    grad = zeros_like(m);
}

}  // namespace detail

// (e^{2x} - 1) / (e^{2x} + 1), written to stay finite for large |x|.
inline double tanh_act(double x) {
  if (x > 20.0) return 1.0;
  if (x < -20.0) return -1.0;
  const double e = std::exp(2.0 * x);
  return (e - 1.0) / (e + 1.0);
}

inline double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// ---------------------------------------------------------------------------
// Forward pass with everything backward() needs.

struct LstmCache {
  Eigen::MatrixXd i, f, g, o, c, h;  // H x T each
};

struct ForwardCache {
  std::vector<Eigen::MatrixXd> act;  // act[0] = input (D x T), act[l+1] = tanh layer l
  LstmCache fwd, bwd;
  Eigen::MatrixXd y;  // O x T
};

namespace detail {

inline LstmCache run_lstm(const LstmParams& p, const Eigen::MatrixXd& u, bool reverse) {
  const Eigen::Index H = p.Wh.cols(), T = u.cols();
  LstmCache c;
  for (Eigen::MatrixXd* m : {&c.i, &c.f, &c.g, &c.o, &c.c, &c.h}) m->resize(H, T);
  const Eigen::MatrixXd pre_x = (p.Wx * u).colwise() + p.b;
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(H), c_prev = Eigen::VectorXd::Zero(H);
  for (Eigen::Index s = 0; s < T; ++s) {
    const Eigen::Index t = reverse ? T - 1 - s : s;
    const Eigen::VectorXd z = pre_x.col(t) + p.Wh * h_prev;
    for (Eigen::Index k = 0; k < H; ++k) {
      c.i(k, t) = sigmoid(z(k));
      c.f(k, t) = sigmoid(z(H + k));
      c.g(k, t) = tanh_act(z(2 * H + k));
      c.o(k, t) = sigmoid(z(3 * H + k));
      c.c(k, t) = c.f(k, t) * c_prev(k) + c.i(k, t) * c.g(k, t);
      c.h(k, t) = c.o(k, t) * tanh_act(c.c(k, t));
    }
    h_prev = c.h.col(t);
    c_prev = c.c.col(t);
  }
  return c;
}

}  // namespace detail

inline ForwardCache forward_cached(const NetworkModel& m, const Sequence& x) {
  if (x.cols() != static_cast<Eigen::Index>(m.dims.input_dim))
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " dims, model expects " +
                     std::to_string(m.dims.input_dim));
  ForwardCache fc;
  fc.act.push_back(x.transpose());
  for (const auto& l : m.ff) {
    Eigen::MatrixXd z = (l.W * fc.act.back()).colwise() + l.b;
    fc.act.push_back(z.unaryExpr([](double v) { return tanh_act(v); }));
  }
  fc.fwd = detail::run_lstm(m.fwd, fc.act.back(), false);
  fc.bwd = detail::run_lstm(m.bwd, fc.act.back(), true);
  fc.y = (m.Wy_fwd * fc.fwd.h + m.Wy_bwd * fc.bwd.h).colwise() + m.by;
  return fc;
}

inline Sequence forward(const NetworkModel& m, const Sequence& x) { return forward_cached(m, x).y.transpose(); }

inline double mse_loss(const Sequence& y, const Sequence& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) throw ShapeError("mse_loss: shapes differ");
  if (y.size() == 0) throw ShapeError("mse_loss: empty sequences");
  return (y - y_hat).squaredNorm() / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Backpropagation through time

namespace detail {

// dh: H x T gradient arriving at the hidden states from the output layer.
inline Eigen::MatrixXd lstm_backward(const LstmParams& p, const LstmCache& c, const Eigen::MatrixXd& u,
                                     const Eigen::MatrixXd& dh, bool reverse, LstmParams& grad) {
  const Eigen::Index H = p.Wh.cols(), T = u.cols();
  Eigen::MatrixXd dz(4 * H, T);
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H), dc_next = Eigen::VectorXd::Zero(H);
  for (Eigen::Index s = 0; s < T; ++s) {
    // Walk against the direction the state was computed in.
    const Eigen::Index t = reverse ? s : T - 1 - s;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    const bool has_prev = reverse ? prev < T : prev >= 0;
    const Eigen::VectorXd dht = dh.col(t) + dh_next;
    for (Eigen::Index k = 0; k < H; ++k) {
      const double tc = tanh_act(c.c(k, t));
      const double dc = dht(k) * c.o(k, t) * (1.0 - tc * tc) + dc_next(k);
      const double cp = has_prev ? c.c(k, prev) : 0.0;
      dz(k, t) = dc * c.g(k, t) * c.i(k, t) * (1.0 - c.i(k, t));
      dz(H + k, t) = dc * cp * c.f(k, t) * (1.0 - c.f(k, t));
      dz(2 * H + k, t) = dc * c.i(k, t) * (1.0 - c.g(k, t) * c.g(k, t));
      dz(3 * H + k, t) = dht(k) * tc * c.o(k, t) * (1.0 - c.o(k, t));
      dc_next(k) = dc * c.f(k, t);
    }
    dh_next = p.Wh.transpose() * dz.col(t);
    if (has_prev) grad.Wh += dz.col(t) * c.h.col(prev).transpose();
  }
  grad.Wx += dz * u.transpose();
  grad.b += dz.rowwise().sum();
  return p.Wx.transpose() * dz;
}

}  // namespace detail

// Gradient of mse_loss(forward(m, x), y) for every parameter; returns the loss.
inline double backward(const NetworkModel& m, const Sequence& x, const Sequence& y, NetworkModel& grad) {
  const auto fc = forward_cached(m, x);
  if (y.rows() != x.rows() || y.cols() != static_cast<Eigen::Index>(m.dims.output_dim))
    throw ShapeError("backward: target shape does not match the model output");
  detail::reset_like(grad, m);
  const Eigen::MatrixXd diff = fc.y - y.transpose();
  const double n = static_cast<double>(diff.size());
  const Eigen::MatrixXd dy = (2.0 / n) * diff;

  grad.Wy_fwd = dy * fc.fwd.h.transpose();
  grad.Wy_bwd = dy * fc.bwd.h.transpose();
  grad.by = dy.rowwise().sum();
  const Eigen::MatrixXd& u = fc.act.back();
  Eigen::MatrixXd da = detail::lstm_backward(m.fwd, fc.fwd, u, m.Wy_fwd.transpose() * dy, false, grad.fwd);
  da += detail::lstm_backward(m.bwd, fc.bwd, u, m.Wy_bwd.transpose() * dy, true, grad.bwd);

  for (std::size_t l = m.ff.size(); l-- > 0;) {
    const Eigen::MatrixXd& a = fc.act[l + 1];
    const Eigen::MatrixXd dz = da.array() * (1.0 - a.array().square());
    grad.ff[l].W = dz * fc.act[l].transpose();
    grad.ff[l].b = dz.rowwise().sum();
    da = m.ff[l].W.transpose() * dz;
  }
  return diff.squaredNorm() / n;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 0.002;
  double momentum = 0.3;
  double momentum_late = 0.9;
  int momentum_switch_epoch = 10;  // momentum_late from the following epoch
  int halving_start_epoch = 15;    // learning rate halves every epoch after this one
  int epochs = 100;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw DomainError("TrainConfig: learning_rate must be >= 0");
    for (double mu : {momentum, momentum_late})
      if (!(mu >= 0.0 && mu < 1.0)) throw DomainError("TrainConfig: momentum must lie in [0, 1)");
    if (epochs < 1) throw DomainError("TrainConfig: epochs must be >= 1");
    if (momentum_switch_epoch < 0 || halving_start_epoch < 0)
      throw DomainError("TrainConfig: schedule epochs must be >= 0");
  }
  // Epochs count from 1.
  double lr_at(int epoch) const {
    const int halvings = std::max(0, epoch - halving_start_epoch);
    return learning_rate * std::ldexp(1.0, -halvings);
  }
  double momentum_at(int epoch) const { return epoch > momentum_switch_epoch ? momentum_late : momentum; }
};

struct EpochLog {
  int epoch;
  double learning_rate;
  double momentum;
  double train_loss;    // mean per-utterance loss during the epoch
  double heldout_loss;  // NaN when no held-out set is given
};

struct TrainingPair {
  Sequence x, y;
};

struct TrainResult {
  NetworkModel model;
  std::vector<EpochLog> log;
};

inline double mean_loss(const NetworkModel& m, const std::vector<TrainingPair>& data) {
  double acc = 0.0;
  for (const auto& p : data) acc += mse_loss(forward(m, p.x), p.y);
  return data.empty() ? std::nan("") : acc / static_cast<double>(data.size());
}

// One momentum-SGD step per utterance, in an order shuffled from the seed.
inline TrainResult train(NetworkModel model, const std::vector<TrainingPair>& data, const TrainConfig& cfg,
                         const std::vector<TrainingPair>& heldout = {},
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  model.validate();
  if (data.empty()) throw PreconditionError("train: empty dataset");
  for (std::size_t u = 0; u < data.size(); ++u) {
    const auto& p = data[u];
    if (p.x.rows() == 0 || p.x.rows() != p.y.rows() || p.x.cols() != static_cast<Eigen::Index>(model.dims.input_dim) ||
        p.y.cols() != static_cast<Eigen::Index>(model.dims.output_dim))
      throw ShapeError("train: utterance " + std::to_string(u) + " does not match the model dimensions");
  }
  Rng rng(cfg.seed);
  NetworkModel velocity = zeros_like(model), grad = zeros_like(model);
  const auto theta = parameter_spans(model), vel = parameter_spans(velocity), g = parameter_spans(grad);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult res;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch), mu = cfg.momentum_at(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    for (std::size_t idx : order) {
      const double loss = backward(model, data[idx].x, data[idx].y, grad);
      if (!std::isfinite(loss))
        throw NumericalError("train: loss became non-finite at epoch " + std::to_string(epoch) + ", utterance " +
                             std::to_string(idx));
      total += loss;
      // v <- mu v - lr g; theta <- theta + v
      for (std::size_t b = 0; b < theta.size(); ++b)
        for (std::size_t k = 0; k < theta[b].size(); ++k) {
          vel[b][k] = mu * vel[b][k] - lr * g[b][k];
          theta[b][k] += vel[b][k];
        }
    }
    EpochLog entry{epoch, lr, mu, total / static_cast<double>(data.size()),
                   heldout.empty() ? std::nan("") : mean_loss(model, heldout)};
    res.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  res.model = std::move(model);
  return res;
}

// ---------------------------------------------------------------------------
// Feature and target layout

// Per-dimension z-scoring fitted on training data. Dimensions with (near)
// zero spread keep unit scale.
struct Standardizer {
  Eigen::VectorXd mean, scale;

  static Standardizer fit(const std::vector<const Sequence*>& seqs) {
    if (seqs.empty() || seqs.front()->cols() == 0) throw PreconditionError("Standardizer: no data");
    const Eigen::Index d = seqs.front()->cols();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sq = Eigen::VectorXd::Zero(d);
    double n = 0.0;
    for (const Sequence* s : seqs) {
      if (s->cols() != d) throw ShapeError("Standardizer: sequences differ in dimension");
      sum += s->colwise().sum().transpose();
      sq += s->array().square().colwise().sum().matrix().transpose();
      n += static_cast<double>(s->rows());
    }
    Standardizer z;
    z.mean = sum / n;
    z.scale = (sq / n - z.mean.cwiseProduct(z.mean)).cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index j = 0; j < d; ++j)
      if (!(z.scale(j) > 1e-8)) z.scale(j) = 1.0;
    return z;
  }
  static Standardizer identity(std::size_t d) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)), Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d))};
  }
  Sequence apply(const Sequence& s) const {
    return (s.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
  Sequence invert(const Sequence& s) const {
    return (s.array().rowwise() * scale.transpose().array()).matrix().rowwise() + mean.transpose();
  }
};

// A trained network together with the input and output scalings.
struct AcousticModel {
  NetworkModel net;
  Standardizer input, output;

  void validate() const {
    net.validate();
    if (input.mean.size() != static_cast<Eigen::Index>(net.dims.input_dim) || input.scale.size() != input.mean.size() ||
        output.mean.size() != static_cast<Eigen::Index>(net.dims.output_dim) || output.scale.size() != output.mean.size())
      throw ShapeError("AcousticModel: standardizer dimensions do not match the network");
  }
};

// Output layout: dim 0 log f0, dim 1 log MVF, dims 2.. envelope (dB).
// Unvoiced frames are encoded with MVF = f0 so the harmonic count of the
// decoded frame is zero; voicing is recovered from that on the way back.
inline Sequence track_to_targets(const ParameterTrack& t) {
  t.validate();
  const auto n = static_cast<Eigen::Index>(t.n_frames());
  Sequence y(n, 2 + t.envelope.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double f0 = t.f0.values[k];
    y(i, 0) = std::log(f0);
    y(i, 1) = std::log(t.f0.voicing[k] ? std::max(t.mvf[k], 2.0 * f0) : f0);
    y.row(i).tail(t.envelope.cols()) = t.envelope.row(i);
  }
  return y;
}

inline ParameterTrack targets_to_track(const Sequence& y, double frame_hop, int sample_rate) {
  if (y.cols() < 4) throw ShapeError("targets_to_track: need log-f0, log-MVF and at least 2 envelope bins");
  if (!(frame_hop > 0.0) || sample_rate <= 0) throw DomainError("targets_to_track: bad frame hop or sample rate");
  const double nyq = 0.5 * sample_rate;
  ParameterTrack t;
  t.frame_hop = frame_hop;
  t.sample_rate = sample_rate;
  t.f0.frame_hop = frame_hop;
  const auto n = static_cast<std::size_t>(y.rows());
  t.f0.values.resize(n);
  t.f0.voicing.resize(n);
  t.mvf.resize(n);
  t.envelope = y.rightCols(y.cols() - 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double f0 = std::clamp(std::isfinite(y(r, 0)) ? std::exp(y(r, 0)) : kF0Min, kF0Min, kF0Max);
    const double mvf = std::clamp(std::isfinite(y(r, 1)) ? std::exp(y(r, 1)) : f0, kF0Min, nyq);
    t.f0.values[i] = f0;
    t.mvf[i] = mvf;
    t.f0.voicing[i] = harmonic_count(f0, mvf, true) > 0;
  }
  const double floor_db = amp_to_db(kAmplitudeFloor);
  t.envelope = t.envelope.unaryExpr([&](double v) { return std::isfinite(v) ? std::clamp(v, floor_db, 60.0) : floor_db; });
  t.validate();
  return t;
}

inline ParameterTrack predict_track(const AcousticModel& model, const Sequence& features, double frame_hop,
                                    int sample_rate) {
  model.validate();
  if (features.cols() != static_cast<Eigen::Index>(model.net.dims.input_dim))
    throw ShapeError("predict_track: feature dimension " + std::to_string(features.cols()) + " does not match model input " +
                     std::to_string(model.net.dims.input_dim));
  const Sequence y = model.output.invert(forward(model.net, model.input.apply(features)));
  return targets_to_track(y, frame_hop, sample_rate);
}

// Standardizes the inputs (and optionally the targets) on the training set,
// then trains. Logged losses are in the units the network sees, so with
// standardized targets they are relative to unit variance.
struct AcousticTraining {
  AcousticModel model;
  std::vector<EpochLog> log;
};

inline AcousticTraining train_acoustic_model(const std::vector<TrainingPair>& data, NetworkDims shape,
                                             const TrainConfig& cfg, double init_range = kInitRange,
                                             bool standardize_targets = false,
                                             const std::vector<TrainingPair>& heldout = {},
                                             const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (data.empty()) throw PreconditionError("train: empty dataset");
  std::vector<const Sequence*> xs, ys;
  for (const auto& p : data) {
    xs.push_back(&p.x);
    ys.push_back(&p.y);
  }
  shape.input_dim = static_cast<std::size_t>(data.front().x.cols());
  shape.output_dim = static_cast<std::size_t>(data.front().y.cols());
  AcousticModel am;
  am.input = Standardizer::fit(xs);
  am.output = standardize_targets ? Standardizer::fit(ys) : Standardizer::identity(shape.output_dim);
  auto scaled = [&](const std::vector<TrainingPair>& set) {
    std::vector<TrainingPair> out;
    out.reserve(set.size());
    for (const auto& p : set) {
      if (p.x.cols() != xs.front()->cols() || p.y.cols() != ys.front()->cols())
        throw ShapeError("train: utterances differ in feature or target dimension");
      out.push_back({am.input.apply(p.x), am.output.apply(p.y)});
    }
    return out;
  };
  auto result = train(make_model(shape, init_range, cfg.seed), scaled(data), cfg, scaled(heldout), on_epoch);
  am.net = std::move(result.model);
  return {std::move(am), std::move(result.log)};
}

// ---------------------------------------------------------------------------
// Checkpoint
//
// "CSMN", u32 version, u32 input_dim, u32 n_hidden, u32 hidden_dims[n_hidden],
// u32 lstm_dim, u32 output_dim, then every parameter as f64 little-endian in
// for_each_param order (FF W then b per layer; forward Wx, Wh, b; backward
// Wx, Wh, b; Wy_fwd, Wy_bwd, by; matrices column-major), then input mean,
// input scale, output mean, output scale.

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<unsigned char> encode_checkpoint(const AcousticModel& am) {
  am.validate();
  const auto& d = am.net.dims;
  ByteWriter w;
  w.bytes("CSMN");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(d.input_dim));
  w.u32(static_cast<std::uint32_t>(d.hidden_dims.size()));
  for (std::size_t h : d.hidden_dims) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(d.lstm_dim));
  w.u32(static_cast<std::uint32_t>(d.output_dim));
  am.net.for_each_param([&](const auto& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) w.f64(a.data()[i]);
  });
  for (const Eigen::VectorXd* v : {&am.input.mean, &am.input.scale, &am.output.mean, &am.output.scale})
    for (double x : *v) w.f64(x);
  return std::move(w).take();
}

inline AcousticModel decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& origin = "checkpoint") {
  ByteReader r(bytes, origin);
  if (r.bytes(4) != "CSMN") r.fail("not a model checkpoint (bad magic)");
  if (const auto v = r.u32(); v != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(v));
  NetworkDims d;
  d.input_dim = r.u32();
  const std::uint32_t n_hidden = r.u32();
  if (n_hidden > 64) r.fail("implausible layer count");
  d.hidden_dims.resize(n_hidden);
  for (auto& h : d.hidden_dims) h = r.u32();
  d.lstm_dim = r.u32();
  d.output_dim = r.u32();
  if (d.input_dim == 0 || d.output_dim == 0 || d.lstm_dim == 0) r.fail("zero network dimension");
  for (std::size_t h : d.hidden_dims)
    if (h == 0) r.fail("zero network dimension");
  if (r.remaining() / 8 != parameter_count(d) + 2 * (d.input_dim + d.output_dim) || r.remaining() % 8 != 0)
    r.fail("size does not match the declared dimensions");
  AcousticModel am;
  am.net = make_model(d, 0.0);
  am.net.for_each_param([&](auto& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = r.f64();
  });
  am.input = Standardizer::identity(d.input_dim);
  am.output = Standardizer::identity(d.output_dim);
  for (Eigen::VectorXd* v : {&am.input.mean, &am.input.scale, &am.output.mean, &am.output.scale})
    for (double& x : *v) x = r.f64();
  try {
    am.validate();
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
  if (!am.input.scale.allFinite() || !am.output.scale.allFinite() || am.input.scale.minCoeff() <= 0.0 ||
      am.output.scale.minCoeff() <= 0.0 || !am.input.mean.allFinite() || !am.output.mean.allFinite())
    r.fail("invalid standardizer");
  return am;
}

inline void save_checkpoint(const std::filesystem::path& path, const AcousticModel& am) {
  write_file_atomic(path, encode_checkpoint(am));
}

inline AcousticModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

}  // namespace csm
