// Copyright 2026 The ibcomm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Q-network with a stochastic information-bottleneck layer.
//
//   x --dense+ReLU--> h --(mu head, logvar head)--> z = mu + exp(logvar/2)*eps
//     --dense--> q
//
// The KL term against a standard-normal prior regularizes (mu, logvar).
// Gradients are written by hand; every layer is templated on the scalar type
// so the same code can be evaluated in extended precision for gradient
// checking.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibcomm/rng.hpp"

namespace ibcomm {

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

template <typename T>
struct BasicDenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<T> weights;  // row-major, out x in
  std::vector<T> biases;

  BasicDenseLayer() = default;
  BasicDenseLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weights(in_dim * out_dim, T(0)),
        biases(out_dim, T(0)) {}

  T& w(std::size_t row, std::size_t col) { return weights[row * in + col]; }
  const T& w(std::size_t row, std::size_t col) const {
    return weights[row * in + col];
  }

  // y = W x + b
  void apply(std::span<const T> x, std::span<T> y) const {
    for (std::size_t r = 0; r < out; ++r) {
      const T* row = weights.data() + r * in;
      T acc = biases[r];
      for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
  }

  // Accumulates dW += dy x^T, db += dy into `grad` and, when dx is non-empty,
  // writes dx = W^T dy.
  void backprop(std::span<const T> x, std::span<const T> dy,
                BasicDenseLayer& grad, std::span<T> dx) const {
    for (std::size_t r = 0; r < out; ++r) {
      const T g = dy[r];
      grad.biases[r] += g;
      if (g == T(0)) continue;
      T* grow = grad.weights.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) grow[c] += g * x[c];
    }
    if (dx.empty()) return;
    std::fill(dx.begin(), dx.end(), T(0));
    for (std::size_t r = 0; r < out; ++r) {
      const T g = dy[r];
      if (g == T(0)) continue;
      const T* row = weights.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) dx[c] += g * row[c];
    }
  }

  bool same_shape(const BasicDenseLayer& o) const {
    return in == o.in && out == o.out;
  }
};

template <typename T>
struct BasicQNetwork {
  BasicDenseLayer<T> encoder;      // obs -> hidden, ReLU
  BasicDenseLayer<T> mu_head;      // hidden -> bottleneck
  BasicDenseLayer<T> logvar_head;  // hidden -> bottleneck
  BasicDenseLayer<T> head;         // bottleneck -> actions

  BasicQNetwork() = default;
  BasicQNetwork(std::size_t obs_dim, std::size_t hidden_dim,
                std::size_t bottleneck_dim, std::size_t num_actions)
      : encoder(obs_dim, hidden_dim),
        mu_head(hidden_dim, bottleneck_dim),
        logvar_head(hidden_dim, bottleneck_dim),
        head(bottleneck_dim, num_actions) {}

  std::size_t obs_dim() const { return encoder.in; }
  std::size_t hidden_dim() const { return encoder.out; }
  std::size_t bottleneck_dim() const { return mu_head.out; }
  std::size_t num_actions() const { return head.out; }

  // Visits (weights, biases) of every layer in a fixed order.
  template <typename F>
  void for_each_block(F&& f) {
    for (auto* l : {&encoder, &mu_head, &logvar_head, &head}) {
      f(std::span<T>(l->weights));
      f(std::span<T>(l->biases));
    }
  }
  template <typename F>
  void for_each_block(F&& f) const {
    for (auto* l : {&encoder, &mu_head, &logvar_head, &head}) {
      f(std::span<const T>(l->weights));
      f(std::span<const T>(l->biases));
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_block([&](std::span<const T> b) { n += b.size(); });
    return n;
  }

  bool same_shape(const BasicQNetwork& o) const {
    return encoder.same_shape(o.encoder) && mu_head.same_shape(o.mu_head) &&
           logvar_head.same_shape(o.logvar_head) && head.same_shape(o.head);
  }

  // Same shape, all parameters zero. Used as a gradient or moment container.
  BasicQNetwork zeros_like() const {
    return BasicQNetwork(obs_dim(), hidden_dim(), bottleneck_dim(),
                         num_actions());
  }

  template <typename U>
  BasicQNetwork<U> cast() const {
    BasicQNetwork<U> r(obs_dim(), hidden_dim(), bottleneck_dim(), num_actions());
    std::vector<std::span<const T>> src;
    for_each_block([&](std::span<const T> b) { src.push_back(b); });
    std::size_t k = 0;
    r.for_each_block([&](std::span<U> b) {
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<U>(src[k][i]);
      ++k;
    });
    return r;
  }

  friend bool operator==(const BasicQNetwork& a, const BasicQNetwork& b) {
    if (!a.same_shape(b)) return false;
    bool eq = true;
    std::vector<std::span<const T>> blocks;
    a.for_each_block([&](std::span<const T> s) { blocks.push_back(s); });
    std::size_t k = 0;
    b.for_each_block([&](std::span<const T> s) {
      eq = eq && std::equal(s.begin(), s.end(), blocks[k++].begin());
    });
    return eq;
  }
};

using DenseLayer = BasicDenseLayer<double>;
using QNetwork = BasicQNetwork<double>;

// Glorot-uniform weights on +-sqrt(6 / (fan_in + fan_out)); zero biases.
inline void glorot_init(DenseLayer& layer, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
  for (double& w : layer.weights) w = (2.0 * uniform01(rng) - 1.0) * limit;
  std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
}

inline QNetwork make_qnetwork(std::size_t obs_dim, std::size_t hidden_dim,
                              std::size_t bottleneck_dim, std::size_t num_actions,
                              Rng& rng) {
  QNetwork net(obs_dim, hidden_dim, bottleneck_dim, num_actions);
  glorot_init(net.encoder, rng);
  glorot_init(net.mu_head, rng);
  glorot_init(net.logvar_head, rng);
  glorot_init(net.head, rng);
  return net;
}

// Intermediates of one forward pass.
template <typename T>
struct BasicForwardCache {
  std::vector<T> input;
  std::vector<T> hidden_pre;
  std::vector<T> hidden;
  std::vector<T> mu;
  std::vector<T> logvar_raw;
  std::vector<T> logvar;  // clamped
  std::vector<T> noise;
  std::vector<T> z;
  std::vector<T> q;
};
using ForwardCache = BasicForwardCache<double>;

// Forward pass with an explicit noise vector. noise = 0 gives the
// deterministic (evaluation-mode) output z = mu.
template <typename T>
const std::vector<T>& forward(const BasicQNetwork<T>& net,
                              std::span<const T> obs, std::span<const T> noise,
                              BasicForwardCache<T>& c) {
  if (obs.size() != net.obs_dim()) {
    throw std::invalid_argument("observation has " + std::to_string(obs.size()) +
                                " dims, network expects " +
                                std::to_string(net.obs_dim()));
  }
  if (noise.size() != net.bottleneck_dim()) {
    throw std::invalid_argument("noise dimension mismatch");
  }
  for (T v : obs) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw std::invalid_argument("non-finite observation");
    }
  }
  const std::size_t h = net.hidden_dim();
  const std::size_t b = net.bottleneck_dim();
  c.input.assign(obs.begin(), obs.end());
  c.noise.assign(noise.begin(), noise.end());
  c.hidden_pre.resize(h);
  c.hidden.resize(h);
  c.mu.resize(b);
  c.logvar_raw.resize(b);
  c.logvar.resize(b);
  c.z.resize(b);
  c.q.resize(net.num_actions());

  net.encoder.apply(c.input, c.hidden_pre);
  for (std::size_t i = 0; i < h; ++i) c.hidden[i] = std::max(c.hidden_pre[i], T(0));
  net.mu_head.apply(c.hidden, c.mu);
  net.logvar_head.apply(c.hidden, c.logvar_raw);
  for (std::size_t i = 0; i < b; ++i) {
    c.logvar[i] = std::clamp(c.logvar_raw[i], T(kLogvarMin), T(kLogvarMax));
    c.z[i] = c.mu[i] + std::exp(c.logvar[i] / T(2)) * c.noise[i];
  }
  net.head.apply(c.z, c.q);
  return c.q;
}

template <typename T>
BasicForwardCache<T> forward(const BasicQNetwork<T>& net, std::span<const T> obs,
                             std::span<const T> noise) {
  BasicForwardCache<T> c;
  forward(net, obs, noise, c);
  return c;
}

// Deterministic Q-values (noise = 0).
inline std::vector<double> q_values(const QNetwork& net, std::span<const double> obs) {
  const std::vector<double> zero(net.bottleneck_dim(), 0.0);
  ForwardCache c;
  return forward<double>(net, obs, zero, c);
}

// KL(N(mu, exp(logvar)) || N(0, I)) = 0.5 * sum(mu^2 + e^logvar - logvar - 1).
template <typename T>
T kl_standard_normal(std::span<const T> mu, std::span<const T> logvar) {
  if (mu.size() != logvar.size()) {
    throw std::invalid_argument("mu/logvar length mismatch");
  }
  T kl = T(0);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    kl += mu[i] * mu[i] + std::exp(logvar[i]) - logvar[i] - T(1);
  }
  return kl / T(2);
}

// Backpropagates one sample. `dq` is dLoss/dq; `kl_weight` multiplies this
// sample's KL term in the loss. Gradients are accumulated into `grads`.
template <typename T>
void backward(const BasicQNetwork<T>& net, const BasicForwardCache<T>& c,
              std::span<const T> dq, T kl_weight, BasicQNetwork<T>& grads) {
  if (dq.size() != net.num_actions() || c.q.size() != net.num_actions() ||
      c.z.size() != net.bottleneck_dim() || !grads.same_shape(net)) {
    throw std::invalid_argument("backward: cache or gradient shape mismatch");
  }
  const std::size_t h = net.hidden_dim();
  const std::size_t b = net.bottleneck_dim();
  std::vector<T> dz(b), dmu(b), dlogvar(b), dh(h), dtmp(h);

  net.head.backprop(c.z, dq, grads.head, dz);
  for (std::size_t i = 0; i < b; ++i) {
    const T sd = std::exp(c.logvar[i] / T(2));
    dmu[i] = dz[i] + kl_weight * c.mu[i];
    T dlv = dz[i] * c.noise[i] * sd / T(2) +
            kl_weight * (std::exp(c.logvar[i]) - T(1)) / T(2);
    // Clamp passes gradient only strictly inside its range.
    if (c.logvar_raw[i] <= T(kLogvarMin) || c.logvar_raw[i] >= T(kLogvarMax)) {
      dlv = T(0);
    }
    dlogvar[i] = dlv;
  }
  net.mu_head.backprop(c.hidden, dmu, grads.mu_head, dh);
  net.logvar_head.backprop(c.hidden, dlogvar, grads.logvar_head, dtmp);
  for (std::size_t i = 0; i < h; ++i) {
    dh[i] = c.hidden_pre[i] > T(0) ? dh[i] + dtmp[i] : T(0);
  }
  net.encoder.backprop(c.input, dh, grads.encoder, std::span<T>());
}

struct TdLossResult {
  double loss = 0.0;
  std::vector<double> td_errors;  // Q(s,a) - target, signed
};

// Importance-weighted mean squared TD error over the batch.
inline TdLossResult td_loss(std::span<const std::vector<double>> batch_q,
                            std::span<const int> actions,
                            std::span<const double> targets,
                            std::span<const double> is_weights) {
  const std::size_t n = batch_q.size();
  if (actions.size() != n || targets.size() != n || is_weights.size() != n) {
    throw std::invalid_argument("td_loss: batch length mismatch");
  }
  TdLossResult r;
  r.td_errors.resize(n);
  if (n == 0) return r;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = static_cast<std::size_t>(actions[i]);
    if (a >= batch_q[i].size()) throw std::out_of_range("td_loss: action index");
    const double e = batch_q[i][a] - targets[i];
    r.td_errors[i] = e;
    r.loss += is_weights[i] * e * e;
  }
  r.loss /= static_cast<double>(n);
  return r;
}

struct LossBreakdown {
  double td_loss = 0.0;
  double kl_loss = 0.0;
  double beta = 0.0;
  double total = 0.0;
};

inline LossBreakdown total_loss(double td, double kl, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  return LossBreakdown{td, kl, beta, td + beta * kl};
}

struct BatchLossResult {
  LossBreakdown loss;
  std::vector<double> td_errors;
};

// Full training objective on a batch:
//   mean_i w_i (Q(s_i, a_i) - y_i)^2 + beta * mean_i KL_i
// with fixed per-sample noise vectors. Gradients are accumulated into `grads`.
inline BatchLossResult batch_loss_and_gradients(
    const QNetwork& net, std::span<const std::vector<double>> inputs,
    std::span<const std::vector<double>> noises, std::span<const int> actions,
    std::span<const double> targets, std::span<const double> is_weights,
    double beta, QNetwork& grads) {
  const std::size_t n = inputs.size();
  if (noises.size() != n || actions.size() != n || targets.size() != n ||
      is_weights.size() != n || n == 0) {
    throw std::invalid_argument("batch_loss_and_gradients: batch length mismatch");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<std::vector<double>> qs(n);
  double kl_sum = 0.0;
  ForwardCache c;
  std::vector<double> dq(net.num_actions());
  for (std::size_t i = 0; i < n; ++i) {
    forward<double>(net, inputs[i], noises[i], c);
    qs[i] = c.q;
    kl_sum += kl_standard_normal<double>(c.mu, c.logvar);
    const auto a = static_cast<std::size_t>(actions[i]);
    std::fill(dq.begin(), dq.end(), 0.0);
    dq.at(a) = 2.0 * is_weights[i] * (c.q[a] - targets[i]) * inv_n;
    backward<double>(net, c, dq, beta * inv_n, grads);
  }
  TdLossResult td = td_loss(qs, actions, targets, is_weights);
  return BatchLossResult{total_loss(td.loss, kl_sum * inv_n, beta),
                         std::move(td.td_errors)};
}

inline double grad_norm(const QNetwork& grads) {
  double s = 0.0;
  grads.for_each_block([&](std::span<const double> b) {
    for (double g : b) s += g * g;
  });
  return std::sqrt(s);
}

// Rescales gradients so the global L2 norm is at most max_norm. Returns the
// norm before clipping.
inline double clip_grad_norm(QNetwork& grads, double max_norm) {
  const double norm = grad_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    grads.for_each_block([&](std::span<double> b) {
      for (double& g : b) g *= s;
    });
  }
  return norm;
}

struct AdamOptions {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  QNetwork m;
  QNetwork v;
  std::int64_t t = 0;

  AdamState() = default;
  explicit AdamState(const QNetwork& like)
      : m(like.zeros_like()), v(like.zeros_like()) {}
};

// Bias-corrected Adam.
inline void adam_step(QNetwork& params, const QNetwork& grads, AdamState& state,
                      const AdamOptions& opt) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) ||
      !params.same_shape(state.v)) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  std::vector<std::span<const double>> g;
  std::vector<std::span<double>> m;
  std::vector<std::span<double>> v;
  grads.for_each_block([&](std::span<const double> b) { g.push_back(b); });
  state.m.for_each_block([&](std::span<double> b) { m.push_back(b); });
  state.v.for_each_block([&](std::span<double> b) { v.push_back(b); });
  std::size_t k = 0;
  params.for_each_block([&](std::span<double> p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[k][i];
      m[k][i] = opt.beta1 * m[k][i] + (1.0 - opt.beta1) * gi;
      v[k][i] = opt.beta2 * v[k][i] + (1.0 - opt.beta2) * gi * gi;
      const double mhat = m[k][i] / bc1;
      const double vhat = v[k][i] / bc2;
      p[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
    ++k;
  });
}

// ---------------------------------------------------------------------------
// Gradient checking

// Differentiable probe objective on one forward pass:
//   L = sum_k lin_k q_k + 0.5 sum_k quad_k (q_k - target_k)^2 + kl_weight * KL
struct LossProbe {
  std::vector<double> lin;
  std::vector<double> quad;
  std::vector<double> target;
  double kl_weight = 0.0;

  template <typename T>
  T value(std::span<const T> q, std::span<const T> mu,
          std::span<const T> logvar) const {
    T l = T(0);
    for (std::size_t k = 0; k < q.size(); ++k) {
      const T d = q[k] - T(target[k]);
      l += T(lin[k]) * q[k] + T(quad[k]) * d * d / T(2);
    }
    return l + T(kl_weight) * kl_standard_normal<T>(mu, logvar);
  }

  std::vector<double> dq(std::span<const double> q) const {
    std::vector<double> g(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) {
      g[k] = lin[k] + quad[k] * (q[k] - target[k]);
    }
    return g;
  }
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // flat parameter index
  std::size_t checked = 0;
};

// Compares analytic gradients of `probe` against central differences at step
// `delta`. The numeric side is evaluated in long double. `tamper`, when set,
// edits the analytic gradients before comparison (test hook).
inline FiniteDiffReport finite_diff_check(
    const QNetwork& net, std::span<const double> obs,
    std::span<const double> noise, const LossProbe& probe, double delta = 1e-4,
    const std::function<void(QNetwork&)>& tamper = {}) {
  ForwardCache c;
  forward<double>(net, obs, noise, c);
  QNetwork grads = net.zeros_like();
  const std::vector<double> dq = probe.dq(c.q);
  backward<double>(net, c, dq, probe.kl_weight, grads);
  if (tamper) tamper(grads);

  using LD = long double;
  BasicQNetwork<LD> wide = net.cast<LD>();
  const std::vector<LD> obs_l(obs.begin(), obs.end());
  const std::vector<LD> noise_l(noise.begin(), noise.end());
  BasicForwardCache<LD> cl;
  auto eval = [&]() {
    forward<LD>(wide, obs_l, noise_l, cl);
    return probe.value<LD>(cl.q, cl.mu, cl.logvar);
  };

  std::vector<std::span<const double>> analytic;
  grads.for_each_block([&](std::span<const double> b) { analytic.push_back(b); });

  FiniteDiffReport report;
  std::size_t k = 0;
  std::size_t flat = 0;
  wide.for_each_block([&](std::span<LD> block) {
    for (std::size_t i = 0; i < block.size(); ++i, ++flat) {
      const LD saved = block[i];
      block[i] = saved + LD(delta);
      const LD up = eval();
      block[i] = saved - LD(delta);
      const LD down = eval();
      block[i] = saved;
      const double numeric = static_cast<double>((up - down) / (LD(2) * LD(delta)));
      const double err = std::abs(analytic[k][i] - numeric) /
                         std::max(std::abs(numeric), 1e-8);
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_index = flat;
      }
      ++report.checked;
    }
    ++k;
  });
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, version, four (in, out) layer shapes, then row-major
// weights and biases per layer as little-endian IEEE-754 doubles.

inline constexpr char kNetMagic[4] = {'I', 'B', 'Q', 'N'};
inline constexpr std::uint32_t kNetFormatVersion = 1;

namespace detail {

template <typename U>
void write_pod(std::ostream& os, const U& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) throw std::runtime_error("checkpoint truncated");
  return v;
}

}  // namespace detail

inline void save_network(std::ostream& os, const QNetwork& net) {
  static_assert(sizeof(double) == 8);
  os.write(kNetMagic, 4);
  detail::write_pod(os, kNetFormatVersion);
  for (const DenseLayer* l :
       {&net.encoder, &net.mu_head, &net.logvar_head, &net.head}) {
    detail::write_pod(os, static_cast<std::uint64_t>(l->in));
    detail::write_pod(os, static_cast<std::uint64_t>(l->out));
  }
  net.for_each_block([&](std::span<const double> b) {
    os.write(reinterpret_cast<const char*>(b.data()),
             static_cast<std::streamsize>(b.size() * sizeof(double)));
  });
  if (!os) throw std::runtime_error("failed writing network checkpoint");
}

inline QNetwork load_network(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kNetMagic, 4) != 0) {
    throw std::runtime_error("not a network checkpoint");
  }
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kNetFormatVersion) {
    throw std::runtime_error("unsupported network checkpoint version " +
                             std::to_string(version));
  }
  std::uint64_t dims[4][2];
  for (auto& d : dims) {
    d[0] = detail::read_pod<std::uint64_t>(is);
    d[1] = detail::read_pod<std::uint64_t>(is);
  }
  if (dims[1][0] != dims[0][1] || dims[2][0] != dims[0][1] ||
      dims[1][1] != dims[2][1] || dims[3][0] != dims[1][1]) {
    throw std::runtime_error("inconsistent layer shapes in checkpoint");
  }
  QNetwork net(dims[0][0], dims[0][1], dims[1][1], dims[3][1]);
  net.for_each_block([&](std::span<double> b) {
    is.read(reinterpret_cast<char*>(b.data()),
            static_cast<std::streamsize>(b.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint truncated");
  });
  return net;
}

}  // namespace ibcomm
