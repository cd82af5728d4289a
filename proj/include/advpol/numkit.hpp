#pragma once

// Dense float64 numerical core: row-major matrices, small MLPs with exact
// reverse-mode gradients, bias-corrected Adam, and the distribution math the
// PPO stack needs. Nets here are tiny; the priority is being auditable
// against finite differences, not throughput.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "advpol/rng.hpp"

namespace advpol {

using Vec = std::vector<double>;

inline void ensure_finite(std::span<const double> values, const std::string& context) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("non-finite value in " + context);
    }
  }
}

struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec data;  // row-major, data.size() == rows * cols

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative shape");
  }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return data.size(); }
};

// y = Wx + b
inline Vec affine_forward(const Vec& x, const Matrix& w, const Vec& b) {
  if (static_cast<int>(x.size()) != w.cols) {
    throw std::invalid_argument("affine_forward: len(x)=" + std::to_string(x.size()) +
                                " does not match cols=" + std::to_string(w.cols));
  }
  if (static_cast<int>(b.size()) != w.rows) {
    throw std::invalid_argument("affine_forward: len(b)=" + std::to_string(b.size()) +
                                " does not match rows=" + std::to_string(w.rows));
  }
  Vec y(w.rows);
  const double* row = w.data.data();
  for (int r = 0; r < w.rows; ++r, row += w.cols) {
    double acc = b[r];
    for (int c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------
// MLP: a stack of affine layers, each optionally followed by tanh.
// ---------------------------------------------------------------------------

struct MlpLayer {
  Matrix weights;
  Vec biases;
  bool tanh_activation = true;
};

struct Mlp {
  std::vector<MlpLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().weights.cols; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().weights.rows; }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.biases.size();
    return n;
  }
};

// Dimension-chained MLP with tanh on every layer (trunk style) or on all but
// the last (head style), left to the caller via per-layer flags.
inline Mlp make_mlp(const std::vector<int>& dims, bool tanh_on_last) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least one layer");
  Mlp mlp;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    MlpLayer layer;
    layer.weights = Matrix(dims[i + 1], dims[i]);
    layer.biases = Vec(dims[i + 1], 0.0);
    layer.tanh_activation = (i + 2 < dims.size()) || tanh_on_last;
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

struct MlpGrads {
  std::vector<Matrix> dweights;
  std::vector<Vec> dbiases;
};

inline MlpGrads zero_grads_like(const Mlp& mlp) {
  MlpGrads g;
  for (const auto& l : mlp.layers) {
    g.dweights.emplace_back(l.weights.rows, l.weights.cols);
    g.dbiases.emplace_back(l.biases.size(), 0.0);
  }
  return g;
}

struct MlpCache {
  Vec input;
  std::vector<Vec> post;  // post-activation output of each layer
};

inline Vec mlp_forward(const Mlp& mlp, const Vec& x, MlpCache* cache = nullptr) {
  if (static_cast<int>(x.size()) != mlp.input_dim()) {
    throw std::invalid_argument("mlp_forward: input width " + std::to_string(x.size()) +
                                " does not match " + std::to_string(mlp.input_dim()));
  }
  if (cache) {
    cache->input = x;
    cache->post.clear();
  }
  Vec h = x;
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    const auto& l = mlp.layers[i];
    h = affine_forward(h, l.weights, l.biases);
    if (l.tanh_activation) {
      for (double& v : h) v = std::tanh(v);
    }
    for (double v : h) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("mlp_forward: non-finite activation at layer " +
                                 std::to_string(i));
      }
    }
    if (cache) cache->post.push_back(h);
  }
  return h;
}

// Reverse-mode gradients of <upstream, mlp(x)>. Accumulates into `grads`
// (callers zero it or accumulate over a batch) and returns d/dx.
inline Vec mlp_backward(const Mlp& mlp, const MlpCache& cache, const Vec& upstream,
                        MlpGrads& grads) {
  if (static_cast<int>(upstream.size()) != mlp.output_dim()) {
    throw std::invalid_argument("mlp_backward: upstream width mismatch");
  }
  Vec delta = upstream;
  for (int i = static_cast<int>(mlp.layers.size()) - 1; i >= 0; --i) {
    const auto& l = mlp.layers[i];
    const Vec& out = cache.post[i];
    if (l.tanh_activation) {
      for (size_t r = 0; r < delta.size(); ++r) delta[r] *= 1.0 - out[r] * out[r];
    }
    const Vec& in = (i == 0) ? cache.input : cache.post[i - 1];
    Matrix& dw = grads.dweights[i];
    Vec& db = grads.dbiases[i];
    for (int r = 0; r < l.weights.rows; ++r) {
      double d = delta[r];
      db[r] += d;
      double* dwrow = dw.data.data() + static_cast<size_t>(r) * dw.cols;
      for (int c = 0; c < l.weights.cols; ++c) dwrow[c] += d * in[c];
    }
    Vec prev(l.weights.cols, 0.0);
    for (int r = 0; r < l.weights.rows; ++r) {
      double d = delta[r];
      const double* wrow = l.weights.data.data() + static_cast<size_t>(r) * l.weights.cols;
      for (int c = 0; c < l.weights.cols; ++c) prev[c] += d * wrow[c];
    }
    delta = std::move(prev);
  }
  return delta;
}

struct MlpForwardBackward {
  Vec output;
  MlpGrads param_grads;
  Vec input_grad;
};

inline MlpForwardBackward mlp_forward_backward(const Mlp& mlp, const Vec& x,
                                               const Vec& upstream_grad) {
  MlpForwardBackward result;
  MlpCache cache;
  result.output = mlp_forward(mlp, x, &cache);
  result.param_grads = zero_grads_like(mlp);
  result.input_grad = mlp_backward(mlp, cache, upstream_grad, result.param_grads);
  return result;
}

// ---------------------------------------------------------------------------
// Flat parameter views, for the optimizer and for checkpoint payloads.
// ---------------------------------------------------------------------------

inline void flatten_mlp(const Mlp& mlp, Vec& out) {
  for (const auto& l : mlp.layers) {
    out.insert(out.end(), l.weights.data.begin(), l.weights.data.end());
    out.insert(out.end(), l.biases.begin(), l.biases.end());
  }
}

inline void flatten_grads(const MlpGrads& g, Vec& out) {
  for (size_t i = 0; i < g.dweights.size(); ++i) {
    out.insert(out.end(), g.dweights[i].data.begin(), g.dweights[i].data.end());
    out.insert(out.end(), g.dbiases[i].begin(), g.dbiases[i].end());
  }
}

inline size_t unflatten_mlp(std::span<const double> flat, Mlp& mlp) {
  size_t pos = 0;
  for (auto& l : mlp.layers) {
    for (double& v : l.weights.data) v = flat[pos++];
    for (double& v : l.biases) v = flat[pos++];
  }
  return pos;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  Vec m;  // first moment, shaped like the flat parameter vector
  Vec v;  // second moment
};

inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state shaped for a different parameter count");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

inline void adam_step(Mlp& mlp, const MlpGrads& grads, AdamState& state,
                      const AdamConfig& cfg) {
  Vec flat_p, flat_g;
  flat_p.reserve(mlp.param_count());
  flat_g.reserve(mlp.param_count());
  flatten_mlp(mlp, flat_p);
  flatten_grads(grads, flat_g);
  adam_step(std::span<double>(flat_p), std::span<const double>(flat_g), state, cfg);
  unflatten_mlp(flat_p, mlp);
}

// ---------------------------------------------------------------------------
// Distribution math
// ---------------------------------------------------------------------------

// Shift-stabilized softmax; output is on the probability simplex for any
// finite input.
inline Vec softmax(const Vec& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  Vec p(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline Vec log_softmax(const Vec& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  Vec lp(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) lp[i] = logits[i] - lse;
  return lp;
}

inline double categorical_entropy(const Vec& probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// Inverse-CDF sample; the final index absorbs any rounding slack.
inline int sample_categorical(const Vec& probs, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // log(2*pi)

struct GaussianLogProbEntropy {
  double logp = 0.0;
  double entropy = 0.0;
};

// Diagonal Gaussian log-density and analytic entropy sum(log_std + 0.5*log(2*pi*e)).
inline GaussianLogProbEntropy gaussian_logprob_entropy(const Vec& mean, const Vec& log_std,
                                                       const Vec& action) {
  if (mean.size() != log_std.size() || mean.size() != action.size()) {
    throw std::invalid_argument("gaussian_logprob_entropy: length mismatch");
  }
  GaussianLogProbEntropy out;
  for (size_t i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    out.logp += -log_std[i] - 0.5 * kLogTwoPi - 0.5 * z * z;
    out.entropy += log_std[i] + 0.5 * (kLogTwoPi + 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Orthogonal(-ish) init: Gaussian fill, modified Gram-Schmidt on the shorter
// side, scaled by gain.
inline void orthogonal_init(Matrix& w, double gain, Rng& rng) {
  const int r = w.rows, c = w.cols;
  const bool wide = c > r;
  const int nvec = wide ? r : c;   // number of vectors to orthogonalize
  const int dim = wide ? c : r;    // their dimension
  std::vector<Vec> basis(nvec, Vec(dim));
  for (auto& v : basis) {
    for (double& x : v) x = rng.normal();
  }
  for (int i = 0; i < nvec; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < dim; ++k) dot += basis[i][k] * basis[j][k];
      for (int k = 0; k < dim; ++k) basis[i][k] -= dot * basis[j][k];
    }
    double norm = 0.0;
    for (double x : basis[i]) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (double& x : basis[i]) x /= norm;
  }
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      w.at(i, j) = gain * (wide ? basis[i][j] : basis[j][i]);
    }
  }
}

inline void init_mlp(Mlp& mlp, Rng& rng, double hidden_gain = std::sqrt(2.0)) {
  for (auto& l : mlp.layers) {
    orthogonal_init(l.weights, hidden_gain, rng);
    for (double& b : l.biases) b = 0.0;
  }
}

}  // namespace advpol
