#pragma once

// Frozen decoder-only transformer used as the attack target for latent-space
// attacks: pre-norm blocks, causal attention, GELU MLPs, and an additive
// write hook on one block's residual output. Weights come from a seeded
// random initialization and never change; generation is deterministic given
// tokens, perturbation, and the sampling seed.
//
// Positions are processed one at a time against per-block K/V caches, so a
// full-sequence forward and incremental decoding run the same arithmetic.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "advpol/numkit.hpp"
#include "advpol/rng.hpp"

namespace advpol {

struct TinyLMConfig {
  int vocab = 64;
  int d_model = 32;
  int n_layers = 4;
  int n_heads = 2;
  int context = 32;
  int mlp_ratio = 4;
  int hook_layer = 2;  // 1-indexed block whose residual output takes the write
  std::uint64_t init_seed = 20240602;
};

namespace detail {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475)); }

inline void layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, Vec& out) {
  const size_t d = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  out.resize(d);
  for (size_t i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

}  // namespace detail

struct TinyLMBlock {
  Vec ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  Matrix wq, wk, wv, wo;  // d x d
  Vec bq, bk, bv, bo;
  Matrix fc1, fc2;  // d -> ratio*d -> d
  Vec b1, b2;
};

// Per-stream decoding state: cached K/V per block per position, plus the
// number of positions processed so far.
struct TinyLMState {
  std::vector<std::vector<Vec>> k_cache;  // [layer][pos]
  std::vector<std::vector<Vec>> v_cache;
  int length = 0;
};

// Optional per-position capture of the hook layer's residual output.
struct TinyLMTrace {
  std::vector<Vec> hook_residuals;                // residual after the hook block, per position
  std::vector<std::vector<Vec>> block_residuals;  // [layer][pos], filled when deep=true
  bool deep = false;
};

class TinyLM {
 public:
  explicit TinyLM(const TinyLMConfig& cfg) : cfg_(cfg) {
    if (cfg.d_model % cfg.n_heads != 0) {
      throw std::invalid_argument("TinyLM: d_model must divide into heads");
    }
    if (cfg.hook_layer < 1 || cfg.hook_layer > cfg.n_layers) {
      throw std::invalid_argument("TinyLM: hook layer out of range");
    }
    Rng rng(cfg.init_seed);
    token_emb_ = Matrix(cfg.vocab, cfg.d_model);
    pos_emb_ = Matrix(cfg.context, cfg.d_model);
    for (double& v : token_emb_.data) v = rng.normal();
    for (double& v : pos_emb_.data) v = rng.normal();
    const double d_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    const double h_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model * cfg.mlp_ratio));
    blocks_.resize(cfg.n_layers);
    for (auto& b : blocks_) {
      b.ln1_gamma.assign(cfg.d_model, 1.0);
      b.ln1_beta.assign(cfg.d_model, 0.0);
      b.ln2_gamma.assign(cfg.d_model, 1.0);
      b.ln2_beta.assign(cfg.d_model, 0.0);
      for (Matrix* m : {&b.wq, &b.wk, &b.wv, &b.wo}) {
        *m = Matrix(cfg.d_model, cfg.d_model);
        for (double& v : m->data) v = rng.normal() * d_scale;
      }
      b.bq.assign(cfg.d_model, 0.0);
      b.bk.assign(cfg.d_model, 0.0);
      b.bv.assign(cfg.d_model, 0.0);
      b.bo.assign(cfg.d_model, 0.0);
      b.fc1 = Matrix(cfg.d_model * cfg.mlp_ratio, cfg.d_model);
      for (double& v : b.fc1.data) v = rng.normal() * d_scale;
      b.b1.assign(cfg.d_model * cfg.mlp_ratio, 0.0);
      b.fc2 = Matrix(cfg.d_model, cfg.d_model * cfg.mlp_ratio);
      for (double& v : b.fc2.data) v = rng.normal() * h_scale;
      b.b2.assign(cfg.d_model, 0.0);
    }
    lnf_gamma_.assign(cfg.d_model, 1.0);
    lnf_beta_.assign(cfg.d_model, 0.0);
    // Sharper unembedding than the residual-path matrices: logits with O(3)
    // spread give the frozen model concentrated token preferences, which the
    // latent hook can steer meaningfully.
    unembed_ = Matrix(cfg.vocab, cfg.d_model);
    for (double& v : unembed_.data) v = rng.normal() * 3.0 * d_scale;
  }

  const TinyLMConfig& config() const { return cfg_; }

  TinyLMState new_state() const {
    TinyLMState st;
    st.k_cache.resize(cfg_.n_layers);
    st.v_cache.resize(cfg_.n_layers);
    return st;
  }

  // Process one token at the next position. `perturb`, when non-null, is
  // added to the hook block's residual output at positions < perturb_limit.
  // Returns the logits at this position.
  Vec step_token(int token, TinyLMState& state, const Vec* perturb, int perturb_limit,
                 TinyLMTrace* trace = nullptr) const {
    if (token < 0 || token >= cfg_.vocab) {
      throw std::invalid_argument("TinyLM: token id out of range");
    }
    const int pos = state.length;
    if (pos >= cfg_.context) {
      throw std::runtime_error("TinyLM: context overflow at position " + std::to_string(pos));
    }
    if (perturb && static_cast<int>(perturb->size()) != cfg_.d_model) {
      throw std::invalid_argument("TinyLM: perturbation width mismatch");
    }
    const int d = cfg_.d_model;
    Vec x(d);
    for (int i = 0; i < d; ++i) x[i] = token_emb_.at(token, i) + pos_emb_.at(pos, i);

    const int head_dim = d / cfg_.n_heads;
    Vec normed, q, k, v, attn_out(d), h1;
    for (int layer = 0; layer < cfg_.n_layers; ++layer) {
      const TinyLMBlock& b = blocks_[layer];
      detail::layer_norm(x, b.ln1_gamma, b.ln1_beta, normed);
      q = affine_forward(normed, b.wq, b.bq);
      k = affine_forward(normed, b.wk, b.bk);
      v = affine_forward(normed, b.wv, b.bv);
      state.k_cache[layer].push_back(k);
      state.v_cache[layer].push_back(v);

      const auto& ks = state.k_cache[layer];
      const auto& vs = state.v_cache[layer];
      const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
      for (int h = 0; h < cfg_.n_heads; ++h) {
        const int off = h * head_dim;
        Vec scores(pos + 1);
        double mx = -1e300;
        for (int j = 0; j <= pos; ++j) {
          double s = 0.0;
          for (int c = 0; c < head_dim; ++c) s += q[off + c] * ks[j][off + c];
          scores[j] = s * scale;
          mx = std::max(mx, scores[j]);
        }
        double denom = 0.0;
        for (int j = 0; j <= pos; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          denom += scores[j];
        }
        for (int c = 0; c < head_dim; ++c) {
          double acc = 0.0;
          for (int j = 0; j <= pos; ++j) acc += scores[j] * vs[j][off + c];
          attn_out[off + c] = acc / denom;
        }
      }
      Vec projected = affine_forward(attn_out, b.wo, b.bo);
      for (int i = 0; i < d; ++i) x[i] += projected[i];

      detail::layer_norm(x, b.ln2_gamma, b.ln2_beta, normed);
      h1 = affine_forward(normed, b.fc1, b.b1);
      for (double& val : h1) val = detail::gelu(val);
      Vec h2 = affine_forward(h1, b.fc2, b.b2);
      for (int i = 0; i < d; ++i) x[i] += h2[i];

      if (layer == cfg_.hook_layer - 1 && perturb && pos < perturb_limit) {
        for (int i = 0; i < d; ++i) x[i] += (*perturb)[i];
      }
      if (trace) {
        if (layer == cfg_.hook_layer - 1) {
          if (static_cast<int>(trace->hook_residuals.size()) <= pos) {
            trace->hook_residuals.resize(pos + 1);
          }
          trace->hook_residuals[pos] = x;
        }
        if (trace->deep) {
          if (trace->block_residuals.empty()) trace->block_residuals.resize(cfg_.n_layers);
          if (static_cast<int>(trace->block_residuals[layer].size()) <= pos) {
            trace->block_residuals[layer].resize(pos + 1);
          }
          trace->block_residuals[layer][pos] = x;
        }
      }
    }

    detail::layer_norm(x, lnf_gamma_, lnf_beta_, normed);
    Vec logits = affine_forward(normed, unembed_, Vec(cfg_.vocab, 0.0));
    state.length += 1;
    return logits;
  }

  // Logits at every position of a full sequence.
  std::vector<Vec> forward_logits(std::span<const int> tokens, const Vec* perturb,
                                  int perturb_limit, TinyLMTrace* trace = nullptr) const {
    TinyLMState st = new_state();
    std::vector<Vec> out;
    out.reserve(tokens.size());
    for (int t : tokens) out.push_back(step_token(t, st, perturb, perturb_limit, trace));
    return out;
  }

  // Autoregressive sampling of k tokens after the prompt. The perturbation,
  // when present, applies to prompt positions (< perturb_limit) on every
  // forward step; generated positions take no additive term.
  std::vector<int> generate(std::span<const int> prompt, const Vec* perturb, int perturb_limit,
                            int k, double temperature, Rng& rng) const {
    if (static_cast<int>(prompt.size()) + k > cfg_.context) {
      throw std::runtime_error("TinyLM: prompt of " + std::to_string(prompt.size()) +
                               " plus " + std::to_string(k) + " tokens overflows context " +
                               std::to_string(cfg_.context));
    }
    if (prompt.empty()) throw std::invalid_argument("TinyLM: empty prompt");
    TinyLMState st = new_state();
    Vec logits;
    for (int t : prompt) logits = step_token(t, st, perturb, perturb_limit);
    std::vector<int> completion;
    completion.reserve(k);
    for (int i = 0; i < k; ++i) {
      Vec scaled = logits;
      for (double& v : scaled) v /= temperature;
      const int tok = sample_categorical(softmax(scaled), rng);
      completion.push_back(tok);
      if (i + 1 < k) logits = step_token(tok, st, perturb, perturb_limit);
    }
    return completion;
  }

  // Unperturbed hook-layer residual at the last prompt position.
  Vec latent_at(std::span<const int> prompt) const {
    TinyLMTrace trace;
    forward_logits(prompt, nullptr, 0, &trace);
    return trace.hook_residuals.back();
  }

  // Mean of the token embeddings over the prompt: the fixed-length prompt
  // encoding observed by the attackers.
  Vec embed_mean(std::span<const int> prompt) const {
    if (prompt.empty()) throw std::invalid_argument("TinyLM: empty prompt");
    Vec out(cfg_.d_model, 0.0);
    for (int t : prompt) {
      if (t < 0 || t >= cfg_.vocab) throw std::invalid_argument("TinyLM: token out of range");
      for (int i = 0; i < cfg_.d_model; ++i) out[i] += token_emb_.at(t, i);
    }
    for (double& v : out) v /= static_cast<double>(prompt.size());
    return out;
  }

  std::uint64_t param_fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const Vec& v) {
      const unsigned char* bytes = reinterpret_cast<const unsigned char*>(v.data());
      for (size_t i = 0; i < v.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
      }
    };
    mix(token_emb_.data);
    mix(pos_emb_.data);
    for (const auto& b : blocks_) {
      mix(b.ln1_gamma);
      mix(b.ln1_beta);
      mix(b.ln2_gamma);
      mix(b.ln2_beta);
      mix(b.wq.data);
      mix(b.wk.data);
      mix(b.wv.data);
      mix(b.wo.data);
      mix(b.bq);
      mix(b.bk);
      mix(b.bv);
      mix(b.bo);
      mix(b.fc1.data);
      mix(b.b1);
      mix(b.fc2.data);
      mix(b.b2);
    }
    mix(lnf_gamma_);
    mix(lnf_beta_);
    mix(unembed_.data);
    return h;
  }

 private:
  TinyLMConfig cfg_;
  Matrix token_emb_;
  Matrix pos_emb_;
  std::vector<TinyLMBlock> blocks_;
  Vec lnf_gamma_, lnf_beta_;
  Matrix unembed_;
};

}  // namespace advpol
