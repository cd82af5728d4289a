#pragma once

// Policy/value networks. One forward pass exposes everything an observer may
// ask of the agent at a timestep: the action distribution, the scalar value
// estimate, and the designated hidden-layer activations. Both output heads
// read the same designated latent layer.

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "advpol/numkit.hpp"
#include "advpol/rng.hpp"

namespace advpol {

enum class ActionHeadKind : std::uint8_t { Categorical = 0, Gaussian = 1 };

struct PolicyConfig {
  int obs_dim = 0;
  int action_dim = 0;
  ActionHeadKind head = ActionHeadKind::Categorical;
  int hidden = 64;
  int hidden_layers = 2;
  double action_head_gain = 0.01;
  double value_head_gain = 1.0;
  double init_log_std = -0.5;
};

struct PolicyNet {
  Mlp trunk;        // obs -> hidden, tanh on every layer
  Mlp action_head;  // hidden -> action_dim, linear (logits or Gaussian mean)
  Mlp value_head;   // hidden -> 1, linear
  Vec log_std;      // Gaussian heads: free per-dimension parameter
  ActionHeadKind head = ActionHeadKind::Categorical;
  int latent_layer = 0;  // trunk layer whose post-activation is exported

  int obs_dim() const { return trunk.input_dim(); }
  int hidden_dim() const { return trunk.output_dim(); }
  int action_dim() const { return action_head.output_dim(); }

  size_t param_count() const {
    return trunk.param_count() + action_head.param_count() + value_head.param_count() +
           log_std.size();
  }
};

inline PolicyNet make_policy(const PolicyConfig& cfg, Rng& rng) {
  if (cfg.obs_dim <= 0 || cfg.action_dim <= 0 || cfg.hidden <= 0 || cfg.hidden_layers <= 0) {
    throw std::invalid_argument("make_policy: dimensions must be positive");
  }
  PolicyNet net;
  std::vector<int> dims(1, cfg.obs_dim);
  for (int i = 0; i < cfg.hidden_layers; ++i) dims.push_back(cfg.hidden);
  net.trunk = make_mlp(dims, /*tanh_on_last=*/true);
  net.action_head = make_mlp({cfg.hidden, cfg.action_dim}, /*tanh_on_last=*/false);
  net.value_head = make_mlp({cfg.hidden, 1}, /*tanh_on_last=*/false);
  net.head = cfg.head;
  net.latent_layer = cfg.hidden_layers - 1;
  init_mlp(net.trunk, rng);
  for (auto& l : net.action_head.layers) orthogonal_init(l.weights, cfg.action_head_gain, rng);
  for (auto& l : net.value_head.layers) orthogonal_init(l.weights, cfg.value_head_gain, rng);
  if (cfg.head == ActionHeadKind::Gaussian) {
    net.log_std.assign(cfg.action_dim, cfg.init_log_std);
  }
  return net;
}

struct ForwardRecord {
  ActionHeadKind head = ActionHeadKind::Categorical;
  Vec probs;     // categorical action distribution
  Vec mean;      // Gaussian mean
  Vec log_std;   // Gaussian per-dimension log std
  double value = 0.0;
  Vec latents;   // designated-layer activations
  int action_index = -1;  // sampled action (categorical)
  Vec action;             // sampled action (Gaussian, raw)
  double logp = 0.0;
  double entropy = 0.0;
};

struct PolicyCache {
  MlpCache trunk;
};

namespace detail {

inline ForwardRecord policy_eval(const PolicyNet& net, const Vec& obs, PolicyCache* cache) {
  if (static_cast<int>(obs.size()) != net.obs_dim()) {
    throw std::invalid_argument("policy forward: observation width " +
                                std::to_string(obs.size()) + " does not match network input " +
                                std::to_string(net.obs_dim()));
  }
  PolicyCache local;
  PolicyCache& c = cache ? *cache : local;
  Vec latent = mlp_forward(net.trunk, obs, &c.trunk);
  ForwardRecord rec;
  rec.head = net.head;
  rec.latents = c.trunk.post[net.latent_layer];
  Vec head_out = mlp_forward(net.action_head, latent);
  if (net.head == ActionHeadKind::Categorical) {
    rec.probs = softmax(head_out);
  } else {
    rec.mean = std::move(head_out);
    rec.log_std = net.log_std;
  }
  rec.value = mlp_forward(net.value_head, latent)[0];
  return rec;
}

}  // namespace detail

// Sampled forward pass. logp/entropy are computed from the same distribution
// the record reports, with the shared numkit formulas.
inline ForwardRecord policy_forward(const PolicyNet& net, const Vec& obs, Rng& rng,
                                    PolicyCache* cache = nullptr) {
  ForwardRecord rec = detail::policy_eval(net, obs, cache);
  if (net.head == ActionHeadKind::Categorical) {
    rec.action_index = sample_categorical(rec.probs, rng);
    rec.logp = std::log(std::max(rec.probs[rec.action_index], 1e-300));
    rec.entropy = categorical_entropy(rec.probs);
  } else {
    rec.action.resize(rec.mean.size());
    for (size_t i = 0; i < rec.mean.size(); ++i) {
      rec.action[i] = rec.mean[i] + std::exp(rec.log_std[i]) * rng.normal();
    }
    auto ge = gaussian_logprob_entropy(rec.mean, rec.log_std, rec.action);
    rec.logp = ge.logp;
    rec.entropy = ge.entropy;
  }
  return rec;
}

// Greedy forward: argmax of categorical probabilities (lowest index wins
// ties) or the Gaussian mean.
inline ForwardRecord deterministic_forward(const PolicyNet& net, const Vec& obs) {
  ForwardRecord rec = detail::policy_eval(net, obs, nullptr);
  if (net.head == ActionHeadKind::Categorical) {
    int best = 0;
    for (size_t i = 1; i < rec.probs.size(); ++i) {
      if (rec.probs[i] > rec.probs[best]) best = static_cast<int>(i);
    }
    rec.action_index = best;
    rec.logp = std::log(std::max(rec.probs[best], 1e-300));
    rec.entropy = categorical_entropy(rec.probs);
  } else {
    rec.action = rec.mean;
    auto ge = gaussian_logprob_entropy(rec.mean, rec.log_std, rec.action);
    rec.logp = ge.logp;
    rec.entropy = ge.entropy;
  }
  return rec;
}

inline double value_estimate(const PolicyNet& net, const Vec& obs) {
  return detail::policy_eval(net, obs, nullptr).value;
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

struct PolicyGrads {
  MlpGrads trunk;
  MlpGrads action_head;
  MlpGrads value_head;
  Vec log_std;
};

inline PolicyGrads zero_grads_like(const PolicyNet& net) {
  PolicyGrads g;
  g.trunk = zero_grads_like(net.trunk);
  g.action_head = zero_grads_like(net.action_head);
  g.value_head = zero_grads_like(net.value_head);
  g.log_std.assign(net.log_std.size(), 0.0);
  return g;
}

// Backward pass given gradients w.r.t. the action-head output, log_std, and
// value. Accumulates into `grads`.
inline void policy_backward(const PolicyNet& net, const PolicyCache& cache,
                            const Vec& d_head_out, const Vec& d_log_std, double d_value,
                            PolicyGrads& grads) {
  const Vec& latent = cache.trunk.post.back();
  MlpCache head_cache;
  head_cache.input = latent;
  head_cache.post.push_back(mlp_forward(net.action_head, latent));
  Vec d_latent = mlp_backward(net.action_head, head_cache, d_head_out, grads.action_head);

  MlpCache value_cache;
  value_cache.input = latent;
  value_cache.post.push_back(mlp_forward(net.value_head, latent));
  Vec d_latent_v =
      mlp_backward(net.value_head, value_cache, Vec{d_value}, grads.value_head);
  for (size_t i = 0; i < d_latent.size(); ++i) d_latent[i] += d_latent_v[i];

  mlp_backward(net.trunk, cache.trunk, d_latent, grads.trunk);
  for (size_t i = 0; i < d_log_std.size(); ++i) grads.log_std[i] += d_log_std[i];
}

// ---------------------------------------------------------------------------
// Flat parameter vector (trunk, action head, value head, log_std)
// ---------------------------------------------------------------------------

inline Vec flatten_params(const PolicyNet& net) {
  Vec flat;
  flat.reserve(net.param_count());
  flatten_mlp(net.trunk, flat);
  flatten_mlp(net.action_head, flat);
  flatten_mlp(net.value_head, flat);
  flat.insert(flat.end(), net.log_std.begin(), net.log_std.end());
  return flat;
}

inline void set_params(PolicyNet& net, std::span<const double> flat) {
  if (flat.size() != net.param_count()) {
    throw std::invalid_argument("set_params: flat vector size mismatch");
  }
  size_t pos = unflatten_mlp(flat, net.trunk);
  pos += unflatten_mlp(flat.subspan(pos), net.action_head);
  pos += unflatten_mlp(flat.subspan(pos), net.value_head);
  for (double& v : net.log_std) v = flat[pos++];
}

inline Vec flatten_grads(const PolicyGrads& g) {
  Vec flat;
  flatten_grads(g.trunk, flat);
  flatten_grads(g.action_head, flat);
  flatten_grads(g.value_head, flat);
  flat.insert(flat.end(), g.log_std.begin(), g.log_std.end());
  return flat;
}

// FNV-1a over the exact parameter bytes; used for freeze checks.
inline std::uint64_t param_fingerprint(const PolicyNet& net) {
  Vec flat = flatten_params(net);
  std::uint64_t h = 1469598103934665603ull;
  const unsigned char* bytes = reinterpret_cast<const unsigned char*>(flat.data());
  for (size_t i = 0; i < flat.size() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned, self-describing, bit-exact round trip.
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kCheckpointMagic[8] = {'A', 'D', 'V', 'P', 'O', 'L', 'C', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64s(std::string& out, const Vec& v) {
  const char* bytes = reinterpret_cast<const char*>(v.data());
  out.append(bytes, v.size() * sizeof(double));
}

inline void put_mlp(std::string& out, const Mlp& mlp) {
  put_u32(out, static_cast<std::uint32_t>(mlp.layers.size()));
  for (const auto& l : mlp.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.weights.rows));
    put_u32(out, static_cast<std::uint32_t>(l.weights.cols));
    put_u32(out, l.tanh_activation ? 1 : 0);
    put_f64s(out, l.weights.data);
    put_f64s(out, l.biases);
  }
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& what) : data_(data), what_(what) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  void f64s(Vec& out, size_t n) {
    need(n * sizeof(double));
    out.resize(n);
    std::memcpy(out.data(), data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  void raw(char* out, size_t n) {
    need(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(size_t n) {
    if (pos_ + n > data_.size()) {
      throw std::runtime_error("checkpoint truncated: " + what_);
    }
  }
  const std::string& data_;
  std::string what_;
  size_t pos_ = 0;
};

inline Mlp read_mlp(ByteReader& r) {
  Mlp mlp;
  const std::uint32_t nlayers = r.u32();
  for (std::uint32_t i = 0; i < nlayers; ++i) {
    MlpLayer l;
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    l.tanh_activation = r.u32() != 0;
    l.weights = Matrix(static_cast<int>(rows), static_cast<int>(cols));
    r.f64s(l.weights.data, static_cast<size_t>(rows) * cols);
    r.f64s(l.biases, rows);
    mlp.layers.push_back(std::move(l));
  }
  return mlp;
}

}  // namespace detail

inline std::string serialize_policy(const PolicyNet& net) {
  std::string out;
  out.append(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::put_u32(out, detail::kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(net.head));
  detail::put_u32(out, static_cast<std::uint32_t>(net.latent_layer));
  detail::put_mlp(out, net.trunk);
  detail::put_mlp(out, net.action_head);
  detail::put_mlp(out, net.value_head);
  detail::put_u32(out, static_cast<std::uint32_t>(net.log_std.size()));
  detail::put_f64s(out, net.log_std);
  return out;
}

inline PolicyNet deserialize_policy(const std::string& bytes) {
  detail::ByteReader r(bytes, "policy");
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  PolicyNet net;
  net.head = static_cast<ActionHeadKind>(r.u32());
  net.latent_layer = static_cast<int>(r.u32());
  net.trunk = detail::read_mlp(r);
  net.action_head = detail::read_mlp(r);
  net.value_head = detail::read_mlp(r);
  const std::uint32_t nls = r.u32();
  r.f64s(net.log_std, nls);
  if (!r.exhausted()) throw std::runtime_error("checkpoint: trailing bytes");
  return net;
}

inline void save_policy(const PolicyNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  const std::string bytes = serialize_policy(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline PolicyNet load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_policy(bytes);
}

}  // namespace advpol
