#pragma once

// Introspection of a frozen target policy: build the per-timestep feature
// vector m_t (value estimate, action distribution, latent activations) from
// the same forward pass whose action the target executes, and compose it into
// the adversary's observation.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "advpol/numkit.hpp"
#include "advpol/policy.hpp"
#include "advpol/rng.hpp"

namespace advpol {

enum class IntrospectionMode : int { BlackBox = 0, ActionValue = 1, Latent = 2, Full = 3 };

inline IntrospectionMode introspection_mode_from_string(const std::string& s) {
  if (s == "blackbox") return IntrospectionMode::BlackBox;
  if (s == "action_value") return IntrospectionMode::ActionValue;
  if (s == "latent") return IntrospectionMode::Latent;
  if (s == "full") return IntrospectionMode::Full;
  throw std::invalid_argument("unknown adversary.mode '" + s +
                              "' (expected blackbox|action_value|latent|full)");
}

inline std::string to_string(IntrospectionMode m) {
  switch (m) {
    case IntrospectionMode::BlackBox: return "blackbox";
    case IntrospectionMode::ActionValue: return "action_value";
    case IntrospectionMode::Latent: return "latent";
    case IntrospectionMode::Full: return "full";
  }
  return "?";
}

// Which segments of m_t are populated. The four public modes map onto masks;
// the robustness study additionally uses action+latent without the value.
struct SegmentMask {
  bool value = false;
  bool action = false;
  bool latent = false;
};

inline SegmentMask mask_for(IntrospectionMode mode) {
  switch (mode) {
    case IntrospectionMode::BlackBox: return {false, false, false};
    case IntrospectionMode::ActionValue: return {true, true, false};
    case IntrospectionMode::Latent: return {false, false, true};
    case IntrospectionMode::Full: return {true, true, true};
  }
  return {};
}

struct IntrospectionLayout {
  int value_len = 0;
  int action_len = 0;
  int latent_len = 0;
  int total() const { return value_len + action_len + latent_len; }
};

struct IntrospectionVector {
  SegmentMask mask;
  Vec payload;  // segments in order: value, action distribution, latents
  IntrospectionLayout layout;
};

// Assemble m_t from an already-computed forward record. The action segment is
// the categorical probability vector, or the Gaussian mean for continuous
// heads (the log-std is a state-independent parameter and carries no
// per-step information).
inline IntrospectionVector build_m(const ForwardRecord& record, SegmentMask mask) {
  IntrospectionVector m;
  m.mask = mask;
  if (mask.value) {
    m.payload.push_back(record.value);
    m.layout.value_len = 1;
  }
  if (mask.action) {
    const Vec& dist = record.head == ActionHeadKind::Categorical ? record.probs : record.mean;
    m.payload.insert(m.payload.end(), dist.begin(), dist.end());
    m.layout.action_len = static_cast<int>(dist.size());
  }
  if (mask.latent) {
    m.payload.insert(m.payload.end(), record.latents.begin(), record.latents.end());
    m.layout.latent_len = static_cast<int>(record.latents.size());
  }
  return m;
}

struct Extraction {
  ForwardRecord record;  // the forward pass whose action the target executes
  IntrospectionVector m;
};

// Run the target forward exactly once on its own observation of the current
// state; the returned record is both the source of m_t and the action the
// target takes this step. Read-only on the target.
inline Extraction extract_m(const PolicyNet& target, const Vec& target_obs,
                            SegmentMask mask, Rng& target_rng, bool deterministic = false) {
  Extraction out;
  out.record = deterministic ? deterministic_forward(target, target_obs)
                             : policy_forward(target, target_obs, target_rng);
  out.m = build_m(out.record, mask);
  return out;
}

inline Extraction extract_m(const PolicyNet& target, const Vec& target_obs,
                            IntrospectionMode mode, Rng& target_rng,
                            bool deterministic = false) {
  return extract_m(target, target_obs, mask_for(mode), target_rng, deterministic);
}

// ---------------------------------------------------------------------------
// Running per-coordinate normalization of m_t
// ---------------------------------------------------------------------------

// Welford accumulator. Updated only during training; frozen for evaluation.
struct RunningMoments {
  std::int64_t count = 0;
  Vec mean;
  Vec m2;

  void update(const Vec& x) {
    if (count == 0) {
      mean.assign(x.size(), 0.0);
      m2.assign(x.size(), 0.0);
    }
    if (x.size() != mean.size()) {
      throw std::invalid_argument("RunningMoments::update: dimension changed");
    }
    count += 1;
    for (size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(count);
      m2[i] += d * (x[i] - mean[i]);
    }
  }

  double stddev(size_t i) const {
    return std::sqrt(m2[i] / static_cast<double>(count));
  }
};

// Per-coordinate (m - mean) / max(std, 1e-6), clipped to [-10, 10]. Fresh
// stats (count 0) are the identity map.
inline Vec normalize_m(const Vec& m, const RunningMoments& stats) {
  if (stats.count == 0) return m;
  if (m.size() != stats.mean.size()) {
    throw std::invalid_argument("normalize_m: dimension mismatch");
  }
  Vec out(m.size());
  for (size_t i = 0; i < m.size(); ++i) {
    const double sd = std::max(stats.stddev(i), 1e-6);
    out[i] = std::min(10.0, std::max(-10.0, (m[i] - stats.mean[i]) / sd));
  }
  return out;
}

// base_obs concatenated with normalize(m); the empty (black-box) vector
// returns base_obs unchanged.
inline Vec compose_obs(const Vec& base_obs, const Vec& m_normalized) {
  Vec out = base_obs;
  out.insert(out.end(), m_normalized.begin(), m_normalized.end());
  return out;
}

}  // namespace advpol
