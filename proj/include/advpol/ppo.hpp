#pragma once

// Proximal Policy Optimization with generalized advantage estimation; the
// optimizer used for every learning agent in this project. Single
// environment instance per trainer; runs parallelize at the experiment level.

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "advpol/numkit.hpp"
#include "advpol/policy.hpp"
#include "advpol/rng.hpp"

namespace advpol {

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  double value_coef = 0.5;
  // Signed: positive rewards entropy, negative penalizes it.
  double entropy_coef = 0.01;
  double lr = 3e-4;
  int epochs = 4;
  int minibatch = 64;
  int steps_per_iter = 2048;
};

struct RolloutBatch {
  std::vector<Vec> obs;
  std::vector<int> action_index;  // categorical actions
  std::vector<Vec> action;        // Gaussian actions (raw)
  Vec logp_old;
  Vec reward;
  Vec value_old;
  std::vector<std::uint8_t> done;
  Vec advantage;
  Vec return_target;

  size_t size() const { return reward.size(); }
};

// Reverse GAE recursion:
//   delta_t = r_t + gamma*(1-done_t)*V_{t+1} - V_t
//   A_t     = delta_t + gamma*lambda*(1-done_t)*A_{t+1}
// with V_T = bootstrap_value; return targets are A + V.
inline std::pair<Vec, Vec> compute_gae(const Vec& rewards, const Vec& values,
                                       const std::vector<std::uint8_t>& dones,
                                       double bootstrap_value, double gamma, double lambda) {
  const size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("compute_gae: array length mismatch");
  }
  if (gamma < 0.0 || gamma >= 1.0 || lambda < 0.0 || lambda > 1.0) {
    throw std::invalid_argument("compute_gae: gamma in [0,1), lambda in [0,1] required");
  }
  Vec adv(n, 0.0), ret(n, 0.0);
  double next_adv = 0.0;
  for (size_t i = n; i-- > 0;) {
    const double nonterminal = dones[i] ? 0.0 : 1.0;
    const double next_value = (i + 1 < n) ? values[i + 1] : bootstrap_value;
    const double delta = rewards[i] + gamma * nonterminal * next_value - values[i];
    next_adv = delta + gamma * lambda * nonterminal * next_adv;
    adv[i] = next_adv;
    ret[i] = adv[i] + values[i];
  }
  return {adv, ret};
}

// Whole-batch normalization to mean 0 / std 1, skipped for degenerate std.
inline void normalize_advantages(Vec& adv) {
  if (adv.empty()) return;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / static_cast<double>(adv.size()));
  if (std < 1e-8) return;
  for (double& a : adv) a = (a - mean) / std;
}

struct PpoLossStats {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;  // raw mean squared error, before value_coef
  double entropy = 0.0;
};

// Clipped-surrogate loss over the indexed samples:
//   L = -mean(min(rho*A, clip(rho,1-eps,1+eps)*A))
//       + value_coef * mean((V - returns)^2) - entropy_coef * mean(entropy)
// Advantages must already be normalized for the update. If `grads` is given,
// exact reverse-mode gradients are accumulated into it.
inline PpoLossStats ppo_loss(const PolicyNet& net, const RolloutBatch& batch,
                             const std::vector<int>& indices, const PpoConfig& cfg,
                             PolicyGrads* grads) {
  if (indices.empty()) throw std::invalid_argument("ppo_loss: empty minibatch");
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  PpoLossStats stats;
  for (int idx : indices) {
    PolicyCache cache;
    ForwardRecord rec = detail::policy_eval(net, batch.obs[idx], &cache);
    const double adv = batch.advantage[idx];
    double logp_new, entropy;
    if (net.head == ActionHeadKind::Categorical) {
      logp_new = std::log(std::max(rec.probs[batch.action_index[idx]], 1e-300));
      entropy = categorical_entropy(rec.probs);
    } else {
      auto ge = gaussian_logprob_entropy(rec.mean, net.log_std, batch.action[idx]);
      logp_new = ge.logp;
      entropy = ge.entropy;
    }
    const double rho = std::exp(logp_new - batch.logp_old[idx]);
    const double clipped = std::min(std::max(rho, 1.0 - cfg.clip_eps), 1.0 + cfg.clip_eps);
    const double l_unclipped = -rho * adv;
    const double l_clipped = -clipped * adv;
    const bool take_unclipped = l_unclipped >= l_clipped;
    const double vdiff = rec.value - batch.return_target[idx];

    stats.policy_loss += std::max(l_unclipped, l_clipped) * inv_n;
    stats.value_loss += vdiff * vdiff * inv_n;
    stats.entropy += entropy * inv_n;

    if (grads) {
      // d(policy term)/d(logp_new): gradient flows through the selected branch
      // only; the clipped branch is constant in logp wherever it is selected.
      const double d_logp = take_unclipped ? (-rho * adv) * inv_n : 0.0;
      const double d_entropy = -cfg.entropy_coef * inv_n;
      const double d_value = 2.0 * cfg.value_coef * vdiff * inv_n;
      if (net.head == ActionHeadKind::Categorical) {
        const int a = batch.action_index[idx];
        const size_t k = rec.probs.size();
        Vec d_logits(k, 0.0);
        for (size_t j = 0; j < k; ++j) {
          const double p = rec.probs[j];
          const double d_logp_term = ((static_cast<int>(j) == a ? 1.0 : 0.0) - p);
          const double logp_j = std::log(std::max(p, 1e-300));
          const double d_ent_term = -p * (logp_j + entropy);
          d_logits[j] = d_logp * d_logp_term + d_entropy * d_ent_term;
        }
        policy_backward(net, cache, d_logits, Vec(), d_value, *grads);
      } else {
        const size_t k = rec.mean.size();
        Vec d_mean(k, 0.0), d_log_std(k, 0.0);
        for (size_t j = 0; j < k; ++j) {
          const double sigma = std::exp(net.log_std[j]);
          const double z = (batch.action[idx][j] - rec.mean[j]) / sigma;
          d_mean[j] = d_logp * (z / sigma);
          d_log_std[j] = d_logp * (z * z - 1.0) + d_entropy * 1.0;
        }
        policy_backward(net, cache, d_mean, d_log_std, d_value, *grads);
      }
    }
  }
  stats.total = stats.policy_loss + cfg.value_coef * stats.value_loss -
                cfg.entropy_coef * stats.entropy;
  if (!std::isfinite(stats.total)) {
    double adv_min = std::numeric_limits<double>::infinity(), adv_max = -adv_min;
    for (int idx : indices) {
      adv_min = std::min(adv_min, batch.advantage[idx]);
      adv_max = std::max(adv_max, batch.advantage[idx]);
    }
    throw std::runtime_error(
        "ppo_loss: non-finite loss (minibatch=" + std::to_string(indices.size()) +
        ", policy=" + std::to_string(stats.policy_loss) +
        ", value=" + std::to_string(stats.value_loss) +
        ", entropy=" + std::to_string(stats.entropy) + ", adv range [" +
        std::to_string(adv_min) + ", " + std::to_string(adv_max) + "])");
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct StepResult {
  Vec obs;       // next observation (unused when done)
  double reward = 0.0;
  bool done = false;
};

// A source of experience for one learner: an environment, or a driver that
// wraps an environment together with frozen co-players.
class RolloutSource {
 public:
  virtual ~RolloutSource() = default;
  virtual Vec reset() = 0;
  virtual StepResult step(const ForwardRecord& action) = 0;
};

struct IterationMetrics {
  int iteration = 0;
  std::int64_t env_steps = 0;
  double mean_ep_reward = std::numeric_limits<double>::quiet_NaN();
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  int episodes_finished = 0;
};

inline std::string metrics_csv_header() {
  return "iteration,env_steps,mean_ep_reward,policy_loss,value_loss,entropy";
}

class PpoTrainer {
 public:
  PpoTrainer(RolloutSource& source, PolicyNet& net, const PpoConfig& cfg, std::uint64_t seed)
      : source_(source),
        net_(net),
        cfg_(cfg),
        sample_rng_(derive_seed(seed, 1)),
        shuffle_rng_(derive_seed(seed, 2)) {
    if (cfg.steps_per_iter <= 0 || cfg.minibatch <= 0 || cfg.epochs <= 0) {
      throw std::invalid_argument("PpoTrainer: positive steps/minibatch/epochs required");
    }
  }

  IterationMetrics train_iteration() {
    RolloutBatch batch;
    const int n = cfg_.steps_per_iter;
    batch.obs.reserve(n);
    batch.logp_old.reserve(n);
    batch.reward.reserve(n);
    batch.value_old.reserve(n);
    batch.done.reserve(n);

    IterationMetrics metrics;
    double finished_reward_sum = 0.0;
    for (int t = 0; t < n; ++t) {
      if (!episode_active_) {
        pending_obs_ = source_.reset();
        episode_active_ = true;
        episode_reward_ = 0.0;
      }
      ForwardRecord rec = policy_forward(net_, pending_obs_, sample_rng_);
      StepResult sr = source_.step(rec);
      batch.obs.push_back(pending_obs_);
      if (net_.head == ActionHeadKind::Categorical) {
        batch.action_index.push_back(rec.action_index);
      } else {
        batch.action.push_back(rec.action);
      }
      batch.logp_old.push_back(rec.logp);
      batch.value_old.push_back(rec.value);
      batch.reward.push_back(sr.reward);
      batch.done.push_back(sr.done ? 1 : 0);
      episode_reward_ += sr.reward;
      ++env_steps_;
      if (sr.done) {
        episode_active_ = false;
        finished_reward_sum += episode_reward_;
        ++metrics.episodes_finished;
      } else {
        pending_obs_ = sr.obs;
      }
    }

    const double bootstrap = episode_active_ ? value_estimate(net_, pending_obs_) : 0.0;
    auto [adv, ret] = compute_gae(batch.reward, batch.value_old, batch.done, bootstrap,
                                  cfg_.gamma, cfg_.lambda);
    batch.advantage = std::move(adv);
    batch.return_target = std::move(ret);
    normalize_advantages(batch.advantage);

    std::vector<int> order(batch.size());
    std::iota(order.begin(), order.end(), 0);
    double loss_p = 0.0, loss_v = 0.0, loss_e = 0.0;
    int updates = 0;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      for (size_t i = order.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(shuffle_rng_.uniform_int(static_cast<int>(i)));
        std::swap(order[i - 1], order[j]);
      }
      for (size_t start = 0; start < order.size(); start += cfg_.minibatch) {
        const size_t end = std::min(order.size(), start + cfg_.minibatch);
        std::vector<int> mb(order.begin() + start, order.begin() + end);
        PolicyGrads grads = zero_grads_like(net_);
        PpoLossStats stats = ppo_loss(net_, batch, mb, cfg_, &grads);
        Vec flat = flatten_params(net_);
        Vec flat_g = flatten_grads(grads);
        AdamConfig adam_cfg;
        adam_cfg.lr = cfg_.lr;
        adam_step(std::span<double>(flat), std::span<const double>(flat_g), adam_, adam_cfg);
        set_params(net_, flat);
        loss_p += stats.policy_loss;
        loss_v += stats.value_loss;
        loss_e += stats.entropy;
        ++updates;
      }
    }

    ++iteration_;
    metrics.iteration = iteration_;
    metrics.env_steps = env_steps_;
    if (metrics.episodes_finished > 0) {
      metrics.mean_ep_reward = finished_reward_sum / metrics.episodes_finished;
    }
    metrics.policy_loss = loss_p / updates;
    metrics.value_loss = loss_v / updates;
    metrics.entropy = loss_e / updates;
    return metrics;
  }

  std::int64_t env_steps() const { return env_steps_; }
  void set_entropy_coef(double c) { cfg_.entropy_coef = c; }
  const PpoConfig& config() const { return cfg_; }

 private:
  RolloutSource& source_;
  PolicyNet& net_;
  PpoConfig cfg_;
  Rng sample_rng_;
  Rng shuffle_rng_;
  AdamState adam_;
  Vec pending_obs_;
  bool episode_active_ = false;
  double episode_reward_ = 0.0;
  std::int64_t env_steps_ = 0;
  int iteration_ = 0;
};

}  // namespace advpol
