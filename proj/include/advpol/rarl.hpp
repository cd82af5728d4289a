#pragma once

// Robust adversarial reinforcement learning on ParamRunner: a target and an
// ensemble of three action-space adversaries train in alternating blocks; a
// random ensemble member perturbs each target episode within a delta bound.
// Conditions: plain RL control, black-box RARL, and white-box RARL whose
// adversaries observe the target's action mean and latent activations.
// Robustness is measured adversary-free on an 8x8 friction x mass grid.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "advpol/envs.hpp"
#include "advpol/introspect.hpp"
#include "advpol/parallel.hpp"
#include "advpol/policy.hpp"
#include "advpol/ppo.hpp"
#include "advpol/stats.hpp"

namespace advpol {

enum class RarlCondition : int { RlControl = 0, Rarl = 1, WbRarl = 2 };

inline RarlCondition rarl_condition_from_string(const std::string& s) {
  if (s == "rl") return RarlCondition::RlControl;
  if (s == "rarl") return RarlCondition::Rarl;
  if (s == "wbrarl") return RarlCondition::WbRarl;
  throw std::invalid_argument("unknown rarl condition '" + s + "' (expected rl|rarl|wbrarl)");
}

inline std::string to_string(RarlCondition c) {
  switch (c) {
    case RarlCondition::RlControl: return "rl";
    case RarlCondition::Rarl: return "rarl";
    case RarlCondition::WbRarl: return "wbrarl";
  }
  return "?";
}

// clamp(a_tgt + delta * a_adv, -1, 1) per coordinate; |a_adv|inf <= 1 is the
// caller's contract (adversary actions are tanh-squashed first).
inline Vec perturb_action(const Vec& a_tgt, const Vec& a_adv, double delta) {
  if (a_tgt.size() != a_adv.size()) {
    throw std::invalid_argument("perturb_action: dimension mismatch");
  }
  Vec out(a_tgt.size());
  for (size_t i = 0; i < a_tgt.size(); ++i) {
    out[i] = std::min(1.0, std::max(-1.0, a_tgt[i] + delta * a_adv[i]));
  }
  return out;
}

inline Vec tanh_squash(const Vec& v) {
  Vec out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
  return out;
}

struct RarlConfig {
  RunnerConfig env;
  int hidden = 32;
  PpoConfig target_ppo;
  PpoConfig adversary_ppo;
  int iterations = 120;  // alternation blocks; each side trains one PPO iteration per block
  double delta = 0.5;
  int ensemble = 3;
  int eval_interval = 10;  // blocks between adversary-free evaluations
  int eval_episodes = 20;
  double grid_lo = 0.6;
  double grid_hi = 1.6;
  int grid_n = 8;
  int grid_episodes = 20;
  bool normalize_m = true;
  std::uint64_t eval_seed = 97531;

  RarlConfig() {
    target_ppo.steps_per_iter = 2048;
    target_ppo.minibatch = 256;
    adversary_ppo.steps_per_iter = 2048;
    adversary_ppo.minibatch = 256;
  }
};

constexpr SegmentMask kRarlWhiteBoxMask{false, true, true};  // action + latent

// Target learns; the frozen ensemble perturbs its actions, one randomly drawn
// member per episode. With no ensemble this is plain single-agent training.
class RarlTargetSource : public RolloutSource {
 public:
  RarlTargetSource(const RunnerConfig& env_cfg, const std::vector<PolicyNet>* ensemble,
                   const std::vector<RunningMoments>* moments, bool white_box, double delta,
                   bool normalize, std::uint64_t seed)
      : env_(env_cfg, derive_seed(seed, 1)),
        ensemble_(ensemble),
        moments_(moments),
        white_box_(white_box),
        delta_(delta),
        normalize_(normalize),
        member_rng_(derive_seed(seed, 2)),
        adversary_rng_(derive_seed(seed, 3)) {}

  Vec reset() override {
    Vec obs = env_.reset();
    if (active()) member_ = member_rng_.uniform_int(static_cast<int>(ensemble_->size()));
    return obs;
  }

  StepResult step(const ForwardRecord& target_rec) override {
    Vec executed = target_rec.action;
    if (active()) {
      Vec adv_obs = env_.observe();
      if (white_box_) {
        const IntrospectionVector m = build_m(target_rec, kRarlWhiteBoxMask);
        const Vec mn = normalize_ ? normalize_m(m.payload, (*moments_)[member_]) : m.payload;
        adv_obs = compose_obs(adv_obs, mn);
      }
      const ForwardRecord adv =
          policy_forward((*ensemble_)[member_], adv_obs, adversary_rng_);
      executed = perturb_action(target_rec.action, tanh_squash(adv.action), delta_);
    }
    const ParamRunner::Out out = env_.step(executed[0]);
    StepResult sr;
    sr.reward = out.reward;
    sr.done = out.done;
    if (!out.done) sr.obs = env_.observe();
    return sr;
  }

 private:
  bool active() const { return ensemble_ && !ensemble_->empty() && delta_ > 0.0; }

  ParamRunner env_;
  const std::vector<PolicyNet>* ensemble_;
  const std::vector<RunningMoments>* moments_;
  bool white_box_;
  double delta_;
  bool normalize_;
  Rng member_rng_;
  Rng adversary_rng_;
  int member_ = 0;
};

// One adversary learns against the frozen target in its own environment
// instance; its reward is the exact negation of the target's.
class RarlAdversarySource : public RolloutSource {
 public:
  RarlAdversarySource(const RunnerConfig& env_cfg, const PolicyNet* target,
                      RunningMoments* moments, bool white_box, double delta, bool normalize,
                      std::uint64_t seed)
      : env_(env_cfg, derive_seed(seed, 1)),
        target_(target),
        moments_(moments),
        white_box_(white_box),
        delta_(delta),
        normalize_(normalize),
        target_rng_(derive_seed(seed, 2)) {}

  Vec reset() override {
    const Vec base = env_.reset();
    return compose(base);
  }

  StepResult step(const ForwardRecord& adversary) override {
    const Vec executed =
        perturb_action(pending_.record.action, tanh_squash(adversary.action), delta_);
    const ParamRunner::Out out = env_.step(executed[0]);
    StepResult sr;
    sr.reward = -out.reward;
    sr.done = out.done;
    if (!out.done) sr.obs = compose(env_.observe());
    return sr;
  }

 private:
  Vec compose(const Vec& base) {
    pending_ = extract_m(*target_, base, white_box_ ? kRarlWhiteBoxMask : SegmentMask{},
                         target_rng_);
    if (!white_box_) return base;
    if (normalize_) {
      moments_->update(pending_.m.payload);
      return compose_obs(base, normalize_m(pending_.m.payload, *moments_));
    }
    return compose_obs(base, pending_.m.payload);
  }

  ParamRunner env_;
  const PolicyNet* target_;
  RunningMoments* moments_;
  bool white_box_;
  double delta_;
  bool normalize_;
  Rng target_rng_;
  Extraction pending_;
};

// Adversary-free greedy evaluation on a given environment configuration.
inline double eval_adversary_free(const PolicyNet& net, const RunnerConfig& cfg, int episodes,
                                  std::uint64_t seed, double* sem_out = nullptr) {
  ParamRunner env(cfg, seed);
  std::vector<double> returns;
  returns.reserve(episodes);
  for (int ep = 0; ep < episodes; ++ep) {
    Vec obs = env.reset();
    double total = 0.0;
    while (true) {
      const ForwardRecord rec = deterministic_forward(net, obs);
      const ParamRunner::Out out = env.step(rec.action[0]);
      total += out.reward;
      if (out.done) break;
      obs = env.observe();
    }
    returns.push_back(total);
  }
  if (sem_out) {
    *sem_out = returns.size() >= 2 ? sem(SampleGroup{"eval", returns})
                                   : std::numeric_limits<double>::quiet_NaN();
  }
  return mean_of(returns);
}

struct RarlAgent {
  RarlCondition condition = RarlCondition::RlControl;
  std::uint64_t seed = 0;
  PolicyNet target;
  std::vector<PolicyNet> ensemble;
  Curve eval_curve;  // target env steps -> adversary-free eval reward
  double final_eval = 0.0;
  std::vector<IterationMetrics> metrics;  // target-side training stream
};

inline RarlAgent rarl_train(RarlCondition condition, const RarlConfig& cfg,
                            std::uint64_t seed) {
  RarlAgent agent;
  agent.condition = condition;
  agent.seed = seed;

  Rng init_rng(derive_seed(seed, 1));
  PolicyConfig tpc;
  tpc.obs_dim = 2;
  tpc.action_dim = 1;
  tpc.head = ActionHeadKind::Gaussian;
  tpc.hidden = cfg.hidden;
  agent.target = make_policy(tpc, init_rng);

  const bool adversarial = condition != RarlCondition::RlControl;
  const bool white_box = condition == RarlCondition::WbRarl;
  std::vector<RunningMoments> moments;
  if (adversarial) {
    const int m_len = 1 + cfg.hidden;  // action mean + latent
    PolicyConfig apc;
    apc.obs_dim = 2 + (white_box ? m_len : 0);
    apc.action_dim = 1;
    apc.head = ActionHeadKind::Gaussian;
    apc.hidden = cfg.hidden;
    for (int i = 0; i < cfg.ensemble; ++i) {
      Rng adv_init(derive_seed(seed, 10 + i));
      agent.ensemble.push_back(make_policy(apc, adv_init));
    }
    moments.resize(cfg.ensemble);
  }

  RarlTargetSource target_source(cfg.env, adversarial ? &agent.ensemble : nullptr, &moments,
                                 white_box, cfg.delta, cfg.normalize_m, derive_seed(seed, 2));
  PpoTrainer target_trainer(target_source, agent.target, cfg.target_ppo, derive_seed(seed, 3));

  std::vector<RarlAdversarySource> adv_sources;
  std::vector<PpoTrainer> adv_trainers;
  adv_sources.reserve(cfg.ensemble);
  adv_trainers.reserve(cfg.ensemble);
  if (adversarial) {
    for (int i = 0; i < cfg.ensemble; ++i) {
      adv_sources.emplace_back(cfg.env, &agent.target, &moments[i], white_box, cfg.delta,
                               cfg.normalize_m, derive_seed(seed, 20 + i));
    }
    for (int i = 0; i < cfg.ensemble; ++i) {
      adv_trainers.emplace_back(adv_sources[i], agent.ensemble[i], cfg.adversary_ppo,
                                derive_seed(seed, 30 + i));
    }
  }

  int eval_index = 0;
  for (int block = 1; block <= cfg.iterations; ++block) {
    agent.metrics.push_back(target_trainer.train_iteration());
    if (adversarial) {
      for (auto& t : adv_trainers) t.train_iteration();
    }
    if (block % cfg.eval_interval == 0 || block == cfg.iterations) {
      const double score = eval_adversary_free(agent.target, cfg.env, cfg.eval_episodes,
                                               derive_seed(cfg.eval_seed, ++eval_index));
      agent.eval_curve.push_back({target_trainer.env_steps(), score});
    }
  }
  agent.final_eval = agent.eval_curve.back().value;
  return agent;
}

// ---------------------------------------------------------------------------
// Domain-shift grid
// ---------------------------------------------------------------------------

struct GridCell {
  double friction_mult = 1.0;
  double mass_mult = 1.0;
  double mean = 0.0;
  double sem = 0.0;
  int n = 0;
};

struct GridResult {
  std::vector<GridCell> cells;  // row-major over (friction index, mass index)
  double grid_mean = 0.0;
};

inline double grid_value(const RarlConfig& cfg, int index) {
  return cfg.grid_lo + (cfg.grid_hi - cfg.grid_lo) * index / (cfg.grid_n - 1);
}

inline GridResult domain_shift_grid(const PolicyNet& target, const RarlConfig& cfg,
                                    std::uint64_t seed) {
  GridResult out;
  out.cells.reserve(cfg.grid_n * cfg.grid_n);
  double total = 0.0;
  for (int i = 0; i < cfg.grid_n; ++i) {
    for (int j = 0; j < cfg.grid_n; ++j) {
      GridCell cell;
      cell.friction_mult = grid_value(cfg, i);
      cell.mass_mult = grid_value(cfg, j);
      RunnerConfig shifted = cfg.env;
      shifted.friction_coef = cell.friction_mult;
      shifted.mass_coef = cell.mass_mult;
      double cell_sem = 0.0;
      cell.mean = eval_adversary_free(target, shifted, cfg.grid_episodes,
                                      derive_seed(seed, i * cfg.grid_n + j), &cell_sem);
      cell.sem = cell_sem;
      cell.n = cfg.grid_episodes;
      total += cell.mean;
      out.cells.push_back(cell);
    }
  }
  out.grid_mean = total / static_cast<double>(cfg.grid_n * cfg.grid_n);
  return out;
}

// ---------------------------------------------------------------------------
// Full study
// ---------------------------------------------------------------------------

struct RarlStudyAgent {
  RarlAgent agent;
  GridResult grid;  // filled for selected agents only
  bool selected = false;
  int rank = 0;
};

struct RarlStudy {
  std::map<RarlCondition, std::vector<RarlStudyAgent>> agents;
  WelchResult wb_vs_rl;    // H1: WB-RARL grid means exceed RL control
  WelchResult wb_vs_rarl;  // H1: WB-RARL grid means exceed RARL
  // corner_pass[condition][corner] = number of selected agents whose corner
  // cell beats the RL-control mean for that corner.
  std::map<RarlCondition, std::vector<int>> corner_pass;
  std::vector<int> corner_cells;
};

inline std::vector<double> grid_means_of(const std::vector<RarlStudyAgent>& v) {
  std::vector<double> out;
  for (const auto& a : v) {
    if (a.selected) out.push_back(a.grid.grid_mean);
  }
  return out;
}

inline RarlStudy rarl_study(const RarlConfig& cfg, int agents_per_condition,
                            std::uint64_t master_seed, int jobs) {
  if (agents_per_condition < 2) {
    throw std::invalid_argument("rarl_study: need at least 2 agents per condition");
  }
  const RarlCondition conditions[] = {RarlCondition::RlControl, RarlCondition::Rarl,
                                      RarlCondition::WbRarl};
  struct Spec {
    RarlCondition condition;
    std::uint64_t seed;
    int index;
  };
  std::vector<Spec> specs;
  for (RarlCondition c : conditions) {
    for (int a = 0; a < agents_per_condition; ++a) {
      specs.push_back({c, derive_seed(master_seed, static_cast<int>(c) * 100000 + a), a});
    }
  }
  std::vector<RarlStudyAgent> trained(specs.size());
  parallel_for(static_cast<int>(specs.size()), jobs, [&](int i) {
    trained[i].agent = rarl_train(specs[i].condition, cfg, specs[i].seed);
  });

  RarlStudy study;
  for (size_t i = 0; i < specs.size(); ++i) {
    study.agents[specs[i].condition].push_back(std::move(trained[i]));
  }

  // Select the top half per condition by final adversary-free evaluation;
  // ties break toward the lower seed.
  const int keep = agents_per_condition / 2 + (agents_per_condition % 2);
  for (RarlCondition c : conditions) {
    auto& v = study.agents[c];
    std::vector<int> order(v.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (v[a].agent.final_eval != v[b].agent.final_eval) {
        return v[a].agent.final_eval > v[b].agent.final_eval;
      }
      return v[a].agent.seed < v[b].agent.seed;
    });
    for (size_t r = 0; r < order.size(); ++r) {
      v[order[r]].rank = static_cast<int>(r);
      v[order[r]].selected = static_cast<int>(r) < keep;
    }
    int surviving = 0;
    for (const auto& a : v) {
      if (a.selected) ++surviving;
    }
    if (surviving < 2) {
      throw std::runtime_error("rarl_study: fewer than 2 surviving agents for condition " +
                               to_string(c));
    }
  }

  // Grid evaluation for selected agents, in parallel.
  std::vector<RarlStudyAgent*> to_grid;
  for (RarlCondition c : conditions) {
    for (auto& a : study.agents[c]) {
      if (a.selected) to_grid.push_back(&a);
    }
  }
  parallel_for(static_cast<int>(to_grid.size()), jobs, [&](int i) {
    to_grid[i]->grid = domain_shift_grid(to_grid[i]->agent.target, cfg,
                                         derive_seed(cfg.eval_seed, 555));
  });

  study.wb_vs_rl = welch_t_one_sided(
      {"wbrarl", grid_means_of(study.agents[RarlCondition::WbRarl])},
      {"rl", grid_means_of(study.agents[RarlCondition::RlControl])});
  study.wb_vs_rarl = welch_t_one_sided(
      {"wbrarl", grid_means_of(study.agents[RarlCondition::WbRarl])},
      {"rarl", grid_means_of(study.agents[RarlCondition::Rarl])});

  // Extreme-shift corners: agents beating the RL-control mean per corner.
  const int n = cfg.grid_n;
  study.corner_cells = {0, n - 1, (n - 1) * n, n * n - 1};
  for (RarlCondition c : {RarlCondition::Rarl, RarlCondition::WbRarl}) {
    std::vector<int> pass;
    for (int cell : study.corner_cells) {
      std::vector<double> control;
      for (const auto& a : study.agents[RarlCondition::RlControl]) {
        if (a.selected) control.push_back(a.grid.cells[cell].mean);
      }
      const double control_mean = mean_of(control);
      int count = 0;
      for (const auto& a : study.agents[c]) {
        if (a.selected && a.grid.cells[cell].mean >= control_mean) ++count;
      }
      pass.push_back(count);
    }
    study.corner_pass[c] = pass;
  }
  return study;
}

}  // namespace advpol
