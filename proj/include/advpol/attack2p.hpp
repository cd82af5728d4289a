#pragma once

// Two-player attack pipeline: pretrain target agents in two phases (entropy
// reward vs a scripted bot, then entropy penalty vs a frozen phase-1
// snapshot), then train adversaries of each introspection mode against the
// frozen targets and compare modes with one-sided Welch tests on net points.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advpol/envs.hpp"
#include "advpol/introspect.hpp"
#include "advpol/parallel.hpp"
#include "advpol/policy.hpp"
#include "advpol/ppo.hpp"
#include "advpol/stats.hpp"

namespace advpol {

struct Attack2pConfig {
  SoccerConfig env;
  int hidden = 64;
  PpoConfig ppo;  // steps_per_iter must divide eval_interval
  double attack_lr = 1.5e-4;  // adversary updates; pretraining keeps ppo.lr
  double pretrain_entropy1 = 0.01;   // entropy reward, phase 1
  double pretrain_entropy2 = 0.001;  // entropy penalty magnitude, phase 2
  int pretrain_steps1 = 300000;
  int pretrain_steps2 = 300000;
  int gate_episodes = 100;
  int attack_steps = 500000;
  int eval_interval = 25000;
  int eval_episodes = 20;
  bool deterministic_target = false;
  bool normalize_m = true;
  bool require_gate = true;  // drop artifacts that fail the phase-1 competence gate
  std::uint64_t eval_seed = 424242;  // shared across runs: same eval conditions per point

  Attack2pConfig() {
    ppo.steps_per_iter = 2500;
    ppo.minibatch = 250;
  }
};

namespace detail2p {

// Seed-tree labels.
constexpr std::uint64_t kPolicyInit = 1;
constexpr std::uint64_t kTrainer = 2;
constexpr std::uint64_t kEnv = 3;
constexpr std::uint64_t kOpponent = 4;
constexpr std::uint64_t kTargetStream = 5;

}  // namespace detail2p

// Learner plays one side of MiniSoccer against a fixed opponent policy that
// consumes its own egocentric observation. Egocentric actions of side B map
// to world actions by mirroring left/right.
class SoccerSource : public RolloutSource {
 public:
  using OpponentFn = std::function<int(const Vec& obs, Rng& rng)>;

  SoccerSource(const SoccerConfig& cfg, Side learner_side, OpponentFn opponent,
               std::uint64_t seed)
      : env_(cfg, derive_seed(seed, detail2p::kEnv)),
        learner_side_(learner_side),
        opponent_(std::move(opponent)),
        opponent_rng_(derive_seed(seed, detail2p::kOpponent)) {}

  Vec reset() override {
    env_.reset();
    return env_.observe(learner_side_);
  }

  StepResult step(const ForwardRecord& learner) override {
    const int ego = learner.action_index;
    const int world_learner = learner_side_ == Side::A ? ego : MiniSoccer::mirror_action(ego);
    const int opp_ego = opponent_(env_.observe(other(learner_side_)), opponent_rng_);
    const int world_opp =
        other(learner_side_) == Side::A ? opp_ego : MiniSoccer::mirror_action(opp_ego);
    const SoccerStepResult r = learner_side_ == Side::A ? env_.step(world_learner, world_opp)
                                                        : env_.step(world_opp, world_learner);
    StepResult out;
    out.reward = learner_side_ == Side::A ? r.r_a : r.r_b;
    out.done = r.done;
    if (!r.done) out.obs = env_.observe(learner_side_);
    return out;
  }

 private:
  MiniSoccer env_;
  Side learner_side_;
  OpponentFn opponent_;
  Rng opponent_rng_;
};

inline SoccerSource::OpponentFn bot_opponent(const SoccerConfig& cfg) {
  return [cfg](const Vec& obs, Rng& rng) { return scripted_bot(obs, rng, cfg); };
}

inline SoccerSource::OpponentFn frozen_policy_opponent(const PolicyNet& net,
                                                       bool deterministic = false) {
  return [&net, deterministic](const Vec& obs, Rng& rng) {
    return deterministic ? deterministic_forward(net, obs).action_index
                         : policy_forward(net, obs, rng).action_index;
  };
}

// Adversary (learner, side B) against a frozen target (side A) with
// introspection: each step runs the target forward exactly once; that pass
// supplies both the target's executed action and the m_t segments composed
// into the adversary's observation.
class AttackSource : public RolloutSource {
 public:
  AttackSource(const SoccerConfig& cfg, const PolicyNet& target, IntrospectionMode mode,
               bool deterministic_target, bool normalize, std::uint64_t seed)
      : env_(cfg, derive_seed(seed, detail2p::kEnv)),
        target_(target),
        mode_(mode),
        deterministic_target_(deterministic_target),
        normalize_(normalize),
        target_rng_(derive_seed(seed, detail2p::kTargetStream)) {}

  Vec reset() override {
    env_.reset();
    return compose_current();
  }

  StepResult step(const ForwardRecord& adversary) override {
    const int world_b = MiniSoccer::mirror_action(adversary.action_index);
    const SoccerStepResult r = env_.step(pending_.record.action_index, world_b);
    last_goals_for_ = r.goals_b;
    last_goals_against_ = r.goals_a;
    StepResult out;
    out.reward = r.r_b;
    out.done = r.done;
    if (!r.done) out.obs = compose_current();
    return out;
  }

  const RunningMoments& moments() const { return moments_; }
  int adversary_obs_dim() const {
    return 12 + build_m(detail::policy_eval(target_, Vec(12, 0.0), nullptr), mask_for(mode_))
                    .layout.total();
  }

 private:
  Vec compose_current() {
    pending_ = extract_m(target_, env_.observe(Side::A), mode_, target_rng_,
                         deterministic_target_);
    if (pending_.m.payload.empty()) return env_.observe(Side::B);
    if (!normalize_) return compose_obs(env_.observe(Side::B), pending_.m.payload);
    moments_.update(pending_.m.payload);
    return compose_obs(env_.observe(Side::B), normalize_m(pending_.m.payload, moments_));
  }

  MiniSoccer env_;
  const PolicyNet& target_;
  IntrospectionMode mode_;
  bool deterministic_target_;
  bool normalize_;
  Rng target_rng_;
  Extraction pending_;
  RunningMoments moments_;
  int last_goals_for_ = 0;
  int last_goals_against_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation: net points per episode (goals only), deterministic play.
// ---------------------------------------------------------------------------

// Mean (goals_for - goals_against) per episode for the side-B policy against
// the side-A target, both acting greedily; m_t normalization uses the frozen
// moments that were learned during training.
inline double eval_net_points_vs_target(const PolicyNet& adversary, const PolicyNet& target,
                                        IntrospectionMode mode, const RunningMoments& moments,
                                        bool normalize, const SoccerConfig& cfg, int episodes,
                                        std::uint64_t seed) {
  MiniSoccer env(cfg, seed);
  Rng unused(0);
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset();
    int net_points = 0;
    while (!env.done()) {
      Extraction ex = extract_m(target, env.observe(Side::A), mode, unused, true);
      Vec obs_b = env.observe(Side::B);
      if (!ex.m.payload.empty()) {
        const Vec m = normalize ? normalize_m(ex.m.payload, moments) : ex.m.payload;
        obs_b = compose_obs(obs_b, m);
      }
      const int world_b =
          MiniSoccer::mirror_action(deterministic_forward(adversary, obs_b).action_index);
      const SoccerStepResult r = env.step(ex.record.action_index, world_b);
      net_points += r.goals_b - r.goals_a;
    }
    total += static_cast<double>(net_points);
  }
  return total / static_cast<double>(episodes);
}

// Mean net points of a side-A policy against the scripted bot (side B).
inline double eval_net_points_vs_bot(const PolicyNet& agent, const SoccerConfig& cfg,
                                     int episodes, std::uint64_t seed) {
  MiniSoccer env(cfg, derive_seed(seed, 1));
  Rng bot_rng(derive_seed(seed, 2));
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset();
    int net_points = 0;
    while (!env.done()) {
      const int a = deterministic_forward(agent, env.observe(Side::A)).action_index;
      const int b_ego = scripted_bot(env.observe(Side::B), bot_rng, cfg);
      const SoccerStepResult r = env.step(a, MiniSoccer::mirror_action(b_ego));
      net_points += r.goals_a - r.goals_b;
    }
    total += static_cast<double>(net_points);
  }
  return total / static_cast<double>(episodes);
}

// ---------------------------------------------------------------------------
// Target pretraining
// ---------------------------------------------------------------------------

struct TargetArtifact {
  PolicyNet net;
  std::vector<IterationMetrics> metrics1;  // phase-1 training stream
  std::vector<IterationMetrics> metrics2;  // phase-2 training stream
  std::uint64_t seed = 0;
  bool competent = false;       // phase-1 competence gate
  double gate_net_points = 0.0; // vs bot at end of phase 1
  double final_net_points = 0.0;// vs bot at end of phase 2
  int phase1_steps = 0;
  int phase2_steps = 0;
  double entropy1 = 0.0;
  double entropy2 = 0.0;
};

inline TargetArtifact pretrain_target(const Attack2pConfig& cfg, std::uint64_t seed) {
  TargetArtifact art;
  art.seed = seed;
  art.phase1_steps = cfg.pretrain_steps1;
  art.phase2_steps = cfg.pretrain_steps2;
  art.entropy1 = cfg.pretrain_entropy1;
  art.entropy2 = -cfg.pretrain_entropy2;

  Rng init_rng(derive_seed(seed, detail2p::kPolicyInit));
  PolicyConfig pc;
  pc.obs_dim = 12;
  pc.action_dim = kSoccerActions;
  pc.head = ActionHeadKind::Categorical;
  pc.hidden = cfg.hidden;
  art.net = make_policy(pc, init_rng);

  // Phase 1: vs the scripted bot, entropy rewarded.
  {
    SoccerSource source(cfg.env, Side::A, bot_opponent(cfg.env), derive_seed(seed, 100));
    PpoConfig ppo = cfg.ppo;
    ppo.entropy_coef = cfg.pretrain_entropy1;
    PpoTrainer trainer(source, art.net, ppo, derive_seed(seed, 101));
    while (trainer.env_steps() < cfg.pretrain_steps1) {
      art.metrics1.push_back(trainer.train_iteration());
    }
  }
  art.gate_net_points =
      eval_net_points_vs_bot(art.net, cfg.env, cfg.gate_episodes, derive_seed(seed, 102));
  art.competent = art.gate_net_points > 0.0;

  // Phase 2: vs a frozen phase-1 snapshot of itself, entropy penalized.
  PolicyNet snapshot = art.net;
  {
    SoccerSource source(cfg.env, Side::A, frozen_policy_opponent(snapshot),
                        derive_seed(seed, 200));
    PpoConfig ppo = cfg.ppo;
    ppo.entropy_coef = -cfg.pretrain_entropy2;
    PpoTrainer trainer(source, art.net, ppo, derive_seed(seed, 201));
    while (trainer.env_steps() < cfg.pretrain_steps2) {
      art.metrics2.push_back(trainer.train_iteration());
    }
  }
  art.final_net_points =
      eval_net_points_vs_bot(art.net, cfg.env, cfg.gate_episodes, derive_seed(seed, 202));
  return art;
}

// Pretrain a pool of competent targets. Seeds advance deterministically until
// `count` artifacts pass the phase-1 gate; gated-out artifacts are dropped.
inline std::vector<TargetArtifact> pretrain_target_pool(const Attack2pConfig& cfg, int count,
                                                        std::uint64_t master_seed, int jobs) {
  std::vector<TargetArtifact> pool;
  std::uint64_t next_label = 0;
  while (static_cast<int>(pool.size()) < count) {
    const int batch = count - static_cast<int>(pool.size());
    std::vector<TargetArtifact> batch_out(batch);
    const std::uint64_t base = next_label;
    parallel_for(batch, jobs, [&](int i) {
      batch_out[i] = pretrain_target(cfg, derive_seed(master_seed, base + i));
    });
    next_label += batch;
    for (auto& art : batch_out) {
      if (art.competent || !cfg.require_gate) pool.push_back(std::move(art));
    }
    if (next_label > static_cast<std::uint64_t>(4 * count)) {
      throw std::runtime_error("pretrain_target_pool: too many targets failed the gate (" +
                               std::to_string(pool.size()) + "/" + std::to_string(count) +
                               " competent)");
    }
  }
  pool.resize(count);
  return pool;
}

// ---------------------------------------------------------------------------
// Adversary training and mode comparison
// ---------------------------------------------------------------------------

struct AttackRunResult {
  IntrospectionMode mode = IntrospectionMode::BlackBox;
  int target_index = 0;
  std::uint64_t run_seed = 0;
  Curve curve;  // env_steps -> mean net points per episode
  PolicyNet adversary;
  RunningMoments moments;
  std::vector<IterationMetrics> metrics;
};

inline AttackRunResult train_adversary(const TargetArtifact& target, IntrospectionMode mode,
                                       const Attack2pConfig& cfg, std::uint64_t run_seed) {
  if (cfg.eval_interval % cfg.ppo.steps_per_iter != 0) {
    throw std::invalid_argument("attack2p: eval_interval must be a multiple of steps_per_iter");
  }
  AttackRunResult result;
  result.mode = mode;
  result.run_seed = run_seed;

  AttackSource source(cfg.env, target.net, mode, cfg.deterministic_target, cfg.normalize_m,
                      derive_seed(run_seed, 300));
  Rng init_rng(derive_seed(run_seed, detail2p::kPolicyInit));
  PolicyConfig pc;
  pc.obs_dim = source.adversary_obs_dim();
  pc.action_dim = kSoccerActions;
  pc.head = ActionHeadKind::Categorical;
  pc.hidden = cfg.hidden;
  result.adversary = make_policy(pc, init_rng);

  PpoConfig attack_ppo = cfg.ppo;
  attack_ppo.lr = cfg.attack_lr;
  PpoTrainer trainer(source, result.adversary, attack_ppo, derive_seed(run_seed, 301));
  std::int64_t next_eval = cfg.eval_interval;
  while (trainer.env_steps() < cfg.attack_steps) {
    result.metrics.push_back(trainer.train_iteration());
    if (trainer.env_steps() >= next_eval) {
      const int eval_index = static_cast<int>(next_eval / cfg.eval_interval);
      const double net_points = eval_net_points_vs_target(
          result.adversary, target.net, mode, source.moments(), cfg.normalize_m, cfg.env,
          cfg.eval_episodes, derive_seed(cfg.eval_seed, eval_index));
      result.curve.push_back({next_eval, net_points});
      next_eval += cfg.eval_interval;
    }
  }
  result.moments = source.moments();
  return result;
}

struct ModeTestRow {
  IntrospectionMode mode = IntrospectionMode::BlackBox;  // tested against BlackBox
  std::int64_t step = 0;
  WelchResult welch;
  int n_mode = 0;
  int n_blackbox = 0;
};

struct ModeComparison {
  std::vector<AttackRunResult> runs;
  std::map<IntrospectionMode, std::vector<AggregatedPoint>> aggregated;
  std::vector<ModeTestRow> tests;
};

inline std::vector<double> curve_values_at(const std::vector<AttackRunResult>& runs,
                                           IntrospectionMode mode, size_t point_index) {
  std::vector<double> vals;
  for (const auto& r : runs) {
    if (r.mode == mode) vals.push_back(r.curve.at(point_index).value);
  }
  return vals;
}

// Train every (mode, target, seed) combination and compare each white-box
// mode against the black-box control at the final evaluation point and at an
// early-budget point (10% of the curve).
inline ModeComparison compare_modes(const std::vector<TargetArtifact>& targets,
                                    const std::vector<IntrospectionMode>& modes,
                                    int seeds_per_pair, const Attack2pConfig& cfg,
                                    std::uint64_t master_seed, int jobs) {
  if (targets.empty() || modes.empty() || seeds_per_pair < 1) {
    throw std::invalid_argument("compare_modes: need targets, modes and seeds");
  }
  struct RunSpec {
    IntrospectionMode mode;
    int target_index;
    std::uint64_t seed;
  };
  std::vector<RunSpec> specs;
  for (size_t m = 0; m < modes.size(); ++m) {
    for (size_t t = 0; t < targets.size(); ++t) {
      for (int s = 0; s < seeds_per_pair; ++s) {
        const std::uint64_t label = (m + 1) * 1000000 + t * 1000 + s;
        specs.push_back({modes[m], static_cast<int>(t), derive_seed(master_seed, label)});
      }
    }
  }
  ModeComparison cmp;
  cmp.runs.resize(specs.size());
  parallel_for(static_cast<int>(specs.size()), jobs, [&](int i) {
    cmp.runs[i] = train_adversary(targets[specs[i].target_index], specs[i].mode, cfg,
                                  specs[i].seed);
    cmp.runs[i].target_index = specs[i].target_index;
  });

  for (IntrospectionMode mode : modes) {
    std::vector<Curve> curves;
    for (const auto& r : cmp.runs) {
      if (r.mode == mode) curves.push_back(r.curve);
    }
    cmp.aggregated[mode] = aggregate_curves(curves);
  }

  const bool has_blackbox =
      std::find(modes.begin(), modes.end(), IntrospectionMode::BlackBox) != modes.end();
  if (has_blackbox && !cmp.runs.empty() && !cmp.runs.front().curve.empty()) {
    const size_t n_points = cmp.runs.front().curve.size();
    const size_t final_idx = n_points - 1;
    const size_t early_idx = std::max<size_t>(1, n_points / 10) - 1;
    for (IntrospectionMode mode : modes) {
      if (mode == IntrospectionMode::BlackBox) continue;
      for (size_t idx : {early_idx, final_idx}) {
        std::vector<double> a = curve_values_at(cmp.runs, mode, idx);
        std::vector<double> b = curve_values_at(cmp.runs, IntrospectionMode::BlackBox, idx);
        ModeTestRow row;
        row.mode = mode;
        row.step = cmp.runs.front().curve[idx].step;
        row.n_mode = static_cast<int>(a.size());
        row.n_blackbox = static_cast<int>(b.size());
        if (a.size() >= 2 && b.size() >= 2) {
          row.welch = welch_t_one_sided({to_string(mode), a}, {"blackbox", b});
          cmp.tests.push_back(row);
        }
        if (idx == final_idx) break;  // early == final when the curve is short
      }
    }
  }
  return cmp;
}

}  // namespace advpol
