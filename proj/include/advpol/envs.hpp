#pragma once

// Deterministic desk-scale environments.
//
// MiniSoccer: two avatars on a 15x9 grid, zero-sum. Moving onto a free ball
// grabs it, the possessor drags it, carrying it into a goal column scores,
// and first-time tenth-of-field progress while in possession earns shaping
// reward. r_B == -r_A exactly at every step.
//
// ParamRunner: 1-D continuous control with friction and mass multipliers,
// used for the robustness studies.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "advpol/numkit.hpp"
#include "advpol/rng.hpp"

namespace advpol {

// ---------------------------------------------------------------------------
// MiniSoccer
// ---------------------------------------------------------------------------

struct SoccerConfig {
  int width = 15;
  int height = 9;
  int max_steps = 200;
  double steal_prob = 0.5;
  double shaping_per_tenth = 0.1;
};

enum class Side : int { A = 0, B = 1 };

inline Side other(Side s) { return s == Side::A ? Side::B : Side::A; }

// Actions: 0 up, 1 down, 2 left, 3 right, 4 stay.
constexpr int kSoccerActions = 5;

struct GridPos {
  int x = 0;
  int y = 0;
  bool operator==(const GridPos&) const = default;
};

struct MiniSoccerState {
  GridPos pos_a, pos_b, ball;
  int possession = 0;  // 0 none, 1 A, 2 B
  int facing_a = 3;    // A starts facing right (toward its target goal)
  int facing_b = 2;    // B starts facing left
  int step = 0;
  std::uint16_t collected_a = 0;  // bitmask of tenths 1..10 already rewarded
  std::uint16_t collected_b = 0;
};

struct SoccerStepResult {
  double r_a = 0.0;
  double r_b = 0.0;
  int goals_a = 0;  // goals scored by A this step
  int goals_b = 0;
  bool done = false;
};

class MiniSoccer {
 public:
  MiniSoccer(const SoccerConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    if (cfg.width < 5 || cfg.height < 3) {
      throw std::invalid_argument("MiniSoccer: grid too small");
    }
    reset();
  }

  const SoccerConfig& config() const { return cfg_; }
  const MiniSoccerState& state() const { return state_; }
  bool done() const { return done_; }

  void set_state(const MiniSoccerState& s) {
    state_ = s;
    done_ = state_.step >= cfg_.max_steps;
  }

  void reset() {
    state_ = MiniSoccerState{};
    place_kickoff();
    state_.step = 0;
    state_.collected_a = 0;
    state_.collected_b = 0;
    done_ = false;
  }

  SoccerStepResult step(int action_a, int action_b) {
    if (done_) throw std::runtime_error("MiniSoccer::step: episode already finished");
    if (action_a < 0 || action_a >= kSoccerActions || action_b < 0 ||
        action_b >= kSoccerActions) {
      throw std::invalid_argument("MiniSoccer::step: invalid action");
    }

    const GridPos old_a = state_.pos_a, old_b = state_.pos_b, old_ball = state_.ball;
    const GridPos want_a = intended(old_a, action_a);
    const GridPos want_b = intended(old_b, action_b);
    if (action_a < 4) state_.facing_a = action_a;
    if (action_b < 4) state_.facing_b = action_b;

    GridPos new_a = want_a, new_b = want_b;
    if (want_a == want_b) {
      new_a = old_a;  // same-target conflict: neither moves
      new_b = old_b;
    } else if (want_a == old_b && want_b == old_a) {
      new_a = old_a;  // swap conflict: neither moves
      new_b = old_b;
    }
    state_.pos_a = new_a;
    state_.pos_b = new_b;

    // Steal: an avatar that tried to step onto the opponent's cell while the
    // opponent stayed put holding the ball takes it with probability
    // steal_prob (the mover itself stays blocked).
    if (want_a == old_b && new_b == old_b && new_a == old_a && state_.possession == 2) {
      if (rng_.uniform() < cfg_.steal_prob) state_.possession = 1;
    } else if (want_b == old_a && new_a == old_a && new_b == old_b && state_.possession == 1) {
      if (rng_.uniform() < cfg_.steal_prob) state_.possession = 2;
    }

    // Possessor drags the ball.
    if (state_.possession == 1) state_.ball = state_.pos_a;
    if (state_.possession == 2) state_.ball = state_.pos_b;
    // Free ball is grabbed by whoever stands on it.
    if (state_.possession == 0) {
      if (state_.pos_a == state_.ball) state_.possession = 1;
      else if (state_.pos_b == state_.ball) state_.possession = 2;
    }

    // Shaping: first crossing of each tenth of the field toward the
    // possessor's target goal, while the ball moved in possession.
    int tenths_a = 0, tenths_b = 0;
    if (state_.possession != 0 && !(state_.ball == old_ball)) {
      const Side side = state_.possession == 1 ? Side::A : Side::B;
      const int w1 = cfg_.width - 1;
      const int prog_old = side == Side::A ? old_ball.x : w1 - old_ball.x;
      const int prog_new = side == Side::A ? state_.ball.x : w1 - state_.ball.x;
      std::uint16_t& mask = side == Side::A ? state_.collected_a : state_.collected_b;
      for (int k = 1; k <= 10; ++k) {
        const bool was_before = 10 * prog_old < k * w1;
        const bool is_reached = 10 * prog_new >= k * w1;
        if (was_before && is_reached && !(mask & (1u << k))) {
          mask |= (1u << k);
          (side == Side::A ? tenths_a : tenths_b) += 1;
        }
      }
    }

    // Goals: a possessed ball entering a goal column scores for the column's
    // attacker (carrying it into your own column is an own goal).
    int goals_a = 0, goals_b = 0;
    if (state_.possession != 0) {
      if (state_.ball.x == cfg_.width - 1) goals_a = 1;
      else if (state_.ball.x == 0) goals_b = 1;
    }
    if (goals_a || goals_b) place_kickoff();

    SoccerStepResult out;
    out.goals_a = goals_a;
    out.goals_b = goals_b;
    out.r_a = static_cast<double>(goals_a - goals_b) +
              cfg_.shaping_per_tenth * static_cast<double>(tenths_a - tenths_b);
    out.r_b = -out.r_a;
    state_.step += 1;
    done_ = state_.step >= cfg_.max_steps;
    out.done = done_;
    return out;
  }

  // Side-symmetric 12-entry observation, every entry in [-1, 1]:
  //   0-1 own position, 2-3 opponent position, 4-5 ball position (egocentric:
  //   each player sees itself attacking rightward), 6-8 possession one-hot
  //   (own/opponent/none), 9 own-goal side flag (world frame), 10 time
  //   remaining fraction, 11 own shaping-progress fraction.
  Vec observe(Side side) const {
    const bool is_a = side == Side::A;
    const GridPos own = is_a ? state_.pos_a : state_.pos_b;
    const GridPos opp = is_a ? state_.pos_b : state_.pos_a;
    Vec obs(12, 0.0);
    obs[0] = norm_x(own.x, is_a);
    obs[1] = norm_y(own.y);
    obs[2] = norm_x(opp.x, is_a);
    obs[3] = norm_y(opp.y);
    obs[4] = norm_x(state_.ball.x, is_a);
    obs[5] = norm_y(state_.ball.y);
    const int own_poss = is_a ? 1 : 2;
    obs[6] = state_.possession == own_poss ? 1.0 : 0.0;
    obs[7] = state_.possession == (3 - own_poss) ? 1.0 : 0.0;
    obs[8] = state_.possession == 0 ? 1.0 : 0.0;
    obs[9] = is_a ? -1.0 : 1.0;
    obs[10] = static_cast<double>(cfg_.max_steps - state_.step) / cfg_.max_steps;
    obs[11] = static_cast<double>(std::popcount(
                  static_cast<unsigned>(is_a ? state_.collected_a : state_.collected_b))) /
              10.0;
    return obs;
  }

  // For the symmetry property test: mirror the world left-right and swap the
  // players' roles.
  void mirror_swap_state() {
    const int w1 = cfg_.width - 1;
    MiniSoccerState s = state_;
    state_.pos_a = {w1 - s.pos_b.x, s.pos_b.y};
    state_.pos_b = {w1 - s.pos_a.x, s.pos_a.y};
    state_.ball = {w1 - s.ball.x, s.ball.y};
    state_.possession = s.possession == 0 ? 0 : 3 - s.possession;
    state_.facing_a = mirror_action(s.facing_b);
    state_.facing_b = mirror_action(s.facing_a);
    state_.collected_a = s.collected_b;
    state_.collected_b = s.collected_a;
  }

  static int mirror_action(int a) { return a == 2 ? 3 : (a == 3 ? 2 : a); }

 private:
  GridPos intended(GridPos p, int action) const {
    GridPos t = p;
    switch (action) {
      case 0: t.y += 1; break;
      case 1: t.y -= 1; break;
      case 2: t.x -= 1; break;
      case 3: t.x += 1; break;
      default: break;
    }
    if (t.x < 0 || t.x >= cfg_.width || t.y < 0 || t.y >= cfg_.height) return p;
    return t;
  }

  void place_kickoff() {
    state_.pos_a = {2, cfg_.height / 2};
    state_.pos_b = {cfg_.width - 3, cfg_.height / 2};
    state_.ball = {cfg_.width / 2, cfg_.height / 2};
    state_.possession = 0;
    state_.facing_a = 3;
    state_.facing_b = 2;
  }

  double norm_x(int x, bool is_a) const {
    const int w1 = cfg_.width - 1;
    const int ex = is_a ? x : w1 - x;
    return 2.0 * ex / w1 - 1.0;
  }
  double norm_y(int y) const { return 2.0 * y / (cfg_.height - 1) - 1.0; }

  SoccerConfig cfg_;
  MiniSoccerState state_;
  Rng rng_;
  bool done_ = false;
};

// Rule-based opponent working in the egocentric observation frame: chase the
// ball, and once in possession head for the opponent goal (rightward in its
// own frame); 10% seeded random actions. Returns an egocentric action; when
// playing side B the caller mirrors left/right.
inline int scripted_bot(const Vec& obs, Rng& rng, const SoccerConfig& cfg = SoccerConfig{}) {
  if (rng.uniform() < 0.1) return rng.uniform_int(kSoccerActions);
  const auto denorm = [](double v, int n) {
    return static_cast<int>(std::lround((v + 1.0) * 0.5 * (n - 1)));
  };
  const int own_x = denorm(obs[0], cfg.width), own_y = denorm(obs[1], cfg.height);
  const bool possessing = obs[6] > 0.5;
  if (possessing) return 3;  // target goal is rightward in the egocentric frame
  const int ball_x = denorm(obs[4], cfg.width), ball_y = denorm(obs[5], cfg.height);
  const int dx = ball_x - own_x, dy = ball_y - own_y;
  if (dx == 0 && dy == 0) return 3;
  if (std::abs(dx) >= std::abs(dy)) return dx > 0 ? 3 : 2;
  return dy > 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// ParamRunner
// ---------------------------------------------------------------------------

struct RunnerConfig {
  double force = 2.0;
  double friction = 0.15;
  double dt = 0.05;
  double action_cost = 0.01;
  int max_steps = 200;
  double v0_range = 2.0;      // reset draws v0 ~ U(-v0_range, v0_range)
  double obs_vel_scale = 10.0;
  double mass_coef = 1.0;     // shift multipliers; > 0
  double friction_coef = 1.0;
};

struct ParamRunnerState {
  double x = 0.0;
  double v = 0.0;
  int step = 0;
};

class ParamRunner {
 public:
  struct Out {
    double reward = 0.0;
    bool done = false;
  };

  ParamRunner(const RunnerConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    if (cfg.mass_coef <= 0.0 || cfg.friction_coef <= 0.0) {
      throw std::invalid_argument("ParamRunner: coefficients must be positive");
    }
    reset();
  }

  const RunnerConfig& config() const { return cfg_; }
  const ParamRunnerState& state() const { return state_; }
  bool done() const { return done_; }

  Vec reset() {
    state_ = ParamRunnerState{};
    state_.v = rng_.uniform(-cfg_.v0_range, cfg_.v0_range);
    done_ = false;
    return observe();
  }

  Out step(double action) {
    if (done_) throw std::runtime_error("ParamRunner::step: episode already finished");
    const double a = std::min(1.0, std::max(-1.0, action));
    const double v_next = state_.v + cfg_.force * a / cfg_.mass_coef -
                          cfg_.friction * cfg_.friction_coef * state_.v;
    state_.v = v_next;
    state_.x += cfg_.dt * v_next;
    state_.step += 1;
    Out out;
    out.reward = cfg_.dt * v_next - cfg_.action_cost * a * a;
    done_ = state_.step >= cfg_.max_steps;
    out.done = done_;
    return out;
  }

  Vec observe() const {
    return {state_.v / cfg_.obs_vel_scale,
            static_cast<double>(cfg_.max_steps - state_.step) / cfg_.max_steps};
  }

 private:
  RunnerConfig cfg_;
  ParamRunnerState state_;
  Rng rng_;
  bool done_ = false;
};

inline ParamRunner make_shifted_env(double friction_mult, double mass_mult,
                                    const RunnerConfig& base, std::uint64_t seed) {
  if (friction_mult <= 0.0 || mass_mult <= 0.0) {
    throw std::invalid_argument("make_shifted_env: multipliers must be positive");
  }
  RunnerConfig cfg = base;
  cfg.friction_coef = friction_mult;
  cfg.mass_coef = mass_mult;
  return ParamRunner(cfg, seed);
}

}  // namespace advpol
