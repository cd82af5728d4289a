#pragma once

// Experiment orchestration: defaults registry, artifact directories, run
// manifests (materialized config + a git-style content hash of the binary),
// and the dispatchers that drive each experiment kind and write its CSVs.
// Rerunning a saved manifest reproduces every CSV byte for byte.

#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "advpol/attack2p.hpp"
#include "advpol/config.hpp"
#include "advpol/io.hpp"
#include "advpol/lmattack.hpp"
#include "advpol/rarl.hpp"
#include "advpol/stats.hpp"

namespace advpol {

inline std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("sha1: digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

// SHA-1 of "blob <size>\0<content>", the way git hashes file contents.
inline std::string git_blob_sha1(const std::string& content) {
  std::string framed = "blob " + std::to_string(content.size());
  framed.push_back('\0');
  framed += content;
  return sha1_hex(framed);
}

inline std::string self_binary_sha1() {
  try {
    return git_blob_sha1(read_text_file("/proc/self/exe"));
  } catch (...) {
    return "unavailable";
  }
}

// ---------------------------------------------------------------------------
// Defaults registry
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> config_defaults() {
  return {
      {"experiment.kind", ""},
      {"experiment.seed", "1"},
      {"experiment.jobs", "0"},
      {"experiment.out_dir", ""},

      // single-mode override for the two-player attack (empty: use
      // attack2p.modes)
      {"adversary.mode", ""},

      {"ppo.gamma", "0.99"},
      {"ppo.lambda", "0.95"},
      {"ppo.clip_eps", "0.2"},
      {"ppo.value_coef", "0.5"},
      {"ppo.epochs", "4"},
      {"ppo.lr", "0.0003"},

      {"env.soccer.width", "15"},
      {"env.soccer.height", "9"},
      {"env.soccer.max_steps", "200"},
      {"env.soccer.steal_prob", "0.5"},
      {"env.soccer.shaping", "0.1"},

      {"env.runner.force", "2.0"},
      {"env.runner.friction", "0.15"},
      {"env.runner.dt", "0.05"},
      {"env.runner.action_cost", "1.0"},
      {"env.runner.max_steps", "200"},
      {"env.runner.v0_range", "2.0"},
      {"env.runner.obs_vel_scale", "10.0"},

      {"attack2p.hidden", "64"},
      {"attack2p.targets", "10"},
      {"attack2p.seeds_per_mode", "3"},
      {"attack2p.modes", "blackbox,latent"},
      {"attack2p.steps", "500000"},
      {"attack2p.eval_interval", "25000"},
      {"attack2p.eval_episodes", "20"},
      {"attack2p.pretrain_steps1", "300000"},
      {"attack2p.pretrain_steps2", "300000"},
      {"attack2p.gate_episodes", "100"},
      {"attack2p.entropy1", "0.01"},
      {"attack2p.entropy2", "0.001"},
      {"attack2p.adversary_entropy", "0.01"},
      {"attack2p.deterministic_target", "false"},
      {"attack2p.require_gate", "true"},
      {"attack2p.normalize_m", "true"},
      {"attack2p.eval_seed", "424242"},
      {"attack2p.attack_lr", "0.00015"},
      {"attack2p.steps_per_iter", "2500"},
      {"attack2p.minibatch", "250"},

      {"lm.vocab", "64"},
      {"lm.d_model", "32"},
      {"lm.layers", "4"},
      {"lm.heads", "2"},
      {"lm.context", "32"},
      {"lm.mlp_ratio", "4"},
      {"lm.hook_layer", "2"},
      {"lm.init_seed", "20240602"},

      {"lmattack.mode", "both"},
      {"lmattack.seeds", "9"},
      {"lmattack.episodes", "20000"},
      {"lmattack.eval_interval", "2000"},
      {"lmattack.eval_prompts", "200"},
      {"lmattack.alpha", "3.0"},
      {"lmattack.temperature", "1.0"},
      {"lmattack.forbidden", "60,61,62,63"},
      {"lmattack.k_s", "10"},
      {"lmattack.k_c", "15"},
      {"lmattack.hidden", "32"},
      {"lmattack.normalize_m", "true"},
      {"lmattack.eval_seed", "7777"},
      {"lmattack.steps_per_iter", "100"},
      {"lmattack.minibatch", "25"},
      {"lmattack.lr", "0.001"},
      {"lmattack.entropy", "0.01"},
      {"lmattack.budget_fraction_test", "0.6"},

      {"rarl.condition", "all"},
      {"rarl.agents", "10"},
      {"rarl.steps", "737280"},
      {"rarl.delta", "0.5"},
      {"rarl.ensemble", "3"},
      {"rarl.hidden", "32"},
      {"rarl.eval_interval", "30"},
      {"rarl.eval_episodes", "20"},
      {"rarl.grid_lo", "0.6"},
      {"rarl.grid_hi", "1.6"},
      {"rarl.grid_n", "8"},
      {"rarl.grid_episodes", "20"},
      {"rarl.normalize_m", "true"},
      {"rarl.eval_seed", "97531"},
      {"rarl.steps_per_iter", "2048"},
      {"rarl.minibatch", "256"},
      {"rarl.entropy", "0.01"},
  };
}

// ---------------------------------------------------------------------------
// Config -> driver structs
// ---------------------------------------------------------------------------

inline PpoConfig ppo_from_config(const Config& c) {
  PpoConfig p;
  p.gamma = c.get_real("ppo.gamma");
  p.lambda = c.get_real("ppo.lambda");
  p.clip_eps = c.get_real("ppo.clip_eps");
  p.value_coef = c.get_real("ppo.value_coef");
  p.epochs = static_cast<int>(c.get_int("ppo.epochs"));
  p.lr = c.get_real("ppo.lr");
  return p;
}

inline SoccerConfig soccer_from_config(const Config& c) {
  SoccerConfig s;
  s.width = static_cast<int>(c.get_int("env.soccer.width"));
  s.height = static_cast<int>(c.get_int("env.soccer.height"));
  s.max_steps = static_cast<int>(c.get_int("env.soccer.max_steps"));
  s.steal_prob = c.get_real("env.soccer.steal_prob");
  s.shaping_per_tenth = c.get_real("env.soccer.shaping");
  return s;
}

inline RunnerConfig runner_from_config(const Config& c) {
  RunnerConfig r;
  r.force = c.get_real("env.runner.force");
  r.friction = c.get_real("env.runner.friction");
  r.dt = c.get_real("env.runner.dt");
  r.action_cost = c.get_real("env.runner.action_cost");
  r.max_steps = static_cast<int>(c.get_int("env.runner.max_steps"));
  r.v0_range = c.get_real("env.runner.v0_range");
  r.obs_vel_scale = c.get_real("env.runner.obs_vel_scale");
  return r;
}

inline Attack2pConfig attack2p_from_config(const Config& c) {
  Attack2pConfig a;
  a.env = soccer_from_config(c);
  a.hidden = static_cast<int>(c.get_int("attack2p.hidden"));
  a.ppo = ppo_from_config(c);
  a.ppo.steps_per_iter = static_cast<int>(c.get_int("attack2p.steps_per_iter"));
  a.ppo.minibatch = static_cast<int>(c.get_int("attack2p.minibatch"));
  a.ppo.entropy_coef = c.get_real("attack2p.adversary_entropy");
  a.attack_lr = c.get_real("attack2p.attack_lr");
  a.pretrain_entropy1 = c.get_real("attack2p.entropy1");
  a.pretrain_entropy2 = c.get_real("attack2p.entropy2");
  a.pretrain_steps1 = static_cast<int>(c.get_int("attack2p.pretrain_steps1"));
  a.pretrain_steps2 = static_cast<int>(c.get_int("attack2p.pretrain_steps2"));
  a.gate_episodes = static_cast<int>(c.get_int("attack2p.gate_episodes"));
  a.attack_steps = static_cast<int>(c.get_int("attack2p.steps"));
  a.eval_interval = static_cast<int>(c.get_int("attack2p.eval_interval"));
  a.eval_episodes = static_cast<int>(c.get_int("attack2p.eval_episodes"));
  a.deterministic_target = c.get_bool("attack2p.deterministic_target");
  a.require_gate = c.get_bool("attack2p.require_gate");
  a.normalize_m = c.get_bool("attack2p.normalize_m");
  a.eval_seed = c.get_u64("attack2p.eval_seed");
  return a;
}

inline TinyLMConfig tinylm_from_config(const Config& c) {
  TinyLMConfig t;
  t.vocab = static_cast<int>(c.get_int("lm.vocab"));
  t.d_model = static_cast<int>(c.get_int("lm.d_model"));
  t.n_layers = static_cast<int>(c.get_int("lm.layers"));
  t.n_heads = static_cast<int>(c.get_int("lm.heads"));
  t.context = static_cast<int>(c.get_int("lm.context"));
  t.mlp_ratio = static_cast<int>(c.get_int("lm.mlp_ratio"));
  t.hook_layer = static_cast<int>(c.get_int("lm.hook_layer"));
  t.init_seed = c.get_u64("lm.init_seed");
  return t;
}

inline LmAttackConfig lmattack_from_config(const Config& c, bool white_box) {
  LmAttackConfig l;
  l.k_s = static_cast<int>(c.get_int("lmattack.k_s"));
  l.k_c = static_cast<int>(c.get_int("lmattack.k_c"));
  l.alpha = c.get_real("lmattack.alpha");
  l.temperature = c.get_real("lmattack.temperature");
  l.white_box = white_box;
  l.normalize_m = c.get_bool("lmattack.normalize_m");
  l.episodes = static_cast<int>(c.get_int("lmattack.episodes"));
  l.eval_interval = static_cast<int>(c.get_int("lmattack.eval_interval"));
  l.eval_prompts = static_cast<int>(c.get_int("lmattack.eval_prompts"));
  l.eval_seed = c.get_u64("lmattack.eval_seed");
  l.adversary_hidden = static_cast<int>(c.get_int("lmattack.hidden"));
  l.ppo = ppo_from_config(c);
  l.ppo.steps_per_iter = static_cast<int>(c.get_int("lmattack.steps_per_iter"));
  l.ppo.minibatch = static_cast<int>(c.get_int("lmattack.minibatch"));
  l.ppo.lr = c.get_real("lmattack.lr");
  l.ppo.entropy_coef = c.get_real("lmattack.entropy");
  return l;
}

inline RarlConfig rarl_from_config(const Config& c) {
  RarlConfig r;
  r.env = runner_from_config(c);
  r.hidden = static_cast<int>(c.get_int("rarl.hidden"));
  r.target_ppo = ppo_from_config(c);
  r.target_ppo.steps_per_iter = static_cast<int>(c.get_int("rarl.steps_per_iter"));
  r.target_ppo.minibatch = static_cast<int>(c.get_int("rarl.minibatch"));
  r.target_ppo.entropy_coef = c.get_real("rarl.entropy");
  r.adversary_ppo = r.target_ppo;
  const std::int64_t steps = c.get_int("rarl.steps");
  if (steps % r.target_ppo.steps_per_iter != 0) {
    throw std::runtime_error("rarl.steps must be a multiple of rarl.steps_per_iter");
  }
  r.iterations = static_cast<int>(steps / r.target_ppo.steps_per_iter);
  r.delta = c.get_real("rarl.delta");
  r.ensemble = static_cast<int>(c.get_int("rarl.ensemble"));
  r.eval_interval = static_cast<int>(c.get_int("rarl.eval_interval"));
  r.eval_episodes = static_cast<int>(c.get_int("rarl.eval_episodes"));
  r.grid_lo = c.get_real("rarl.grid_lo");
  r.grid_hi = c.get_real("rarl.grid_hi");
  r.grid_n = static_cast<int>(c.get_int("rarl.grid_n"));
  r.grid_episodes = static_cast<int>(c.get_int("rarl.grid_episodes"));
  r.normalize_m = c.get_bool("rarl.normalize_m");
  r.eval_seed = c.get_u64("rarl.eval_seed");
  return r;
}

// ---------------------------------------------------------------------------
// Artifact directory and manifest
// ---------------------------------------------------------------------------

inline std::filesystem::path artifact_dir_for(const Config& cfg) {
  const std::string explicit_dir = cfg.get_string("experiment.out_dir");
  if (!explicit_dir.empty()) return explicit_dir;
  const char* root_env = std::getenv("ADVPOL_OUT_ROOT");
  const std::string root = root_env ? root_env : "runs";
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&t));
  return std::filesystem::path(root) /
         (cfg.get_string("experiment.kind") + "-" + stamp + "-s" +
          cfg.get_string("experiment.seed"));
}

inline void write_manifest(const Config& cfg, const std::filesystem::path& dir) {
  std::string out = "# advpol run manifest: full materialized config\n";
  out += "# meta.binary_sha1=" + self_binary_sha1() + "\n";
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[64];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::localtime(&t));
  out += std::string("# meta.started=") + stamp + "\n";
  out += cfg.manifest_string();
  write_text_file(dir / "manifest.cfg", out);
}

inline std::string metrics_csv(const std::vector<IterationMetrics>& metrics) {
  CsvWriter csv(metrics_csv_header());
  for (const auto& m : metrics) {
    csv.add_row({std::to_string(m.iteration), std::to_string(m.env_steps),
                 fmt_g17(m.mean_ep_reward), fmt_g17(m.policy_loss), fmt_g17(m.value_loss),
                 fmt_g17(m.entropy)});
  }
  return csv.str();
}

inline std::string curve_csv(const Curve& curve) {
  CsvWriter csv("step,value");
  for (const auto& p : curve) csv.add_row({std::to_string(p.step), fmt_g17(p.value)});
  return csv.str();
}

// ---------------------------------------------------------------------------
// Experiment drivers
// ---------------------------------------------------------------------------

inline void run_attack2p(const Config& cfg, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const Attack2pConfig acfg = attack2p_from_config(cfg);
  const std::uint64_t seed = cfg.get_u64("experiment.seed");
  const int jobs = static_cast<int>(cfg.get_int("experiment.jobs"));
  const int n_targets = static_cast<int>(cfg.get_int("attack2p.targets"));
  const int seeds_per_mode = static_cast<int>(cfg.get_int("attack2p.seeds_per_mode"));
  std::vector<IntrospectionMode> modes;
  const std::string single_mode = cfg.get_string("adversary.mode");
  if (!single_mode.empty()) {
    modes.push_back(introspection_mode_from_string(single_mode));
  } else {
    for (const std::string& m : cfg.get_string_list("attack2p.modes")) {
      modes.push_back(introspection_mode_from_string(m));
    }
  }

  fs::create_directories(dir / "targets");
  fs::create_directories(dir / "runs");

  const std::vector<TargetArtifact> pool =
      pretrain_target_pool(acfg, n_targets, derive_seed(seed, 1), jobs);
  CsvWriter targets_csv("target,seed,gate_net_points,final_net_points,competent");
  for (size_t i = 0; i < pool.size(); ++i) {
    save_policy(pool[i].net, (dir / "targets" / ("target_" + std::to_string(i) + ".ckpt")).string());
    write_text_file(dir / "targets" / ("target_" + std::to_string(i) + "_phase1_metrics.csv"),
                    metrics_csv(pool[i].metrics1));
    write_text_file(dir / "targets" / ("target_" + std::to_string(i) + "_phase2_metrics.csv"),
                    metrics_csv(pool[i].metrics2));
    targets_csv.add_row({std::to_string(i), std::to_string(pool[i].seed),
                         fmt_g17(pool[i].gate_net_points), fmt_g17(pool[i].final_net_points),
                         pool[i].competent ? "1" : "0"});
  }
  targets_csv.save(dir / "targets.csv");

  const ModeComparison cmp =
      compare_modes(pool, modes, seeds_per_mode, acfg, derive_seed(seed, 2), jobs);

  for (const auto& run : cmp.runs) {
    const std::string base = "run_" + to_string(run.mode) + "_t" +
                             std::to_string(run.target_index) + "_s" +
                             std::to_string(run.run_seed);
    write_text_file(dir / "runs" / (base + "_curve.csv"), curve_csv(run.curve));
    write_text_file(dir / "runs" / (base + "_metrics.csv"), metrics_csv(run.metrics));
    save_policy(run.adversary, (dir / "runs" / (base + "_adversary.ckpt")).string());
  }

  CsvWriter comparison("mode,env_steps,mean,sem,n");
  for (const auto& [mode, points] : cmp.aggregated) {
    for (const auto& p : points) {
      comparison.add_row({to_string(mode), std::to_string(p.step), fmt_g17(p.mean),
                          fmt_g17(p.sem), std::to_string(p.n)});
    }
  }
  comparison.save(dir / "comparison.csv");

  CsvWriter tests("comparison,env_steps,t,df,p,n_a,n_b");
  for (const auto& row : cmp.tests) {
    tests.add_row({to_string(row.mode) + "_vs_blackbox", std::to_string(row.step),
                   fmt_g17(row.welch.t), fmt_g17(row.welch.df), fmt_g17(row.welch.p),
                   std::to_string(row.n_mode), std::to_string(row.n_blackbox)});
  }
  tests.save(dir / "ttests.csv");
}

inline const char* kTokenAlphabet =
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789+/";

inline std::string detokenize(std::span<const int> tokens) {
  std::string out;
  for (int t : tokens) out.push_back(t >= 0 && t < 64 ? kTokenAlphabet[t] : '?');
  return out;
}

inline void run_lmattack(const Config& cfg, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const std::uint64_t seed = cfg.get_u64("experiment.seed");
  const int jobs = static_cast<int>(cfg.get_int("experiment.jobs"));
  const int seeds_per_mode = static_cast<int>(cfg.get_int("lmattack.seeds"));
  const std::string mode = cfg.get_string("lmattack.mode");
  if (mode != "white" && mode != "black" && mode != "both") {
    throw std::runtime_error("lmattack.mode must be white|black|both");
  }
  const TinyLM lm(tinylm_from_config(cfg));
  RewardRule rule{cfg.get_int_list("lmattack.forbidden")};
  for (int f : rule.forbidden) {
    if (f < 0 || f >= lm.config().vocab) {
      throw std::runtime_error("lmattack.forbidden: token id out of range");
    }
  }

  std::vector<bool> run_white;
  if (mode == "both" || mode == "white") {
    for (int s = 0; s < seeds_per_mode; ++s) run_white.push_back(true);
  }
  if (mode == "both" || mode == "black") {
    for (int s = 0; s < seeds_per_mode; ++s) run_white.push_back(false);
  }

  fs::create_directories(dir / "runs");
  std::vector<LmAttackRun> runs(run_white.size());
  parallel_for(static_cast<int>(run_white.size()), jobs, [&](int i) {
    const bool white = run_white[i];
    const int seed_index = white ? i : i - (mode == "both" ? seeds_per_mode : 0);
    LmAttackConfig lcfg = lmattack_from_config(cfg, white);
    runs[i] = train_latent_adversary(
        lm, rule, lcfg, derive_seed(seed, (white ? 10000 : 20000) + seed_index));
  });

  CsvWriter base_rates("mode,run,base_rate");
  std::string samples_txt;
  for (size_t ri = 0; ri < runs.size(); ++ri) {
    const auto& run = runs[ri];
    const std::string base = std::string("run_") + (run.white_box ? "white" : "black") + "_i" +
                             std::to_string(ri);
    write_text_file(dir / "runs" / (base + "_curve.csv"), curve_csv(run.curve));
    write_text_file(dir / "runs" / (base + "_metrics.csv"), metrics_csv(run.metrics));
    save_policy(run.adversary, (dir / "runs" / (base + "_adversary.ckpt")).string());
    base_rates.add_row({run.white_box ? "white" : "black", std::to_string(ri),
                        fmt_g17(run.base_rate)});
    samples_txt += "# " + base + "\n";
    for (const auto& tokens : run.sample_completions) {
      for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) samples_txt += ' ';
        samples_txt += std::to_string(tokens[i]);
      }
      samples_txt += "  |  " + detokenize(tokens) + "\n";
    }
  }
  base_rates.save(dir / "base_rates.csv");
  write_text_file(dir / "samples.txt", samples_txt);

  for (const bool white : {true, false}) {
    std::vector<Curve> curves;
    for (const auto& r : runs) {
      if (r.white_box == white) curves.push_back(r.curve);
    }
    if (!curves.empty()) {
      write_text_file(dir / (std::string("curves_") + (white ? "white" : "black") + ".csv"),
                      curves_csv(aggregate_curves(curves)));
    }
  }

  // One-sided white > black at the configured budget fraction and at the end.
  if (mode == "both" && seeds_per_mode >= 2) {
    const double frac = cfg.get_real("lmattack.budget_fraction_test");
    CsvWriter tests("comparison,episodes,t,df,p,n_white,n_black");
    const size_t points = runs.front().curve.size();
    const size_t frac_idx =
        std::min(points - 1, static_cast<size_t>(std::max(1.0, frac * points)) - 1);
    for (size_t idx : {frac_idx, points - 1}) {
      std::vector<double> white_vals, black_vals;
      for (const auto& r : runs) {
        (r.white_box ? white_vals : black_vals).push_back(r.curve[idx].value);
      }
      const WelchResult w = welch_t_one_sided({"white", white_vals}, {"black", black_vals});
      tests.add_row({"white_vs_black", std::to_string(runs.front().curve[idx].step),
                     fmt_g17(w.t), fmt_g17(w.df), fmt_g17(w.p),
                     std::to_string(white_vals.size()), std::to_string(black_vals.size())});
      if (idx == points - 1) break;
    }
    tests.save(dir / "ttests.csv");
  }
}

inline void run_rarl(const Config& cfg, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const RarlConfig rcfg = rarl_from_config(cfg);
  const std::uint64_t seed = cfg.get_u64("experiment.seed");
  const int jobs = static_cast<int>(cfg.get_int("experiment.jobs"));
  const int agents = static_cast<int>(cfg.get_int("rarl.agents"));
  const std::string condition = cfg.get_string("rarl.condition");

  fs::create_directories(dir / "agents");

  if (condition != "all") {
    // Single-condition run: train the agents, grid them all.
    const RarlCondition c = rarl_condition_from_string(condition);
    std::vector<RarlAgent> trained(agents);
    parallel_for(agents, jobs, [&](int a) {
      trained[a] = rarl_train(c, rcfg, derive_seed(seed, static_cast<int>(c) * 100000 + a));
    });
    CsvWriter report("condition,agent,seed,final_eval,grid_mean");
    for (int a = 0; a < agents; ++a) {
      const std::string base = to_string(c) + "_a" + std::to_string(a);
      write_text_file(dir / "agents" / (base + "_curve.csv"), curve_csv(trained[a].eval_curve));
      write_text_file(dir / "agents" / (base + "_metrics.csv"), metrics_csv(trained[a].metrics));
      save_policy(trained[a].target, (dir / "agents" / (base + "_target.ckpt")).string());
      const GridResult grid =
          domain_shift_grid(trained[a].target, rcfg, derive_seed(rcfg.eval_seed, 555));
      CsvWriter gcsv("frictionMult,massMult,mean,sem,n");
      for (const auto& cell : grid.cells) {
        gcsv.add_row({fmt_g17(cell.friction_mult), fmt_g17(cell.mass_mult), fmt_g17(cell.mean),
                      fmt_g17(cell.sem), std::to_string(cell.n)});
      }
      gcsv.save(dir / "agents" / (base + "_grid.csv"));
      report.add_row({to_string(c), std::to_string(a), std::to_string(trained[a].seed),
                      fmt_g17(trained[a].final_eval), fmt_g17(grid.grid_mean)});
    }
    report.save(dir / "report.csv");
    return;
  }

  const RarlStudy study = rarl_study(rcfg, agents, seed, jobs);

  CsvWriter report("condition,agent,seed,rank,selected,final_eval,grid_mean,grid_csv");
  for (const auto& [cond, agents_vec] : study.agents) {
    for (size_t a = 0; a < agents_vec.size(); ++a) {
      const auto& sa = agents_vec[a];
      const std::string base = to_string(cond) + "_a" + std::to_string(a);
      write_text_file(dir / "agents" / (base + "_curve.csv"), curve_csv(sa.agent.eval_curve));
      write_text_file(dir / "agents" / (base + "_metrics.csv"), metrics_csv(sa.agent.metrics));
      save_policy(sa.agent.target, (dir / "agents" / (base + "_target.ckpt")).string());
      std::string grid_path;
      if (sa.selected) {
        CsvWriter gcsv("frictionMult,massMult,mean,sem,n");
        for (const auto& cell : sa.grid.cells) {
          gcsv.add_row({fmt_g17(cell.friction_mult), fmt_g17(cell.mass_mult),
                        fmt_g17(cell.mean), fmt_g17(cell.sem), std::to_string(cell.n)});
        }
        grid_path = "agents/" + base + "_grid.csv";
        gcsv.save(dir / grid_path);
      }
      report.add_row({to_string(cond), std::to_string(a), std::to_string(sa.agent.seed),
                      std::to_string(sa.rank), sa.selected ? "1" : "0",
                      fmt_g17(sa.agent.final_eval),
                      sa.selected ? fmt_g17(sa.grid.grid_mean) : "nan", grid_path});
    }
  }
  report.save(dir / "report.csv");

  // Per-condition aggregate grids over selected agents.
  for (const auto& [cond, agents_vec] : study.agents) {
    CsvWriter gcsv("frictionMult,massMult,mean,sem,n");
    const int cells = rcfg.grid_n * rcfg.grid_n;
    for (int cell = 0; cell < cells; ++cell) {
      std::vector<double> vals;
      for (const auto& sa : agents_vec) {
        if (sa.selected) vals.push_back(sa.grid.cells[cell].mean);
      }
      gcsv.add_row({fmt_g17(grid_value(rcfg, cell / rcfg.grid_n)),
                    fmt_g17(grid_value(rcfg, cell % rcfg.grid_n)),
                    fmt_g17(mean_of(vals)),
                    fmt_g17(vals.size() >= 2 ? sem(SampleGroup{"cell", vals})
                                             : std::numeric_limits<double>::quiet_NaN()),
                    std::to_string(vals.size())});
    }
    gcsv.save(dir / ("grid_" + to_string(cond) + ".csv"));
  }

  CsvWriter tests("comparison,t,df,p");
  tests.add_row({"wbrarl_vs_rl", fmt_g17(study.wb_vs_rl.t), fmt_g17(study.wb_vs_rl.df),
                 fmt_g17(study.wb_vs_rl.p)});
  tests.add_row({"wbrarl_vs_rarl", fmt_g17(study.wb_vs_rarl.t), fmt_g17(study.wb_vs_rarl.df),
                 fmt_g17(study.wb_vs_rarl.p)});
  tests.save(dir / "ttests.csv");

  CsvWriter corners("condition,cell_index,frictionMult,massMult,agents_beating_control,n_selected");
  for (const auto& [cond, pass] : study.corner_pass) {
    int n_selected = 0;
    for (const auto& sa : study.agents.at(cond)) {
      if (sa.selected) ++n_selected;
    }
    for (size_t k = 0; k < study.corner_cells.size(); ++k) {
      const int cell = study.corner_cells[k];
      corners.add_row({to_string(cond), std::to_string(cell),
                       fmt_g17(grid_value(rcfg, cell / rcfg.grid_n)),
                       fmt_g17(grid_value(rcfg, cell % rcfg.grid_n)),
                       std::to_string(pass[k]), std::to_string(n_selected)});
    }
  }
  corners.save(dir / "corners.csv");
}

// Convert aggregated curve CSVs (step,mean,sem,n or mode,env_steps,mean,sem,n)
// into gnuplot-compatible data blocks: one block per label, blank-line
// separated, columns "x mean sem".
inline std::string gnuplot_blocks(const std::vector<std::filesystem::path>& csv_paths) {
  std::string out;
  for (const auto& path : csv_paths) {
    std::istringstream in(read_text_file(path));
    std::string header;
    std::getline(in, header);
    const bool labelled = header.rfind("mode,", 0) == 0 || header.rfind("comparison,", 0) == 0;
    std::map<std::string, std::string> blocks;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      std::string label = path.stem().string();
      size_t first = 0;
      if (labelled) {
        label += ":" + cells[0];
        first = 1;
      }
      if (cells.size() < first + 3) continue;
      blocks[label] +=
          cells[first] + " " + cells[first + 1] + " " + cells[first + 2] + "\n";
    }
    for (const auto& [label, body] : blocks) {
      out += "# " + label + "\n" + body + "\n\n";
    }
  }
  return out;
}

// Validate, materialize defaults, create the artifact directory, write the
// manifest, dispatch. A failure leaves partial artifacts plus an ERROR file.
inline std::filesystem::path run_experiment(const Config& raw) {
  const Config cfg = raw.materialize(config_defaults());
  const std::string kind = cfg.get_string("experiment.kind");
  if (kind != "attack2p" && kind != "lmattack" && kind != "rarl") {
    throw std::runtime_error("experiment.kind must be attack2p|lmattack|rarl (got '" + kind +
                             "')");
  }
  const std::filesystem::path dir = artifact_dir_for(cfg);
  std::filesystem::create_directories(dir);
  write_manifest(cfg, dir);
  try {
    if (kind == "attack2p") run_attack2p(cfg, dir);
    else if (kind == "lmattack") run_lmattack(cfg, dir);
    else run_rarl(cfg, dir);
  } catch (const std::exception& e) {
    write_text_file(dir / "ERROR", std::string(e.what()) + "\n");
    throw;
  }
  return dir;
}

}  // namespace advpol
