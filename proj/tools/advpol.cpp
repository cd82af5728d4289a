// advpol: train target agents, attack them with introspective adversaries,
// red-team the frozen tiny language model, and run the robustness study.
//
//   advpol <subcommand> --config <path> [overrides key=value ...]
//
// Subcommand flags are shorthand for config keys; see README.md.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "advpol/config.hpp"
#include "advpol/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  int jobs = -1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file (key=value lines)");
  cmd->add_option("--out-dir", args.out_dir, "artifact directory (default: timestamped)");
  cmd->add_option("--seed", args.seed, "master seed");
  cmd->add_option("--jobs", args.jobs, "parallel runs (0 = all cores)");
  cmd->add_option("overrides", args.overrides, "config overrides as key=value");
}

advpol::Config load_config(const CommonArgs& args, const std::string& kind) {
  advpol::Config cfg;
  if (!args.config_path.empty()) cfg = advpol::Config::parse_file(args.config_path);
  if (!cfg.has("experiment.kind")) cfg.set("experiment.kind", kind);
  if (cfg.get_string("experiment.kind") != kind && !kind.empty()) {
    throw std::runtime_error("config is for experiment.kind=" +
                             cfg.get_string("experiment.kind") + ", but subcommand is " + kind);
  }
  if (args.seed >= 0) cfg.set("experiment.seed", std::to_string(args.seed));
  if (args.jobs >= 0) cfg.set("experiment.jobs", std::to_string(args.jobs));
  if (!args.out_dir.empty()) cfg.set("experiment.out_dir", args.out_dir);
  for (const std::string& kv : args.overrides) cfg.apply_override(kv);
  return cfg;
}

int dispatch(const advpol::Config& cfg) {
  const std::filesystem::path dir = advpol::run_experiment(cfg);
  std::cout << "artifacts: " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale laboratory for white-box adversarial policies"};
  app.require_subcommand(1);

  // run: kind taken from the config file
  CommonArgs run_args;
  CLI::App* run_cmd = app.add_subcommand("run", "run an experiment from a config file");
  add_common(run_cmd, run_args);

  // attack2p
  CommonArgs a2p_args;
  std::string a2p_mode;
  std::int64_t a2p_targets = -1, a2p_steps = -1, a2p_eval_interval = -1;
  CLI::App* a2p_cmd = app.add_subcommand("attack2p", "two-player adversarial policy attacks");
  add_common(a2p_cmd, a2p_args);
  a2p_cmd->add_option("--mode", a2p_mode,
                      "single adversary mode: blackbox|action_value|latent|full");
  a2p_cmd->add_option("--target-pool", a2p_targets, "number of pretrained targets");
  a2p_cmd->add_option("--steps", a2p_steps, "adversary training steps per run");
  a2p_cmd->add_option("--eval-interval", a2p_eval_interval, "env steps between eval points");

  // lmattack
  CommonArgs lm_args;
  std::int64_t lm_episodes = -1;
  double lm_alpha = -1.0;
  std::string lm_forbidden;
  bool lm_white = false, lm_black = false;
  CLI::App* lm_cmd = app.add_subcommand("lmattack", "latent-space attacks on the tiny LM");
  add_common(lm_cmd, lm_args);
  lm_cmd->add_flag("--white-box", lm_white, "train white-box adversaries only");
  lm_cmd->add_flag("--black-box", lm_black, "train black-box adversaries only");
  lm_cmd->add_option("--episodes", lm_episodes, "training episodes per run");
  lm_cmd->add_option("--alpha", lm_alpha, "perturbation scale multiplier");
  lm_cmd->add_option("--forbidden-set", lm_forbidden, "comma-separated forbidden token ids");

  // plot: curve CSVs -> gnuplot data blocks
  std::vector<std::string> plot_inputs;
  std::string plot_output;
  CLI::App* plot_cmd = app.add_subcommand("plot", "emit gnuplot data blocks from curve CSVs");
  plot_cmd->add_option("csvs", plot_inputs, "aggregated curve CSV files")->required();
  plot_cmd->add_option("--out", plot_output, "output file (default: stdout)");

  // rarl
  CommonArgs rarl_args;
  std::string rarl_condition;
  std::int64_t rarl_agents = -1, rarl_steps = -1;
  double rarl_delta = -1.0, rarl_grid_lo = -1.0, rarl_grid_hi = -1.0;
  CLI::App* rarl_cmd = app.add_subcommand("rarl", "robust adversarial training study");
  add_common(rarl_cmd, rarl_args);
  rarl_cmd->add_option("--condition", rarl_condition, "rl|rarl|wbrarl|all");
  rarl_cmd->add_option("--agents", rarl_agents, "agents per condition");
  rarl_cmd->add_option("--steps", rarl_steps, "target env steps per agent");
  rarl_cmd->add_option("--delta", rarl_delta, "action perturbation bound");
  rarl_cmd->add_option("--grid-lo", rarl_grid_lo, "grid multiplier lower bound");
  rarl_cmd->add_option("--grid-hi", rarl_grid_hi, "grid multiplier upper bound");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plot_cmd->parsed()) {
      std::vector<std::filesystem::path> paths(plot_inputs.begin(), plot_inputs.end());
      const std::string blocks = advpol::gnuplot_blocks(paths);
      if (plot_output.empty()) {
        std::cout << blocks;
      } else {
        advpol::write_text_file(plot_output, blocks);
      }
      return 0;
    }
    if (run_cmd->parsed()) {
      advpol::Config cfg = load_config(run_args, "");
      return dispatch(cfg);
    }
    if (a2p_cmd->parsed()) {
      advpol::Config cfg = load_config(a2p_args, "attack2p");
      if (!a2p_mode.empty()) cfg.set("adversary.mode", a2p_mode);
      if (a2p_targets >= 0) cfg.set("attack2p.targets", std::to_string(a2p_targets));
      if (a2p_steps >= 0) cfg.set("attack2p.steps", std::to_string(a2p_steps));
      if (a2p_eval_interval >= 0) {
        cfg.set("attack2p.eval_interval", std::to_string(a2p_eval_interval));
      }
      return dispatch(cfg);
    }
    if (lm_cmd->parsed()) {
      advpol::Config cfg = load_config(lm_args, "lmattack");
      if (lm_white && lm_black) throw std::runtime_error("--white-box and --black-box conflict");
      if (lm_white) cfg.set("lmattack.mode", "white");
      if (lm_black) cfg.set("lmattack.mode", "black");
      if (lm_episodes >= 0) cfg.set("lmattack.episodes", std::to_string(lm_episodes));
      if (lm_alpha >= 0.0) cfg.set("lmattack.alpha", advpol::fmt_g17(lm_alpha));
      if (!lm_forbidden.empty()) cfg.set("lmattack.forbidden", lm_forbidden);
      return dispatch(cfg);
    }
    if (rarl_cmd->parsed()) {
      advpol::Config cfg = load_config(rarl_args, "rarl");
      if (!rarl_condition.empty()) cfg.set("rarl.condition", rarl_condition);
      if (rarl_agents >= 0) cfg.set("rarl.agents", std::to_string(rarl_agents));
      if (rarl_steps >= 0) cfg.set("rarl.steps", std::to_string(rarl_steps));
      if (rarl_delta >= 0.0) cfg.set("rarl.delta", advpol::fmt_g17(rarl_delta));
      if (rarl_grid_lo > 0.0) cfg.set("rarl.grid_lo", advpol::fmt_g17(rarl_grid_lo));
      if (rarl_grid_hi > 0.0) cfg.set("rarl.grid_hi", advpol::fmt_g17(rarl_grid_hi));
      return dispatch(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
