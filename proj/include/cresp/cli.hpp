#pragma once

// Command-line driver. Exit codes: 0 success, 1 a verification check failed,
// 2 usage or I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <locale>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cresp/bmdp.hpp"
#include "cresp/evaluation.hpp"
#include "cresp/training.hpp"
#include "cresp/verify.hpp"

namespace cresp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw UsageError("write failed for '" + path.string() + "'");
}

inline nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  out << v;
  return out.str();
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// "3x3" -> {3, 3}
inline std::pair<int, int> parse_grid_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw UsageError("grid size must look like WxH, got '" + s + "'");
  try {
    std::size_t a = 0, b = 0;
    const int w = std::stoi(s.substr(0, x), &a);
    const int h = std::stoi(s.substr(x + 1), &b);
    if (a != x || b != s.size() - x - 1) throw std::invalid_argument(s);
    return {w, h};
  } catch (const std::logic_error&) {
    throw UsageError("grid size must look like WxH, got '" + s + "'");
  }
}

// The instance used when a command is not given one.
inline BMDPInstance default_instance() { return make_gridworld(3, 3, 5, 7); }

inline BMDPInstance load_instance(const std::string& path) {
  if (path.empty()) return default_instance();
  return instance_from_json(read_json(path));
}

inline std::vector<int> default_train_envs(const BMDPInstance& inst) {
  std::vector<int> envs;
  const int n = inst.num_envs() > 2 ? 2 : inst.num_envs();
  for (int e = 0; e < n; ++e) envs.push_back(e);
  return envs;
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string gridworld;
  int states = 4;
  int actions = 2;
  int rewards = 3;
  int factors = 5;
  int obs_dim = 16;
  int envs = 2;
  std::uint64_t seed = 0;
  int cell_size = 2;
  int tiles = 8;
  std::string out;
};

inline int cmd_gen(const GenArgs& a, std::ostream& log) {
  BMDPInstance inst;
  if (!a.gridworld.empty()) {
    const auto [w, h] = parse_grid_size(a.gridworld);
    GridOptions opt;
    opt.cell_size = a.cell_size;
    opt.num_tiles = a.tiles;
    inst = make_gridworld(w, h, a.envs, a.seed, opt);
  } else {
    inst = make_random_bmdp(a.seed, a.states, a.actions, a.rewards, a.envs, a.factors, a.obs_dim);
  }
  validate(inst);
  write_file(a.out, instance_to_json(inst).dump(1) + "\n");
  log << "states: " << inst.core.num_states << "\n"
      << "actions: " << inst.core.num_actions << "\n"
      << "environments: " << inst.num_envs() << "\n"
      << "factors: " << inst.num_factors() << "\n"
      << "obs_dim: " << inst.obs_dim() << "\n"
      << "min pairwise observation distance: " << format_double(min_pairwise_distance(inst.obs)) << "\n"
      << "injectivity: ok\n"
      << "fingerprint: " << hex64(fingerprint(inst)) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string instance;
  std::string objective = "cresp";
  int T = 5;
  int kappa = 256;
  double gamma_seq = 0.8;
  int batch = 256;
  int steps = 1000;
  std::uint64_t seed = 0;
  double lr = 5e-4;
  int initial_steps = 1000;
  std::vector<int> train_envs;
  int checkpoint_every = 0;
  bool wall_clock = false;
  std::string config;
  std::string out = "run";
};

// Keys of a JSON config file override the corresponding flags.
inline void apply_train_config(TrainArgs& a, const nlohmann::json& j) {
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "instance") a.instance = v.get<std::string>();
      else if (key == "objective") a.objective = v.get<std::string>();
      else if (key == "T") a.T = v.get<int>();
      else if (key == "kappa") a.kappa = v.get<int>();
      else if (key == "gamma_seq") a.gamma_seq = v.get<double>();
      else if (key == "batch") a.batch = v.get<int>();
      else if (key == "steps") a.steps = v.get<int>();
      else if (key == "seed") a.seed = v.get<std::uint64_t>();
      else if (key == "lr") a.lr = v.get<double>();
      else if (key == "initial_steps") a.initial_steps = v.get<int>();
      else if (key == "train_envs") a.train_envs = v.get<std::vector<int>>();
      else if (key == "checkpoint_every") a.checkpoint_every = v.get<int>();
      else if (key == "wall_clock") a.wall_clock = v.get<bool>();
      else if (key == "out") a.out = v.get<std::string>();
      else throw UsageError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::type_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

inline nlohmann::json train_args_to_json(const TrainArgs& a, const std::vector<int>& envs) {
  return {{"objective", a.objective}, {"T", a.T}, {"kappa", a.kappa}, {"gamma_seq", a.gamma_seq},
          {"batch", a.batch}, {"steps", a.steps}, {"seed", a.seed}, {"lr", a.lr},
          {"initial_steps", a.initial_steps}, {"train_envs", envs}};
}

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "step,objective,loss,wall_ms\n";
  for (const auto& r : rows)
    out += std::to_string(r.step) + "," + to_string(r.objective) + "," + format_double(r.loss) + "," +
           format_double(r.wall_ms) + "\n";
  return out;
}

inline nlohmann::json checkpoint_json(const BMDPInstance& inst, const nlohmann::json& config, int step,
                                      const Model& m) {
  return {{"format", "cresp-checkpoint/1"},
          {"instance_fingerprint", hex64(fingerprint(inst))},
          {"step", step},
          {"config", config},
          {"model", model_to_json(m)}};
}

inline int cmd_train(TrainArgs a, std::ostream& log) {
  if (!a.config.empty()) apply_train_config(a, read_json(a.config));
  const BMDPInstance inst = load_instance(a.instance);
  TrainConfig cfg;
  try {
    cfg.objective = objective_from_string(a.objective);
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  cfg.cf.T = a.T;
  cfg.cf.kappa = a.kappa;
  cfg.cf.gamma_seq = a.gamma_seq;
  cfg.batch_size = a.batch;
  cfg.gradient_steps = a.steps;
  cfg.seed = a.seed;
  cfg.lr = a.lr;
  cfg.initial_steps = a.initial_steps;
  cfg.train_envs = a.train_envs.empty() ? default_train_envs(inst) : a.train_envs;
  cfg.record_wall_time = a.wall_clock;
  const nlohmann::json config = train_args_to_json(a, cfg.train_envs);

  const std::filesystem::path dir(a.out);
  auto hook = [&](int step, const Model& m) {
    write_file(dir / ("checkpoint_" + std::to_string(step) + ".json"),
               checkpoint_json(inst, config, step, m).dump(1) + "\n");
  };
  const auto res = train_representation(inst, cfg, hook, a.checkpoint_every);
  write_file(dir / "metrics.csv", metrics_csv(res.history));
  write_file(dir / "checkpoint_final.json", checkpoint_json(inst, config, a.steps, res.model).dump(1) + "\n");
  log << "objective: " << a.objective << "\n"
      << "steps: " << a.steps << "\n";
  if (!res.history.empty()) log << "final loss: " << format_double(res.history.back().loss) << "\n";
  log << "wrote " << (dir / "metrics.csv").string() << " and " << (dir / "checkpoint_final.json").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  std::uint64_t seed = 7;
  int bound_sweep = 50;
  std::string inject_fault;
  std::string out;
};

inline int cmd_verify(const VerifyArgs& a, std::ostream& log) {
  VerifyOptions opt;
  opt.seed = a.seed;
  opt.bound_sweep = a.bound_sweep;
  if (a.inject_fault == "cf-sign") opt.cf = cf_with_sign_fault();
  else if (!a.inject_fault.empty()) throw UsageError("unknown fault '" + a.inject_fault + "'");
  const auto rep = run_verify(opt);
  const std::string text = verify_report_to_json(rep).dump(1) + "\n";
  if (!a.out.empty()) write_file(a.out, text);
  for (const auto& c : rep.checks)
    log << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.cases - c.failures << "/" << c.cases << ")\n";
  if (!rep.passed()) {
    std::cerr << "failed checks:";
    for (const auto& name : rep.failures()) std::cerr << " \"" << name << "\"";
    std::cerr << "\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeArgs {
  std::string instance;
  std::string checkpoint;
  std::string compare;
  std::vector<int> envs;
  int samples = 10000;
  int seeds = 1;
  int epochs = 100;
  std::string out = "probe";
};

struct LoadedCheckpoint {
  Model model;
  std::vector<int> train_envs;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path, const BMDPInstance& inst) {
  const auto j = read_json(path);
  try {
    if (j.at("format") != "cresp-checkpoint/1") throw UsageError("'" + path + "' is not a checkpoint");
    if (j.at("instance_fingerprint").get<std::string>() != hex64(fingerprint(inst)))
      throw UsageError("checkpoint '" + path + "' was trained on a different instance");
    LoadedCheckpoint c;
    c.model = model_from_json(j.at("model"));
    c.train_envs = j.at("config").at("train_envs").get<std::vector<int>>();
    if (c.model.encoder.input_dim() != inst.obs_dim())
      throw UsageError("checkpoint '" + path + "' does not match the instance observation size");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("checkpoint '" + path + "': " + e.what());
  }
}

inline int cmd_probe(const ProbeArgs& a, std::ostream& log) {
  if (a.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
  const BMDPInstance inst = load_instance(a.instance);
  std::vector<std::pair<std::string, LoadedCheckpoint>> runs;
  runs.emplace_back(a.checkpoint, load_checkpoint(a.checkpoint, inst));
  if (!a.compare.empty()) runs.emplace_back(a.compare, load_checkpoint(a.compare, inst));

  std::vector<int> envs = a.envs;
  if (envs.empty()) {
    for (int e = 0; e < inst.num_envs(); ++e)
      if (std::find(runs[0].second.train_envs.begin(), runs[0].second.train_envs.end(), e) ==
          runs[0].second.train_envs.end())
        envs.push_back(e);
    if (envs.size() < 2)
      for (int e = 0; e < inst.num_envs(); ++e)
        if (std::find(envs.begin(), envs.end(), e) == envs.end()) envs.push_back(e);
  }
  ProbeConfig pc;
  pc.epochs = a.epochs;

  nlohmann::json report = {{"instance_fingerprint", hex64(fingerprint(inst))}, {"envs", envs}};
  std::string csv = "checkpoint,seed,probe,epoch,ce\n";
  std::vector<std::vector<std::pair<double, double>>> ce(runs.size());
  nlohmann::json jruns = nlohmann::json::array();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    nlohmann::json jseeds = nlohmann::json::array();
    for (int seed = 0; seed < a.seeds; ++seed) {
      const auto ds = collect_probe_dataset(inst, runs[r].second.model.encoder, envs, a.samples,
                                            mix_seed(1000 + seed, 3));
      const auto env_probe = probe_env_label(ds, pc, seed);
      const auto state_probe = probe_state(ds, pc, seed);
      ce[r].emplace_back(env_probe.final_ce, state_probe.final_ce);
      jseeds.push_back({{"seed", seed},
                        {"env_ce", env_probe.final_ce},
                        {"state_ce", state_probe.final_ce},
                        {"state_accuracy", state_probe.final_accuracy},
                        {"env_probe", probe_result_to_json(env_probe)},
                        {"state_probe", probe_result_to_json(state_probe)}});
      for (const auto& [name, res] : {std::pair{"env", &env_probe}, std::pair{"state", &state_probe}})
        for (const auto& [epoch, v] : res->curve)
          csv += std::to_string(r) + "," + std::to_string(seed) + "," + name + "," + std::to_string(epoch) + "," +
                 format_double(v) + "\n";
      log << runs[r].first << " seed " << seed << ": env_ce " << format_double(env_probe.final_ce) << " state_ce "
          << format_double(state_probe.final_ce) << "\n";
    }
    jruns.push_back({{"checkpoint", runs[r].first},
                     {"objective", to_string(runs[r].second.model.objective)},
                     {"seeds", jseeds}});
  }
  report["runs"] = jruns;
  double env_mean = 0.0, state_mean = 0.0;
  for (const auto& [e, s] : ce[0]) {
    env_mean += e / a.seeds;
    state_mean += s / a.seeds;
  }
  report["env_ce"] = env_mean;  // first checkpoint, averaged over seeds
  report["state_ce"] = state_mean;
  if (runs.size() == 2) {
    int env_order = 0, state_order = 0;
    for (int s = 0; s < a.seeds; ++s) {
      env_order += ce[0][s].first >= ce[1][s].first;
      state_order += ce[0][s].second <= ce[1][s].second;
    }
    report["ordering"] = {{"env_ce_first_ge_second", env_order},
                          {"state_ce_first_le_second", state_order},
                          {"seeds", a.seeds}};
    log << "env_ce(first) >= env_ce(second) in " << env_order << "/" << a.seeds << " seeds\n"
        << "state_ce(first) <= state_ce(second) in " << state_order << "/" << a.seeds << " seeds\n";
  }
  const std::filesystem::path dir(a.out);
  write_file(dir / "probe.json", report.dump(1) + "\n");
  write_file(dir / "probe_curves.csv", csv);
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& log = std::cout) {
  CLI::App app{"Reward-sequence representation lab"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a block-MDP instance");
  g->add_option("--gridworld", gen.gridworld, "Gridworld size WxH (otherwise a random instance)");
  g->add_option("--states", gen.states, "Latent states of a random instance");
  g->add_option("--actions", gen.actions, "Actions of a random instance");
  g->add_option("--rewards", gen.rewards, "Reward support size of a random instance");
  g->add_option("--factors", gen.factors, "Distractor values of a random instance");
  g->add_option("--obs-dim", gen.obs_dim, "Observation size of a random instance");
  g->add_option("--envs", gen.envs, "Number of environments");
  g->add_option("--seed", gen.seed, "Seed");
  g->add_option("--cell-size", gen.cell_size, "Gridworld pixels per cell side");
  g->add_option("--tiles", gen.tiles, "Gridworld background tiles");
  g->add_option("-o,--out", gen.out, "Output instance JSON")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a representation");
  t->add_option("--instance", train.instance, "Instance JSON (default: built-in 3x3 gridworld)");
  t->add_option("--objective", train.objective, "cresp | cresp_sum | rp | rp_sum | rdp");
  t->add_option("--T", train.T, "Reward-sequence length");
  t->add_option("--kappa", train.kappa, "Frequencies per update");
  t->add_option("--gamma-seq", train.gamma_seq, "Discount inside the frequency inner product");
  t->add_option("--batch", train.batch, "Segments per update");
  t->add_option("--steps", train.steps, "Gradient steps");
  t->add_option("--seed", train.seed, "Seed");
  t->add_option("--lr", train.lr, "Adam learning rate");
  t->add_option("--initial-steps", train.initial_steps, "Environment steps before the first update");
  t->add_option("--train-envs", train.train_envs,
                "Environments to collect from (default: 0 1 when there are more than two, else all)");
  t->add_option("--checkpoint-every", train.checkpoint_every, "Extra checkpoint period in steps (0: final only)");
  t->add_flag("--wall-clock", train.wall_clock, "Record wall_ms (makes metrics.csv run-dependent)");
  t->add_option("--config", train.config, "JSON config; its keys override flags");
  t->add_option("-o,--out", train.out, "Output directory");

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify", "Run the property suite");
  v->add_option("--seed", verify.seed, "Seed");
  v->add_option("--bound-sweep", verify.bound_sweep, "Instances in the value-bound sweep");
  v->add_option("--inject-fault", verify.inject_fault, "Test fixture: cf-sign");
  v->add_option("-o,--out", verify.out, "Report JSON");

  ProbeArgs probe;
  auto* p = app.add_subcommand("probe", "Probe frozen representations");
  p->add_option("--instance", probe.instance, "Instance JSON (default: built-in 3x3 gridworld)");
  p->add_option("--checkpoint", probe.checkpoint, "Checkpoint JSON")->required();
  p->add_option("--compare", probe.compare, "Second checkpoint for an ordering summary");
  p->add_option("--envs", probe.envs, "Environments to probe (default: those not trained on)");
  p->add_option("--samples", probe.samples, "Probe dataset size");
  p->add_option("--seeds", probe.seeds, "Probe seeds");
  p->add_option("--epochs", probe.epochs, "Probe training epochs");
  p->add_option("-o,--out", probe.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen, log);
    if (*t) return cmd_train(train, log);
    if (*v) return cmd_verify(verify, log);
    if (*p) return cmd_probe(probe, log);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace cresp::cli
