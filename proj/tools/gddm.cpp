// gddm: train the denoiser, attack a graph, purify it, evaluate a GCN, or run
// a benchmark grid. Every command writes into a fresh run directory under
// `out` and prints that directory on stdout.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gddm/attacks.hpp"
#include "gddm/config.hpp"
#include "gddm/denoiser.hpp"
#include "gddm/error.hpp"
#include "gddm/evaluator.hpp"
#include "gddm/log.hpp"
#include "gddm/purifier.hpp"
#include "gddm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw gddm::IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw gddm::IoError("write failed for '" + path.string() + "'");
}

struct RunDir {
  fs::path path;
  json outputs = json::object();

  fs::path file(const std::string& key, const std::string& name) {
    outputs[key] = name;
    return path / name;
  }
};

/// Writes the manifest plus a standalone copy of the resolved config, which
/// `--config` accepts as is.
void finish(gddm::Command cmd, const gddm::RunConfig& cfg, RunDir& dir) {
  dir.outputs["config"] = "config.json";
  write_json(dir.path / "config.json", cfg.tree);
  write_json(dir.path / "manifest.json", gddm::make_manifest(cmd, cfg, dir.outputs));
  std::cout << dir.path.string() << '\n';
}

RunDir open_run_dir(gddm::Command cmd, const gddm::RunConfig& cfg) {
  RunDir d;
  d.path = gddm::make_run_dir(cfg.out, json{{"command", gddm::to_string(cmd)}, {"config", cfg.tree}});
  return d;
}

gddm::Split split_for(const gddm::RunConfig& cfg, const gddm::Graph& g) {
  if (!cfg.input.split.empty()) return gddm::load_split(cfg.input.split, g.size());
  return gddm::random_split(g, cfg.run_seed0());
}

/// input.graph when given, otherwise the configured attack applied to the
/// clean graph with the single-run seed. Targeted attacks without explicit
/// targets use input.targets or the degree > 10 test nodes.
gddm::AttackedGraph attacked_input(const gddm::RunConfig& cfg, const gddm::Graph& clean,
                                   const gddm::Split& split) {
  std::vector<gddm::NodeId> targets;
  if (!cfg.input.targets.empty()) targets = gddm::read_targets(cfg.input.targets, clean.size());
  if (!cfg.input.graph.empty()) {
    auto a = gddm::load_perturbed(cfg.input.graph, clean);
    a.targets = targets;
    return a;
  }
  gddm::AttackSpec spec = cfg.attack;
  spec.seed = cfg.run_seed0();
  if (spec.targeted() && spec.targets.empty()) {
    spec.targets = targets.empty() ? gddm::select_target_nodes(clean, split) : targets;
  }
  auto a = gddm::apply_attack(clean, spec);
  if (a.targets.empty()) a.targets = targets;
  return a;
}

void cmd_train(const gddm::RunConfig& cfg) {
  const auto g = gddm::load_dataset(cfg.dataset);
  RunDir dir = open_run_dir(gddm::Command::kTrain, cfg);
  gddm::TrainConfig tc = cfg.train;
  if (tc.checkpoint_every > 0) {
    tc.checkpoint_dir = (dir.path / "checkpoints").string();
    fs::create_directories(tc.checkpoint_dir);
    dir.outputs["checkpoints"] = "checkpoints";
  }
  const long every = std::max<long>(1, tc.steps / 10);
  auto result = gddm::train(g, cfg.denoiser, tc, [&](const gddm::TrainCurveRow& r) {
    if ((r.step + 1) % every == 0) {
      gddm::log::info("step " + std::to_string(r.step + 1) + " t=" + std::to_string(r.t) +
                      " loss=" + std::to_string(r.loss));
    }
  });
  json echo = tc;
  echo.erase("checkpoint_dir");
  gddm::save_checkpoint(dir.file("checkpoint", "model.ckpt").string(), result.params,
                        {{"train", echo},
                         {"schedule", cfg.tree.at("schedule")},
                         {"step", tc.steps}});
  gddm::write_train_curve(dir.file("train_curve", "train_curve.csv").string(), result.curve);
  finish(gddm::Command::kTrain, cfg, dir);
}

void cmd_attack(const gddm::RunConfig& cfg) {
  const auto g = gddm::load_dataset(cfg.dataset);
  const auto split = split_for(cfg, g);
  RunDir dir = open_run_dir(gddm::Command::kAttack, cfg);
  gddm::AttackSpec spec = cfg.attack;
  spec.seed = cfg.run_seed0();
  const auto attacked = attacked_input(cfg, g, split);
  if (spec.targeted() && spec.targets.empty()) spec.targets = attacked.targets;
  gddm::save_perturbed(dir.file("graph", "attacked.edges").string(), attacked.adjacency());
  gddm::save_split(dir.file("split", "split.txt").string(), split);
  if (!attacked.targets.empty()) {
    gddm::write_targets(dir.file("targets", "targets.txt").string(), attacked.targets);
  }
  write_json(dir.file("attack", "attack.json"), gddm::attack_manifest(spec, attacked));
  gddm::log::info("attack " + std::string(gddm::to_string(spec.kind)) + ": " +
                  std::to_string(attacked.perturbations) + " perturbations");
  finish(gddm::Command::kAttack, cfg, dir);
}

gddm::Checkpoint load_denoiser(const gddm::RunConfig& cfg) {
  auto ck = gddm::load_checkpoint(cfg.checkpoint);
  if (ck.header.contains("schedule")) {
    const auto& s = ck.header.at("schedule");
    if (s.value("T", cfg.T) != cfg.T || s.value("p", cfg.p) != cfg.p) {
      gddm::log::warn("checkpoint was trained with a different schedule than configured");
    }
  }
  return ck;
}

void cmd_purify(const gddm::RunConfig& cfg) {
  auto ck = load_denoiser(cfg);
  const auto g = gddm::load_dataset(cfg.dataset);
  const auto split = split_for(cfg, g);
  const auto attacked = attacked_input(cfg, g, split);
  gddm::PurifyConfig pc = cfg.purify;
  pc.seed = cfg.run_seed0();
  if (pc.mode == gddm::AttackMode::kTargeted && pc.target_nodes.empty()) {
    pc.target_nodes =
        attacked.targets.empty() ? gddm::select_target_nodes(g, split) : attacked.targets;
  }
  RunDir dir = open_run_dir(gddm::Command::kPurify, cfg);
  const auto result = gddm::purify(attacked, ck.params, cfg.schedule(), pc);
  gddm::save_edge_list(dir.file("graph", "purified.edges").string(), result.graph.adjacency());
  write_json(dir.file("report", "purify_report.json"), result.report);
  gddm::log::info("purified " + std::to_string(result.report.edges_attacked) + " -> " +
                  std::to_string(result.report.edges_final) + " edges");
  finish(gddm::Command::kPurify, cfg, dir);
}

void cmd_eval(const gddm::RunConfig& cfg) {
  const auto clean = gddm::load_dataset(cfg.dataset);
  const auto split = split_for(cfg, clean);
  const auto graph = attacked_input(cfg, clean, split);
  gddm::GCNConfig gc = cfg.gcn;
  gc.seed = cfg.run_seed0();
  auto model = gddm::train_gcn(graph.graph, split, gc);
  RunDir dir = open_run_dir(gddm::Command::kEval, cfg);
  json report = {{"test_accuracy", gddm::evaluate(model, graph.graph, split)},
                 {"edges", graph.adjacency().edge_count()},
                 {"epochs_run", model.epochs_run},
                 {"best_epoch", model.best_epoch},
                 {"best_val_accuracy", model.best_val_acc},
                 {"targets", graph.targets}};
  report["target_accuracy"] =
      graph.targets.empty() ? json(nullptr)
                            : json(gddm::evaluate_nodes(model, graph.graph, graph.targets));
  write_json(dir.file("report", "eval.json"), report);
  gddm::log::info("test accuracy " + std::to_string(report["test_accuracy"].get<double>()));
  finish(gddm::Command::kEval, cfg, dir);
}

void cmd_bench(const gddm::RunConfig& cfg) {
  const auto g = gddm::load_dataset(cfg.dataset);
  std::optional<gddm::Checkpoint> ck;
  if (!cfg.checkpoint.empty()) ck = load_denoiser(cfg);
  RunDir dir = open_run_dir(gddm::Command::kBench, cfg);
  gddm::BenchmarkConfig bc;
  bc.runs = cfg.bench_runs;
  bc.master_seed = cfg.seed;
  bc.gcn = cfg.gcn;
  bc.out_dir = dir.path.string();
  const auto reports =
      gddm::benchmark(g, cfg.bench_cells, ck ? &ck->params : nullptr, cfg.schedule(), bc);
  dir.outputs["runs"] = "runs.csv";
  dir.outputs["aggregate"] = "aggregate.csv";
  dir.outputs["plot"] = "accuracy_vs_perturbation.svg";
  if (fs::exists(dir.path / "accuracy_vs_mu.svg")) dir.outputs["mu_plot"] = "accuracy_vs_mu.svg";
  write_json(dir.file("reports", "reports.json"), reports);
  for (const auto& r : reports) {
    gddm::log::info(r.scenario_id() + ": " + std::to_string(r.mean) + " +- " +
                    std::to_string(r.std));
  }
  finish(gddm::Command::kBench, cfg, dir);
}

int run(gddm::Command cmd, const gddm::ConfigSources& src) {
  const auto cfg = gddm::resolve_config(src);
  cfg.validate(cmd);
  switch (cmd) {
    case gddm::Command::kTrain: cmd_train(cfg); break;
    case gddm::Command::kAttack: cmd_attack(cfg); break;
    case gddm::Command::kPurify: cmd_purify(cfg); break;
    case gddm::Command::kEval: cmd_eval(cfg); break;
    case gddm::Command::kBench: cmd_bench(cfg); break;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-based graph purification against structural attacks"};
  app.require_subcommand(1, 1);
  gddm::ConfigSources src;
  std::uint64_t seed = 0;
  std::string out;
  bool verbose = false;
  bool quiet = false;
  const char* commands[][2] = {
      {"train", "Train the denoiser on the clean graph"},
      {"attack", "Write a perturbed graph"},
      {"purify", "Purify a perturbed graph with a trained denoiser"},
      {"eval", "Train and score a GCN on a (perturbed) graph"},
      {"bench", "Run the benchmark grid"}};
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("--config,-c", src.config_path, "JSON config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", src.overrides, "Override a config key: key=value")
        ->allow_extra_args(false);
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--out", out, "Base directory for run directories");
    sub->add_flag("--verbose,-v", verbose, "Debug logging");
    sub->add_flag("--quiet,-q", quiet, "Warnings and errors only");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  auto* chosen = app.get_subcommands().front();
  if (chosen->count("--seed") > 0) src.seed = seed;
  if (chosen->count("--out") > 0) src.out = out;
  if (verbose) gddm::log::set_level(gddm::log::Level::kDebug);
  if (quiet) gddm::log::set_level(gddm::log::Level::kWarn);
  try {
    return run(gddm::parse_command(chosen->get_name()), src);
  } catch (const gddm::UsageError& e) {
    std::cerr << "gddm: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const gddm::ConfigError& e) {
    std::cerr << "gddm: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "gddm: runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
