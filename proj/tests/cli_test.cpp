#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gddm/config.hpp"
#include "gddm/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::path(GDDM_TEST_TMP) / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliResult {
  int code = -1;
  std::string out;  // stdout
  fs::path run_dir() const {
    auto line = out.substr(0, out.find('\n'));
    return fs::path(line);
  }
};

CliResult cli(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const auto out = dir / "stdout.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + GDDM_CLI_PATH + "' " + args +
                          " > '" + out.string() + "' 2> '" + (dir / "stderr.txt").string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  return r;
}

/// Tiny graph and model so each command finishes in well under a second.
json small_config() {
  return json::parse(R"({
    "dataset": {"sbm": {"nodes": 120, "p_in": 0.08, "p_out": 0.005}},
    "schedule": {"T": 8},
    "denoiser": {"layers": 1, "embed_dim": 8, "hidden_dim": 16, "heads": 2, "max_degree": 32},
    "train": {"steps": 10},
    "gcn": {"epochs": 20},
    "bench": {"runs": 2}
  })");
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(CliTrain, WritesCheckpointCurveAndManifest) {
  const auto dir = scratch("train");
  const auto cfg = write_config(dir, small_config());
  const auto r = cli(dir, "train --config " + q(cfg) + " --out " + q(dir / "runs"));
  ASSERT_EQ(r.code, 0) << slurp(dir / "stderr.txt");
  const auto run = r.run_dir();
  EXPECT_TRUE(fs::is_regular_file(run / "model.ckpt"));
  EXPECT_TRUE(fs::is_regular_file(run / "manifest.json"));
  const auto curve = slurp(run / "train_curve.csv");
  EXPECT_EQ(curve.rfind("step,t,loss,candidates\n", 0), 0u);
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 11);
  const auto ck = gddm::load_checkpoint((run / "model.ckpt").string());
  EXPECT_EQ(ck.header.at("denoiser").at("embed_dim"), 8);
  const auto manifest = json::parse(slurp(run / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "train");
  EXPECT_EQ(manifest.at("version"), gddm::kVersion);
  EXPECT_EQ(manifest.at("outputs").at("checkpoint"), "model.ckpt");
}

TEST(CliPurify, MissingCheckpointIsConfigError) {
  const auto dir = scratch("purify_nockpt");
  const auto cfg = write_config(dir, small_config());
  const auto r = cli(dir, "purify --config " + q(cfg) + " --out " + q(dir / "runs"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(slurp(dir / "stderr.txt").find("config error"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "runs"));
}

TEST(CliPurify, NonexistentCheckpointIsConfigError) {
  const auto dir = scratch("purify_badckpt");
  const auto cfg = write_config(dir, small_config());
  const auto r = cli(dir, "purify --config " + q(cfg) + " --set checkpoint=" +
                              q(dir / "nope.ckpt") + " --out " + q(dir / "runs"));
  EXPECT_EQ(r.code, 3);
}

TEST(CliPipeline, TrainAttackPurifyEval) {
  const auto dir = scratch("pipeline");
  const auto cfg = write_config(dir, small_config());
  const auto base = "--config " + q(cfg) + " --out " + q(dir / "runs");
  const auto tr = cli(dir, "train " + base);
  ASSERT_EQ(tr.code, 0);
  const auto ckpt = tr.run_dir() / "model.ckpt";

  const auto at = cli(dir, "attack " + base +
                               " --set attack.kind=degree-biased --set attack.ptb_rate=0.2");
  ASSERT_EQ(at.code, 0) << slurp(dir / "stderr.txt");
  const auto attacked = at.run_dir() / "attacked.edges";
  ASSERT_TRUE(fs::is_regular_file(attacked));
  const auto am = json::parse(slurp(at.run_dir() / "attack.json"));
  EXPECT_GT(am.at("perturbations").get<int>(), 0);

  const auto pu = cli(dir, "purify " + base + " --set checkpoint=" + q(ckpt) +
                               " --set input.graph=" + q(attacked));
  ASSERT_EQ(pu.code, 0) << slurp(dir / "stderr.txt");
  const auto rep = json::parse(slurp(pu.run_dir() / "purify_report.json"));
  EXPECT_LE(rep.at("edges_final").get<int>(), rep.at("edges_attacked").get<int>());

  const auto ev = cli(dir, "eval " + base + " --set input.graph=" +
                               q(pu.run_dir() / "purified.edges"));
  ASSERT_EQ(ev.code, 0) << slurp(dir / "stderr.txt");
  const auto er = json::parse(slurp(ev.run_dir() / "eval.json"));
  const double acc = er.at("test_accuracy").get<double>();
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST(CliBench, TwoCellGridGivesTwoAggregateRows) {
  const auto dir = scratch("bench");
  const auto cfg = write_config(dir, small_config());
  const auto r = cli(dir, "bench --config " + q(cfg) + " --out " + q(dir / "runs"));
  ASSERT_EQ(r.code, 0) << slurp(dir / "stderr.txt");
  const auto agg = slurp(r.run_dir() / "aggregate.csv");
  EXPECT_EQ(std::count(agg.begin(), agg.end(), '\n'), 3);  // header + 2 rows
  const auto runs = slurp(r.run_dir() / "runs.csv");
  EXPECT_EQ(std::count(runs.begin(), runs.end(), '\n'), 5);  // header + 2 cells x 2 runs
  EXPECT_TRUE(fs::is_regular_file(r.run_dir() / "accuracy_vs_perturbation.svg"));
}

TEST(CliBench, DefendedCellNeedsCheckpoint) {
  const auto dir = scratch("bench_defended");
  auto j = small_config();
  j["bench"]["cells"] = json::array({json{{"defended", true}}});
  const auto cfg = write_config(dir, j);
  EXPECT_EQ(cli(dir, "bench --config " + q(cfg) + " --out " + q(dir / "runs")).code, 3);
}

TEST(CliErrors, UsageErrorsExitTwo) {
  const auto dir = scratch("usage");
  const auto cfg = write_config(dir, small_config());
  EXPECT_EQ(cli(dir, "frobnicate").code, 2);
  EXPECT_EQ(cli(dir, "").code, 2);
  EXPECT_EQ(cli(dir, "train --no-such-flag").code, 2);
  EXPECT_EQ(cli(dir, "train --config " + q(cfg) + " --set train.nonsense=1").code, 2);
  EXPECT_EQ(cli(dir, "train --config " + q(cfg) + " --set train.steps").code, 2);
  auto bad = small_config();
  bad["denoiser"]["depth"] = 2;
  const auto bad_cfg = dir / "bad.json";
  std::ofstream(bad_cfg) << bad.dump();
  EXPECT_EQ(cli(dir, "train --config " + q(bad_cfg)).code, 2);
}

TEST(CliErrors, ValidationFailuresExitThree) {
  const auto dir = scratch("validation");
  const auto cfg = write_config(dir, small_config());
  const auto base = "--config " + q(cfg) + " --out " + q(dir / "runs");
  EXPECT_EQ(cli(dir, "train " + base + " --set denoiser.embed_dim=7").code, 3);
  EXPECT_EQ(cli(dir, "eval " + base + " --set purify.mu=1.5").code, 3);
  EXPECT_EQ(cli(dir, "eval " + base + " --set train.steps=\\\"many\\\"").code, 3);
  EXPECT_EQ(cli(dir, "eval " + base + " --set dataset.kind=files --set dataset.root=" +
                         q(dir / "missing")).code,
            3);
  const auto junk = dir / "junk.json";
  std::ofstream(junk) << "{ not json";
  EXPECT_EQ(cli(dir, "eval --config " + q(junk)).code, 3);
}

TEST(CliErrors, RuntimeFailureExitsOne) {
  const auto dir = scratch("runtime");
  const auto cfg = write_config(dir, small_config());
  const auto garbage = dir / "garbage.ckpt";
  std::ofstream(garbage) << "not a checkpoint";
  EXPECT_EQ(cli(dir, "purify --config " + q(cfg) + " --set checkpoint=" + q(garbage) +
                         " --out " + q(dir / "runs"))
                .code,
            1);
}

TEST(CliManifest, ResolvedConfigEqualsFileMergedWithOverrides) {
  const auto dir = scratch("roundtrip");
  const auto cfg = write_config(dir, small_config());
  const std::string overrides =
      " --set gcn.hidden_dim=8 --set attack.kind=random-flip --set attack.ptb_rate=0.1";
  const auto r =
      cli(dir, "attack --config " + q(cfg) + overrides + " --seed 11 --out " + q(dir / "runs"));
  ASSERT_EQ(r.code, 0) << slurp(dir / "stderr.txt");
  const auto manifest = json::parse(slurp(r.run_dir() / "manifest.json"));

  gddm::ConfigSources src;
  src.config_path = cfg.string();
  src.overrides = {"gcn.hidden_dim=8", "attack.kind=random-flip", "attack.ptb_rate=0.1"};
  src.seed = 11;
  src.out = (dir / "runs").string();
  EXPECT_EQ(manifest.at("resolved_config"), gddm::resolve_config(src).tree);
  EXPECT_EQ(manifest.at("seed"), 11);
}

TEST(CliManifest, ResolvedConfigReproducesRunBitForBit) {
  const auto dir = scratch("reproduce");
  const auto cfg = write_config(dir, small_config());
  const auto first = cli(dir, "attack --config " + q(cfg) +
                                  " --set attack.kind=degree-biased --set attack.ptb_rate=0.3"
                                  " --seed 5 --out " + q(dir / "a"));
  ASSERT_EQ(first.code, 0);
  const auto again =
      cli(dir, "attack --config " + q(first.run_dir() / "config.json") + " --out " + q(dir / "b"));
  ASSERT_EQ(again.code, 0) << slurp(dir / "stderr.txt");
  EXPECT_EQ(slurp(first.run_dir() / "attacked.edges"), slurp(again.run_dir() / "attacked.edges"));
  EXPECT_EQ(slurp(first.run_dir() / "split.txt"), slurp(again.run_dir() / "split.txt"));
  EXPECT_NE(first.run_dir(), again.run_dir());
}

TEST(CliDataset, DataRootFromEnvironment) {
  const auto dir = scratch("dataroot");
  gddm::SbmConfig sbm;
  sbm.nodes = 60;
  sbm.p_in = 0.1;
  const auto g = gddm::make_sbm(sbm);
  const auto ds = dir / "data" / "toy";
  fs::create_directories(ds);
  gddm::save_graph(g, (ds / "edges.tsv").string(), (ds / "features.csv").string(),
                   (ds / "labels.txt").string());
  const auto cfg = write_config(dir, small_config());
  const auto args = "eval --config " + q(cfg) +
                    " --set dataset.kind=files --set dataset.name=toy --out " + q(dir / "runs");
  EXPECT_EQ(cli(dir, args).code, 3);  // default root "data" is relative to the cwd
  const auto r = cli(dir, args, "GDDM_DATA_ROOT=" + q(dir / "data"));
  ASSERT_EQ(r.code, 0) << slurp(dir / "stderr.txt");
  const auto er = json::parse(slurp(r.run_dir() / "eval.json"));
  EXPECT_EQ(er.at("edges"), g.edge_count());
}

// ---------------------------------------------------------------------------
// Config resolution

TEST(Overrides, ParsesJsonAndKeepsStrings) {
  auto tree = gddm::default_config_tree();
  gddm::apply_override(tree, "purify.mu=0.8");
  gddm::apply_override(tree, "purify.lambda=3");
  gddm::apply_override(tree, "purify.target_nodes=[1,2]");
  gddm::apply_override(tree, "out=123");
  gddm::apply_override(tree, "checkpoint=a=b");
  EXPECT_DOUBLE_EQ(tree["purify"]["mu"].get<double>(), 0.8);
  EXPECT_EQ(tree["purify"]["lambda"], 3);
  EXPECT_EQ(tree["purify"]["target_nodes"], json::array({1, 2}));
  EXPECT_EQ(tree["out"], "123");
  EXPECT_EQ(tree["checkpoint"], "a=b");
}

TEST(Overrides, AddressesBenchCellsByIndex) {
  auto tree = gddm::default_config_tree();
  gddm::apply_override(tree, "bench.cells.1.level=0.5");
  gddm::apply_override(tree, "bench.cells.1.purify.mu=0.7");
  EXPECT_EQ(tree["bench"]["cells"][1]["level"], 0.5);
  EXPECT_THROW(gddm::apply_override(tree, "bench.cells.9.level=1"), gddm::UsageError);
  gddm::RunConfig c;
  c.tree = tree;
  gddm::detail::from_tree(c);
  EXPECT_DOUBLE_EQ(c.bench_cells[1].purify.mu, 0.7);
  EXPECT_DOUBLE_EQ(c.bench_cells[0].purify.mu, c.purify.mu);
}

TEST(Overrides, UnknownKeysAreUsageErrors) {
  auto tree = gddm::default_config_tree();
  EXPECT_THROW(gddm::apply_override(tree, "purify.nu=1"), gddm::UsageError);
  EXPECT_THROW(gddm::apply_override(tree, "purify..mu=1"), gddm::UsageError);
  EXPECT_THROW(gddm::apply_override(tree, "=1"), gddm::UsageError);
  // Cell purify patches are free-form until the tree is parsed.
  gddm::apply_override(tree, "bench.cells.0.purify.nu=1");
  gddm::RunConfig c;
  c.tree = tree;
  EXPECT_THROW(gddm::detail::from_tree(c), gddm::UsageError);
}

TEST(Resolve, FlagsApplyAfterOverridesAndSeedReachesTraining) {
  gddm::ConfigSources src;
  src.overrides = {"seed=4", "out=x"};
  src.seed = 9;
  src.out = "y";
  const auto c = gddm::resolve_config(src);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.out, "y");
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.train.T, c.T);
  EXPECT_EQ(c.run_seed0(), gddm::run_seed(9, 0));
}

TEST(Resolve, DefaultsValidateForEveryCommandWithoutCheckpoint) {
  const auto c = gddm::resolve_config({});
  for (auto cmd : {gddm::Command::kTrain, gddm::Command::kAttack, gddm::Command::kEval,
                   gddm::Command::kBench}) {
    EXPECT_NO_THROW(c.validate(cmd)) << gddm::to_string(cmd);
  }
  EXPECT_THROW(c.validate(gddm::Command::kPurify), gddm::ConfigError);
}
