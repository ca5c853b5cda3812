#ifndef GDDM_CONFIG_HPP
#define GDDM_CONFIG_HPP

// Run configuration shared by every subcommand: one JSON tree of defaults,
// deep-merged with a config file and then with `key=value` overrides. The
// resolved tree is what the manifest records, so feeding it back as a config
// file reproduces the run.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gddm/attacks.hpp"
#include "gddm/denoiser.hpp"
#include "gddm/diffusion.hpp"
#include "gddm/error.hpp"
#include "gddm/evaluator.hpp"
#include "gddm/graph.hpp"
#include "gddm/purifier.hpp"
#include "gddm/synthetic.hpp"
#include "gddm/trainer.hpp"

namespace gddm {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kDataRootEnv = "GDDM_DATA_ROOT";

enum class Command { kTrain, kAttack, kPurify, kEval, kBench };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::kTrain: return "train";
    case Command::kAttack: return "attack";
    case Command::kPurify: return "purify";
    case Command::kEval: return "eval";
    case Command::kBench: return "bench";
  }
  return "?";
}

inline Command parse_command(const std::string& s) {
  for (auto c : {Command::kTrain, Command::kAttack, Command::kPurify, Command::kEval,
                 Command::kBench}) {
    if (s == to_string(c)) return c;
  }
  throw UsageError("unknown command '" + s + "'");
}

/// kind "sbm" generates the graph; kind "files" reads edges/features/labels,
/// defaulting to <root>/<name>/{edges.tsv,features.csv,labels.txt}.
struct DatasetConfig {
  std::string kind = "sbm";
  std::string name = "cora";
  std::string root;  // empty: $GDDM_DATA_ROOT, then "data"
  std::string edges;
  std::string features;
  std::string labels;
  SbmConfig sbm;

  std::string data_root() const {
    if (!root.empty()) return root;
    if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') return env;
    return "data";
  }

  std::string path_of(const std::string& explicit_path, const char* file) const {
    if (!explicit_path.empty()) return explicit_path;
    return (std::filesystem::path(data_root()) / name / file).string();
  }
  std::string edge_path() const { return path_of(edges, "edges.tsv"); }
  std::string feature_path() const { return path_of(features, "features.csv"); }
  std::string label_path() const { return path_of(labels, "labels.txt"); }
};

/// Precomputed artifacts consumed by purify and eval instead of recomputing.
struct InputConfig {
  std::string graph;    // perturbed edge list over the dataset's nodes
  std::string targets;  // one node id per line
  std::string split;    // saved split file
};

struct RunConfig {
  nlohmann::json tree;  // resolved, as recorded in the manifest
  DatasetConfig dataset;
  int T = 64;
  double p = 0.0;
  double final_alpha_bar = 1e-4;
  DenoiserConfig denoiser;
  TrainConfig train;  // T, p and seed come from the top level
  PurifyConfig purify;
  AttackSpec attack;
  GCNConfig gcn;
  int bench_runs = 10;
  std::vector<Scenario> bench_cells;
  std::uint64_t seed = 0;
  std::string out = "runs";
  std::string checkpoint;
  InputConfig input;

  Schedule schedule() const { return build_schedule(T, p, final_alpha_bar); }

  /// Seed shared by split, attack, purification and classifier in the
  /// single-run commands. Equal to run 0 of `bench`.
  std::uint64_t run_seed0() const { return run_seed(seed, 0); }

  void validate(Command cmd) const;
};

namespace detail {

inline nlohmann::json without(nlohmann::json j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) j.erase(k);
  return j;
}

inline const nlohmann::json& cell_template() {
  static const nlohmann::json t = {
      {"attack", without(nlohmann::json(AttackSpec{}), {"seed"})},
      {"level", 0.0},
      {"defended", false},
      {"defense", "gddm"},
      {"purify", nlohmann::json::object()},
      {"target_eval", nullptr},
      {"mu_sweep", false}};
  return t;
}

}  // namespace detail

/// Every key a config may contain. Null leaves are optional values.
inline nlohmann::json default_config_tree() {
  using nlohmann::json;
  const DatasetConfig ds;
  const TrainConfig tc;
  AttackSpec degree;
  degree.kind = AttackKind::kDegreeBiased;
  degree.ptb_rate = 0.25;
  json cells = json::array();
  json clean_cell = detail::cell_template();
  clean_cell["defended"] = false;
  json attacked_cell = detail::cell_template();
  attacked_cell["attack"] = detail::without(json(degree), {"seed"});
  attacked_cell["level"] = 0.25;
  cells.push_back(clean_cell);
  cells.push_back(attacked_cell);
  return {
      {"dataset",
       {{"kind", ds.kind},
        {"name", ds.name},
        {"root", ds.root},
        {"edges", ds.edges},
        {"features", ds.features},
        {"labels", ds.labels},
        {"sbm", ds.sbm}}},
      {"schedule", {{"T", 64}, {"p", 0.0}, {"final_alpha_bar", 1e-4}}},
      {"denoiser", DenoiserConfig{}},
      {"train", detail::without(json(tc), {"T", "p", "seed", "checkpoint_dir"})},
      {"purify", detail::without(json(PurifyConfig{}), {"seed"})},
      {"attack", detail::without(json(AttackSpec{}), {"seed"})},
      {"gcn", detail::without(json(GCNConfig{}), {"seed"})},
      {"bench", {{"runs", 10}, {"cells", cells}}},
      {"input", {{"graph", ""}, {"targets", ""}, {"split", ""}}},
      {"seed", 0},
      {"out", "runs"},
      {"checkpoint", ""}};
}

namespace detail {

/// Object keys in `got` must exist in `ref`; arrays and null leaves are not
/// descended into here.
inline void check_keys(const nlohmann::json& got, const nlohmann::json& ref,
                       const std::string& where) {
  if (!got.is_object() || !ref.is_object()) return;
  for (const auto& [k, v] : got.items()) {
    const std::string path = where.empty() ? k : where + "." + k;
    if (!ref.contains(k)) throw UsageError("unknown config key '" + path + "'");
    if (!ref.at(k).empty()) check_keys(v, ref.at(k), path);
  }
}

inline void deep_merge(nlohmann::json& base, const nlohmann::json& patch) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [k, v] : patch.items()) {
    if (base.contains(k) && base[k].is_object() && v.is_object()) {
      deep_merge(base[k], v);
    } else {
      base[k] = v;
    }
  }
}

inline std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : key) {
    if (c == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  for (const auto& p : parts) {
    if (p.empty()) throw UsageError("malformed config key '" + key + "'");
  }
  return parts;
}

inline bool all_digits(const std::string& s) {
  return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
}

}  // namespace detail

/// Applies "a.b.c=value". The value is parsed as JSON when possible and kept
/// as a string otherwise, or when the key currently holds a string. The key
/// must already exist; array elements are addressed by index.
inline void apply_override(nlohmann::json& tree, const std::string& expr) {
  const auto eq = expr.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("override '" + expr + "' is not key=value");
  }
  const std::string key = expr.substr(0, eq);
  const std::string text = expr.substr(eq + 1);
  nlohmann::json* node = &tree;
  for (const auto& part : detail::split_key(key)) {
    if (node->is_object() && node->contains(part)) {
      node = &(*node)[part];
    } else if (node->is_array() && detail::all_digits(part) &&
               std::stoull(part) < node->size()) {
      node = &(*node)[std::stoull(part)];
    } else if (node->is_object() && node->empty()) {
      node = &(*node)[part];  // free-form patch objects (bench cell purify)
    } else {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded() || (node->is_string() && !value.is_string())) value = text;
  *node = std::move(value);
}

inline nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  if (!j.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");
  return j;
}

namespace detail {

inline Scenario parse_cell(const nlohmann::json& cell, const nlohmann::json& base_purify,
                           std::size_t index) {
  const std::string where = "bench.cells." + std::to_string(index);
  if (!cell.is_object()) throw ConfigError(where + " must be an object");
  check_keys(cell, cell_template(), where);
  nlohmann::json full = cell_template();
  deep_merge(full, cell);
  check_keys(full.at("purify"), base_purify, where + ".purify");
  nlohmann::json pj = base_purify;
  deep_merge(pj, full.at("purify"));
  Scenario sc;
  sc.attack = full.at("attack").get<AttackSpec>();
  sc.level = full.at("level").get<double>();
  sc.defended = full.at("defended").get<bool>();
  sc.defense = full.at("defense").get<std::string>();
  sc.purify = pj.get<PurifyConfig>();
  if (!full.at("target_eval").is_null()) sc.target_eval = full.at("target_eval").get<bool>();
  sc.mu_sweep = full.at("mu_sweep").get<bool>();
  return sc;
}

inline void from_tree(RunConfig& c) {
  const auto& t = c.tree;
  const auto& d = t.at("dataset");
  c.dataset.kind = d.at("kind").get<std::string>();
  c.dataset.name = d.at("name").get<std::string>();
  c.dataset.root = d.at("root").get<std::string>();
  c.dataset.edges = d.at("edges").get<std::string>();
  c.dataset.features = d.at("features").get<std::string>();
  c.dataset.labels = d.at("labels").get<std::string>();
  c.dataset.sbm = d.at("sbm").get<SbmConfig>();
  c.T = t.at("schedule").at("T").get<int>();
  c.p = t.at("schedule").at("p").get<double>();
  c.final_alpha_bar = t.at("schedule").at("final_alpha_bar").get<double>();
  c.seed = t.at("seed").get<std::uint64_t>();
  c.denoiser = t.at("denoiser").get<DenoiserConfig>();
  c.train = t.at("train").get<TrainConfig>();
  c.train.T = c.T;
  c.train.p = c.p;
  c.train.seed = c.seed;
  c.purify = t.at("purify").get<PurifyConfig>();
  c.attack = t.at("attack").get<AttackSpec>();
  c.gcn = t.at("gcn").get<GCNConfig>();
  c.bench_runs = t.at("bench").at("runs").get<int>();
  const auto& cells = t.at("bench").at("cells");
  if (!cells.is_array()) throw ConfigError("bench.cells must be an array");
  c.bench_cells.clear();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    c.bench_cells.push_back(parse_cell(cells[i], t.at("purify"), i));
  }
  c.out = t.at("out").get<std::string>();
  c.checkpoint = t.at("checkpoint").get<std::string>();
  c.input.graph = t.at("input").at("graph").get<std::string>();
  c.input.targets = t.at("input").at("targets").get<std::string>();
  c.input.split = t.at("input").at("split").get<std::string>();
}

}  // namespace detail

struct ConfigSources {
  std::string config_path;              // empty: defaults only
  std::vector<std::string> overrides;   // "key=value", applied in order
  std::optional<std::uint64_t> seed;    // --seed, applied last
  std::optional<std::string> out;       // --out, applied last
};

/// Defaults <- file <- overrides <- flags. Unknown keys raise UsageError,
/// wrongly typed values ConfigError.
inline RunConfig resolve_config(const ConfigSources& src) {
  RunConfig c;
  c.tree = default_config_tree();
  if (!src.config_path.empty()) {
    const auto file = read_config_file(src.config_path);
    detail::check_keys(file, c.tree, "");
    detail::deep_merge(c.tree, file);
  }
  for (const auto& o : src.overrides) apply_override(c.tree, o);
  if (src.seed) c.tree["seed"] = *src.seed;
  if (src.out) c.tree["out"] = *src.out;
  try {
    detail::from_tree(c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  return c;
}

inline void RunConfig::validate(Command cmd) const {
  namespace fs = std::filesystem;
  auto require_file = [](const std::string& path, const std::string& what) {
    if (!fs::is_regular_file(path)) {
      throw ConfigError(what + " '" + path + "' does not exist");
    }
  };
  if (dataset.kind == "sbm") {
    dataset.sbm.validate();
  } else if (dataset.kind == "files") {
    require_file(dataset.edge_path(), "dataset.edges");
    require_file(dataset.feature_path(), "dataset.features");
    require_file(dataset.label_path(), "dataset.labels");
  } else {
    throw ConfigError("dataset.kind must be 'sbm' or 'files', got '" + dataset.kind + "'");
  }
  (void)schedule();
  denoiser.validate();
  train.validate();
  gcn.validate();
  attack.validate();
  if (attack.kind == AttackKind::kExternalFile) require_file(attack.path, "attack.path");
  if (!input.graph.empty()) require_file(input.graph, "input.graph");
  if (!input.targets.empty()) require_file(input.targets, "input.targets");
  if (!input.split.empty()) require_file(input.split, "input.split");
  if (out.empty()) throw ConfigError("out must name a directory");
  PurifyConfig pc = purify;
  if (pc.mode == AttackMode::kTargeted && pc.target_nodes.empty()) {
    pc.target_nodes = {0};  // filled from the attack, the split or input.targets at run time
  }
  pc.validate();
  if (bench_runs < 1) throw ConfigError("bench.runs must be >= 1");
  bool needs_checkpoint = cmd == Command::kPurify;
  if (cmd == Command::kBench) {
    if (bench_cells.empty()) throw ConfigError("bench.cells is empty");
    for (const auto& sc : bench_cells) {
      sc.attack.validate();
      if (sc.attack.kind == AttackKind::kExternalFile) {
        require_file(sc.attack.path, "bench cell attack.path");
      }
      needs_checkpoint = needs_checkpoint || sc.defended;
    }
  }
  if (needs_checkpoint) {
    if (checkpoint.empty()) {
      throw ConfigError(std::string(to_string(cmd)) +
                        " needs a trained denoiser: set checkpoint=<path>");
    }
    require_file(checkpoint, "checkpoint");
  }
}

inline Graph load_dataset(const DatasetConfig& d) {
  if (d.kind == "sbm") return make_sbm(d.sbm);
  return load_graph(d.edge_path(), d.feature_path(), d.label_path(), d.name);
}

inline std::vector<NodeId> read_targets(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<NodeId> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    const auto v = detail::parse_number<NodeId>(detail::trim(line), lineno);
    if (v >= n) throw BoundsError("target " + std::to_string(v) + " out of range");
    out.push_back(v);
  }
  return out;
}

inline void write_targets(const std::string& path, const std::vector<NodeId>& targets) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (auto v : targets) out << v << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline nlohmann::json make_manifest(Command cmd, const RunConfig& c,
                                    const nlohmann::json& outputs) {
  return {{"command", to_string(cmd)},
          {"version", kVersion},
          {"seed", c.seed},
          {"run_seed", c.run_seed0()},
          {"resolved_config", c.tree},
          {"outputs", outputs}};
}

}  // namespace gddm

#endif  // GDDM_CONFIG_HPP
