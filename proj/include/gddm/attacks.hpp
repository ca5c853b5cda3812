#ifndef GDDM_ATTACKS_HPP
#define GDDM_ATTACKS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gddm/error.hpp"
#include "gddm/graph.hpp"
#include "gddm/log.hpp"
#include "gddm/purifier.hpp"
#include "gddm/rng.hpp"

namespace gddm {

enum class AttackKind { kNone, kRandomFlip, kDegreeBiased, kTargetedHeuristic, kExternalFile };

inline const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kNone: return "none";
    case AttackKind::kRandomFlip: return "random-flip";
    case AttackKind::kDegreeBiased: return "degree-biased";
    case AttackKind::kTargetedHeuristic: return "targeted-heuristic";
    case AttackKind::kExternalFile: return "external-file";
  }
  return "?";
}

inline AttackKind parse_attack_kind(const std::string& s) {
  for (auto k : {AttackKind::kNone, AttackKind::kRandomFlip, AttackKind::kDegreeBiased,
                 AttackKind::kTargetedHeuristic, AttackKind::kExternalFile}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown attack kind '" + s + "'");
}

struct AttackSpec {
  AttackKind kind = AttackKind::kNone;
  std::optional<double> ptb_rate;
  std::optional<int> ptb_num;
  std::vector<NodeId> targets;
  std::string path;  // external-file only
  std::uint64_t seed = 0;

  bool targeted() const noexcept { return kind == AttackKind::kTargetedHeuristic; }

  void validate() const {
    switch (kind) {
      case AttackKind::kRandomFlip:
      case AttackKind::kDegreeBiased:
        if (!ptb_rate || ptb_num) throw ConfigError("attack needs ptb_rate (and no ptb_num)");
        if (!(*ptb_rate > 0.0 && *ptb_rate <= 1.0)) {
          throw ConfigError("attack.ptb_rate must lie in (0, 1]");
        }
        break;
      case AttackKind::kTargetedHeuristic:
        if (!ptb_num || ptb_rate) throw ConfigError("attack needs ptb_num (and no ptb_rate)");
        if (*ptb_num < 1) throw ConfigError("attack.ptb_num must be >= 1");
        break;
      case AttackKind::kExternalFile:
        if (path.empty()) throw ConfigError("external-file attack needs a path");
        break;
      case AttackKind::kNone:
        break;
    }
  }
};

inline void to_json(nlohmann::json& j, const AttackSpec& s) {
  j = {{"kind", to_string(s.kind)}, {"targets", s.targets}, {"seed", s.seed}};
  j["ptb_rate"] = s.ptb_rate ? nlohmann::json(*s.ptb_rate) : nlohmann::json(nullptr);
  j["ptb_num"] = s.ptb_num ? nlohmann::json(*s.ptb_num) : nlohmann::json(nullptr);
  if (!s.path.empty()) j["path"] = s.path;
}

inline void from_json(const nlohmann::json& j, AttackSpec& s) {
  s = AttackSpec{};
  s.kind = parse_attack_kind(j.value("kind", std::string("none")));
  if (j.contains("ptb_rate") && !j.at("ptb_rate").is_null()) s.ptb_rate = j.at("ptb_rate").get<double>();
  if (j.contains("ptb_num") && !j.at("ptb_num").is_null()) s.ptb_num = j.at("ptb_num").get<int>();
  s.targets = j.value("targets", std::vector<NodeId>{});
  s.path = j.value("path", std::string());
  s.seed = j.value("seed", std::uint64_t{0});
}

/// Test-mask nodes with degree > 10, ascending.
inline std::vector<NodeId> select_target_nodes(const Graph& g, const Split& split,
                                               std::size_t min_degree_exclusive = 10) {
  if (split.size() != g.size()) throw InvariantError("split size differs from graph size");
  std::vector<NodeId> out;
  for (NodeId v : split.test()) {
    if (g.adjacency().degree(v) > min_degree_exclusive) out.push_back(v);
  }
  if (out.empty()) log::warn("no test node has degree > " + std::to_string(min_degree_exclusive));
  return out;
}

namespace detail {

inline std::size_t budget(double rate, std::size_t edges) {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(edges) - 1e-9)));
}

inline AttackedGraph finish(const Graph& clean, Adjacency a, const AttackSpec& spec,
                            std::size_t done) {
  AttackedGraph out(clean.with_adjacency(std::move(a), clean.name() + "-attacked"),
                    to_string(spec.kind));
  out.perturbations = done;
  out.targets = spec.targets;
  return out;
}

}  // namespace detail

/// Flips ceil(rate * |E|) distinct uniformly chosen pairs.
inline AttackedGraph random_flip_attack(const Graph& g, const AttackSpec& spec) {
  spec.validate();
  const auto n = g.size();
  if (n < 2) throw InvariantError("graph too small to attack");
  const std::size_t total_pairs = n * (n - 1) / 2;
  const auto want = std::min(detail::budget(*spec.ptb_rate, g.edge_count()), total_pairs);
  Rng rng(derive_seed(spec.seed, 0xf11b));
  Adjacency a = g.adjacency();
  std::set<Edge> chosen;
  while (chosen.size() < want) {
    const auto u = static_cast<NodeId>(rng.below(n));
    const auto v = static_cast<NodeId>(rng.below(n));
    if (u == v || !chosen.insert(Edge(u, v)).second) continue;
    if (!a.remove_edge(u, v)) a.add_edge(u, v);
  }
  return detail::finish(g, std::move(a), spec, chosen.size());
}

/// Adds ceil(rate * |E|) cross-class edges, each with a below-median-degree
/// endpoint drawn with weight 1/(1 + degree).
inline AttackedGraph degree_biased_attack(const Graph& g, const AttackSpec& spec) {
  spec.validate();
  const auto n = g.size();
  const auto& labels = g.labels();
  const auto want = detail::budget(*spec.ptb_rate, g.edge_count());
  const auto deg = degree_vector(g.adjacency());
  const double med = median_degree(deg);
  std::vector<NodeId> low;
  for (NodeId i = 0; i < n; ++i) {
    if (static_cast<double>(deg[i]) < med) low.push_back(i);
  }
  if (low.empty()) {
    log::warn("no node has degree below the median; sampling from all nodes");
    for (NodeId i = 0; i < n; ++i) low.push_back(i);
  }
  std::vector<double> cdf(low.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < low.size(); ++k) {
    acc += 1.0 / (1.0 + static_cast<double>(deg[low[k]]));
    cdf[k] = acc;
  }
  Rng rng(derive_seed(spec.seed, 0xdeb1));
  Adjacency a = g.adjacency();
  std::size_t done = 0;
  const std::size_t max_attempts = 200 * want + 10000;
  for (std::size_t attempt = 0; done < want && attempt < max_attempts; ++attempt) {
    const double r = rng.uniform() * acc;
    const auto pos = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin()),
        low.size() - 1);
    const NodeId u = low[pos];
    const auto v = static_cast<NodeId>(rng.below(n));
    if (u == v || labels[u] == labels[v]) continue;
    if (a.add_edge(u, v)) ++done;
  }
  if (done < want) {
    log::warn("degree-biased attack placed " + std::to_string(done) + " of " +
              std::to_string(want) + " edges");
  }
  return detail::finish(g, std::move(a), spec, done);
}

/// Per target, ptb_num greedy moves: connect to the most dissimilar
/// different-class non-neighbor, else cut the most similar same-class
/// neighbor. Ties go to the smallest node id.
inline AttackedGraph targeted_heuristic_attack(const Graph& g, const AttackSpec& spec) {
  spec.validate();
  if (spec.targets.empty()) throw ConfigError("targeted attack needs target nodes");
  const auto n = g.size();
  const auto& x = g.features();
  const auto& labels = g.labels();
  Adjacency a = g.adjacency();
  std::set<Edge> touched;
  std::size_t done = 0;
  for (NodeId v : spec.targets) {
    if (v >= n) throw BoundsError("target node " + std::to_string(v) + " out of range");
    for (int move = 0; move < *spec.ptb_num; ++move) {
      std::optional<NodeId> best;
      double best_fs = -1.0;
      for (NodeId u = 0; u < n; ++u) {
        if (u == v || labels[u] == labels[v] || a.has_edge(u, v)) continue;
        if (touched.count(Edge(u, v))) continue;
        const double fs = feature_smoothness(x, v, u);
        if (fs > best_fs) {
          best_fs = fs;
          best = u;
        }
      }
      if (best) {
        a.add_edge(v, *best);
        touched.insert(Edge(v, *best));
        ++done;
        continue;
      }
      std::optional<NodeId> cut;
      double cut_fs = 0.0;
      for (NodeId u : a.neighbors(v)) {
        if (labels[u] != labels[v] || touched.count(Edge(u, v))) continue;
        const double fs = feature_smoothness(x, v, u);
        if (!cut || fs < cut_fs) {
          cut_fs = fs;
          cut = u;
        }
      }
      if (!cut) {
        log::warn("target " + std::to_string(v) + " has no legal move left");
        break;
      }
      a.remove_edge(v, *cut);
      touched.insert(Edge(v, *cut));
      ++done;
    }
  }
  return detail::finish(g, std::move(a), spec, done);
}

/// Writes an edge list with a "# nodes N" header line.
inline void save_perturbed(const std::string& path, const Adjacency& a) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "# nodes " << a.size() << '\n';
  write_edge_list(out, a);
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// A' from an edge-list file over the clean graph's node universe.
inline AttackedGraph load_perturbed(const std::string& path, const Graph& clean) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string first;
  const auto start = in.tellg();
  if (std::getline(in, first)) {
    const std::string tag = "# nodes";
    if (first.rfind(tag, 0) == 0) {
      const auto declared = std::stoull(first.substr(tag.size()));
      if (declared != clean.size()) {
        throw InvariantError("perturbed graph declares " + std::to_string(declared) +
                             " nodes, clean graph has " + std::to_string(clean.size()));
      }
    }
  }
  in.clear();
  in.seekg(start);
  std::vector<Edge> edges;
  try {
    edges = read_edge_list(in, clean.size());
  } catch (const BoundsError& e) {
    throw InvariantError(std::string("perturbed graph incompatible with clean graph: ") + e.what());
  }
  AttackedGraph out(clean.with_adjacency(Adjacency::from_edges(clean.size(), edges),
                                         clean.name() + "-external"),
                    "external-file");
  std::size_t diff = 0;
  for (const auto& e : out.adjacency().edges()) diff += !clean.adjacency().has_edge(e.u, e.v);
  for (const auto& e : clean.adjacency().edges()) diff += !out.adjacency().has_edge(e.u, e.v);
  out.perturbations = diff;
  return out;
}

inline AttackedGraph apply_attack(const Graph& g, const AttackSpec& spec) {
  switch (spec.kind) {
    case AttackKind::kNone: return AttackedGraph(g, "none");
    case AttackKind::kRandomFlip: return random_flip_attack(g, spec);
    case AttackKind::kDegreeBiased: return degree_biased_attack(g, spec);
    case AttackKind::kTargetedHeuristic: return targeted_heuristic_attack(g, spec);
    case AttackKind::kExternalFile: spec.validate(); return load_perturbed(spec.path, g);
  }
  throw ConfigError("unhandled attack kind");
}

/// |E(A) xor E(B)|.
inline std::size_t symmetric_difference(const Adjacency& a, const Adjacency& b) {
  std::size_t d = 0;
  for (const auto& e : a.edges()) d += !b.has_edge(e.u, e.v);
  for (const auto& e : b.edges()) d += !a.has_edge(e.u, e.v);
  return d;
}

inline nlohmann::json attack_manifest(const AttackSpec& spec, const AttackedGraph& g) {
  return {{"spec", spec},
          {"seed", spec.seed},
          {"perturbations", g.perturbations},
          {"edges", g.adjacency().edge_count()}};
}

}  // namespace gddm

#endif  // GDDM_ATTACKS_HPP
