#ifndef GDDM_PURIFIER_HPP
#define GDDM_PURIFIER_HPP

// Inference: start from an attack-specific state, run the reverse chain with
// every step intersected against the attacked structure, restart from the
// middle of the horizon until the target size is reached, then prune
// low-degree edges whose endpoints have dissimilar features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gddm/denoiser.hpp"
#include "gddm/diffusion.hpp"
#include "gddm/error.hpp"
#include "gddm/graph.hpp"
#include "gddm/log.hpp"
#include "gddm/rng.hpp"

namespace gddm {

enum class AttackMode { kNonTargeted, kTargeted };

inline const char* to_string(AttackMode m) {
  return m == AttackMode::kTargeted ? "targeted" : "non-targeted";
}

inline AttackMode parse_attack_mode(const std::string& s) {
  if (s == "targeted") return AttackMode::kTargeted;
  if (s == "non-targeted" || s == "nontargeted" || s == "global") {
    return AttackMode::kNonTargeted;
  }
  throw ConfigError("unknown purify mode '" + s + "'");
}

struct PurifyConfig {
  double mu = 0.9;
  std::optional<double> lambda;   // default: median degree of A'
  std::optional<std::size_t> k;   // default: 5% of |E(A')|
  AttackMode mode = AttackMode::kNonTargeted;
  std::vector<NodeId> target_nodes;
  int max_restarts = 8;
  std::uint64_t seed = 0;
  bool use_gsdr = true;
  bool use_nfcr = true;
  StateVectorRule rule = StateVectorRule::kExact;

  void validate() const {
    if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("purify.mu must lie in (0, 1]");
    if (lambda && !(*lambda >= 0.0)) throw ConfigError("purify.lambda must be >= 0");
    if (max_restarts < 0) throw ConfigError("purify.max_restarts must be >= 0");
    if (mode == AttackMode::kTargeted && target_nodes.empty()) {
      throw ConfigError("targeted purification needs a non-empty target_nodes list");
    }
  }
};

inline void to_json(nlohmann::json& j, const PurifyConfig& c) {
  j = {{"mu", c.mu},
       {"mode", to_string(c.mode)},
       {"target_nodes", c.target_nodes},
       {"max_restarts", c.max_restarts},
       {"seed", c.seed},
       {"use_gsdr", c.use_gsdr},
       {"use_nfcr", c.use_nfcr},
       {"state_vector_rule", to_string(c.rule)}};
  j["lambda"] = c.lambda ? nlohmann::json(*c.lambda) : nlohmann::json(nullptr);
  j["k"] = c.k ? nlohmann::json(*c.k) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, PurifyConfig& c) {
  PurifyConfig d;
  c.mu = j.value("mu", d.mu);
  c.lambda = d.lambda;
  if (j.contains("lambda") && !j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
  c.k = d.k;
  if (j.contains("k") && !j.at("k").is_null()) c.k = j.at("k").get<std::size_t>();
  c.mode = parse_attack_mode(j.value("mode", std::string(to_string(d.mode))));
  c.target_nodes = j.value("target_nodes", d.target_nodes);
  c.max_restarts = j.value("max_restarts", d.max_restarts);
  c.seed = j.value("seed", d.seed);
  c.use_gsdr = j.value("use_gsdr", d.use_gsdr);
  c.use_nfcr = j.value("use_nfcr", d.use_nfcr);
  c.rule = parse_state_vector_rule(j.value("state_vector_rule", std::string("exact")));
}

/// Perturbed structure over the clean features and labels; d0 is the degree
/// vector of the perturbed adjacency.
struct AttackedGraph {
  Graph graph;
  DegreeVector d0;
  std::string attack = "none";
  std::size_t perturbations = 0;
  std::vector<NodeId> targets;

  AttackedGraph() = default;
  explicit AttackedGraph(Graph g, std::string kind = "none")
      : graph(std::move(g)), d0(degree_vector(graph.adjacency())), attack(std::move(kind)) {}

  const Adjacency& adjacency() const noexcept { return graph.adjacency(); }
  const Eigen::MatrixXd& features() const noexcept { return graph.features(); }
  std::size_t size() const noexcept { return graph.size(); }
};

/// Empty matrix (non-targeted) or A' without target-incident edges.
inline Adjacency init_denoise_start(const AttackedGraph& attacked, const PurifyConfig& cfg) {
  const auto n = attacked.size();
  if (cfg.mode == AttackMode::kNonTargeted) return Adjacency(n);
  if (cfg.target_nodes.empty()) {
    throw ConfigError("targeted purification needs a non-empty target_nodes list");
  }
  std::vector<char> is_target(n, 0);
  for (NodeId v : cfg.target_nodes) {
    if (v >= n) throw BoundsError("target node " + std::to_string(v) + " out of range");
    is_target[v] = 1;
  }
  Adjacency out(n);
  for (const auto& e : attacked.adjacency().edges()) {
    if (!is_target[e.u] && !is_target[e.v]) out.add_edge(e.u, e.v);
  }
  return out;
}

/// A' (.) A_gen.
inline Adjacency gsdr_filter(const Adjacency& gen, const Adjacency& attacked) {
  if (gen.size() != attacked.size()) {
    throw InvariantError("gsdr_filter: dimension mismatch (" + std::to_string(gen.size()) +
                         " vs " + std::to_string(attacked.size()) + ")");
  }
  Adjacency out(gen.size());
  for (const auto& e : gen.edges()) {
    if (attacked.has_edge(e.u, e.v)) out.add_edge(e.u, e.v);
  }
  return out;
}

/// One reverse step proposer: (A^t, s^t, d0, t, rng) -> A^{t-1} superset.
using StepFn = std::function<Adjacency(const Adjacency&, const StateVector&,
                                       const DegreeVector&, int, Rng&)>;

struct GenerateResult {
  Adjacency adjacency;
  std::size_t target_edges = 0;
  std::size_t reverse_steps = 0;
  int restarts = 0;
  bool reached_target = true;
};

/// Reverse loop of the inference algorithm around an arbitrary step proposer.
inline GenerateResult generate_with(const AttackedGraph& attacked, const Schedule& sched,
                                    const PurifyConfig& cfg, Rng& rng, const StepFn& step) {
  cfg.validate();
  GenerateResult r;
  const auto& ref = attacked.adjacency();
  r.target_edges =
      static_cast<std::size_t>(std::ceil(cfg.mu * static_cast<double>(ref.edge_count()) - 1e-9));
  Adjacency a = init_denoise_start(attacked, cfg);
  int t = sched.T;
  while (a.edge_count() < r.target_edges) {
    DegreeVector dt = degree_vector(a);
    if (!cfg.use_gsdr) {
      // Without the intersection d^t may overshoot d^0; such nodes are spent.
      for (std::size_t i = 0; i < dt.size(); ++i) dt.values[i] = std::min(dt[i], attacked.d0[i]);
    }
    const auto s = sample_state_vector(attacked.d0, dt, t, sched, rng, cfg.rule);
    a = step(a, s, attacked.d0, t, rng);
    if (cfg.use_gsdr) a = gsdr_filter(a, ref);
    ++r.reverse_steps;
    if (t > 1) {
      --t;
      continue;
    }
    if (a.edge_count() >= r.target_edges) break;
    if (r.restarts >= cfg.max_restarts) {
      r.reached_target = false;
      log::warn("generation stopped at " + std::to_string(a.edge_count()) + " of " +
                std::to_string(r.target_edges) + " target edges after " +
                std::to_string(r.restarts) + " restarts");
      break;
    }
    ++r.restarts;
    t = std::max(1, sched.T / 2);
  }
  r.adjacency = std::move(a);
  return r;
}

inline GenerateResult generate(const AttackedGraph& attacked, DenoiserParams& params,
                               const Schedule& sched, const PurifyConfig& cfg, Rng& rng) {
  const StepFn step = [&](const Adjacency& a, const StateVector& s, const DegreeVector& d0,
                          int t, Rng& r) {
    DenoiseOptions opt;
    if (cfg.use_gsdr) opt.restrict_to = &attacked.adjacency();
    return denoise_step(a, s, d0, t, params, r, opt);
  };
  return generate_with(attacked, sched, cfg, rng, step);
}

/// ||X_i - X_j||^2.
inline double feature_smoothness(const Eigen::MatrixXd& x, NodeId i, NodeId j) {
  if (i >= x.rows() || j >= x.rows()) throw BoundsError("feature_smoothness: node out of range");
  return (x.row(i) - x.row(j)).squaredNorm();
}

/// 1 when either endpoint has attacked-graph degree below lambda.
inline int attack_probability(const DegreeVector& d, NodeId i, NodeId j, double lambda) {
  return (static_cast<double>(d[i]) < lambda || static_cast<double>(d[j]) < lambda) ? 1 : 0;
}

struct NfcrResult {
  Adjacency adjacency;
  std::vector<Edge> removed;
};

/// Ranks every edge by smoothness (descending, ties lexicographic) and drops
/// those that are flagged and rank within the first k.
inline NfcrResult nfcr_filter(const Adjacency& raw, const Eigen::MatrixXd& x,
                              const DegreeVector& d_attacked, double lambda, std::size_t k) {
  NfcrResult out{raw, {}};
  if (k == 0) return out;
  auto edges = raw.edges();
  std::vector<double> fs(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) fs[e] = feature_smoothness(x, edges[e].u, edges[e].v);
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fs[a] > fs[b]; });
  const auto top = std::min(k, order.size());
  for (std::size_t r = 0; r < top; ++r) {
    const auto& e = edges[order[r]];
    if (attack_probability(d_attacked, e.u, e.v, lambda)) {
      out.adjacency.remove_edge(e.u, e.v);
      out.removed.push_back(e);
    }
  }
  std::sort(out.removed.begin(), out.removed.end());
  return out;
}

inline double median_degree(const DegreeVector& d) {
  if (d.size() == 0) return 0.0;
  auto v = d.values;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = static_cast<double>(v[mid]);
  if (v.size() % 2) return hi;
  const double lo = static_cast<double>(*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return 0.5 * (lo + hi);
}

struct PurifyReport {
  std::size_t edges_attacked = 0;
  std::size_t edges_start = 0;
  std::size_t edges_generated = 0;
  std::size_t edges_final = 0;
  std::size_t target_edges = 0;
  std::size_t reverse_steps = 0;
  int restarts = 0;
  bool reached_target = true;
  double lambda = 0.0;
  std::size_t k = 0;
  std::vector<Edge> nfcr_removed;
  std::uint64_t seed = 0;
  PurifyConfig config;
};

inline void to_json(nlohmann::json& j, const PurifyReport& r) {
  nlohmann::json removed = nlohmann::json::array();
  for (const auto& e : r.nfcr_removed) removed.push_back({e.u, e.v});
  j = {{"edges_attacked", r.edges_attacked},
       {"edges_start", r.edges_start},
       {"edges_generated", r.edges_generated},
       {"edges_final", r.edges_final},
       {"target_edges", r.target_edges},
       {"reverse_steps", r.reverse_steps},
       {"restarts", r.restarts},
       {"reached_target", r.reached_target},
       {"lambda", r.lambda},
       {"k", r.k},
       {"nfcr_removed", removed},
       {"seed", r.seed},
       {"config", r.config}};
}

struct PurifyResult {
  Graph graph;
  PurifyReport report;
};

inline PurifyResult purify_with(const AttackedGraph& attacked, const Schedule& sched,
                                const PurifyConfig& cfg, const StepFn& step) {
  Rng rng(derive_seed(cfg.seed, 0x9e71f));
  auto gen = generate_with(attacked, sched, cfg, rng, step);
  PurifyReport rep;
  rep.edges_attacked = attacked.adjacency().edge_count();
  rep.edges_start = init_denoise_start(attacked, cfg).edge_count();
  rep.edges_generated = gen.adjacency.edge_count();
  rep.target_edges = gen.target_edges;
  rep.reverse_steps = gen.reverse_steps;
  rep.restarts = gen.restarts;
  rep.reached_target = gen.reached_target;
  rep.lambda = cfg.lambda.value_or(median_degree(attacked.d0));
  rep.k = cfg.k.value_or(static_cast<std::size_t>(
      std::llround(0.05 * static_cast<double>(rep.edges_attacked))));
  rep.seed = cfg.seed;
  rep.config = cfg;
  Adjacency final_adj = std::move(gen.adjacency);
  if (cfg.use_nfcr) {
    auto nf = nfcr_filter(final_adj, attacked.features(), attacked.d0, rep.lambda, rep.k);
    final_adj = std::move(nf.adjacency);
    rep.nfcr_removed = std::move(nf.removed);
  }
  rep.edges_final = final_adj.edge_count();
  return {attacked.graph.with_adjacency(std::move(final_adj), attacked.graph.name() + "-purified"),
          std::move(rep)};
}

/// generate -> nfcr_filter, with the original features and labels attached.
inline PurifyResult purify(const AttackedGraph& attacked, DenoiserParams& params,
                           const Schedule& sched, const PurifyConfig& cfg) {
  const StepFn step = [&](const Adjacency& a, const StateVector& s, const DegreeVector& d0,
                          int t, Rng& r) {
    DenoiseOptions opt;
    if (cfg.use_gsdr) opt.restrict_to = &attacked.adjacency();
    return denoise_step(a, s, d0, t, params, r, opt);
  };
  return purify_with(attacked, sched, cfg, step);
}

}  // namespace gddm

#endif  // GDDM_PURIFIER_HPP
