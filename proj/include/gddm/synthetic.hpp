#ifndef GDDM_SYNTHETIC_HPP
#define GDDM_SYNTHETIC_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gddm/error.hpp"
#include "gddm/graph.hpp"
#include "gddm/rng.hpp"

namespace gddm {

/// Stochastic block model with bag-of-words features. Each class owns a
/// disjoint slice of `topic_words` vocabulary entries; every node draws
/// `words_per_node` words (plus a uniform offset in [-words_jitter,
/// words_jitter]), each from its class slice with probability
/// `topic_fidelity` and otherwise uniformly from the whole vocabulary.
struct SbmConfig {
  std::size_t nodes = 1000;
  int classes = 4;
  double p_in = 0.02;
  double p_out = 0.002;
  std::size_t topic_words = 40;   // per class
  std::size_t shared_words = 200; // not owned by any class
  std::size_t words_per_node = 12;
  std::size_t words_jitter = 0;
  double topic_fidelity = 0.25;
  std::uint64_t seed = 0;

  void validate() const {
    if (nodes < 2) throw ConfigError("sbm.nodes must be >= 2");
    if (classes < 1) throw ConfigError("sbm.classes must be >= 1");
    for (double p : {p_in, p_out, topic_fidelity}) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sbm probabilities must lie in [0, 1]");
    }
    if (words_per_node == 0 || topic_words == 0) throw ConfigError("sbm vocabulary is empty");
    if (words_jitter >= words_per_node) throw ConfigError("sbm.words_jitter must be < words_per_node");
  }
};

inline void to_json(nlohmann::json& j, const SbmConfig& c) {
  j = {{"nodes", c.nodes},
       {"classes", c.classes},
       {"p_in", c.p_in},
       {"p_out", c.p_out},
       {"topic_words", c.topic_words},
       {"shared_words", c.shared_words},
       {"words_per_node", c.words_per_node},
       {"words_jitter", c.words_jitter},
       {"topic_fidelity", c.topic_fidelity},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SbmConfig& c) {
  SbmConfig d;
  c.nodes = j.value("nodes", d.nodes);
  c.classes = j.value("classes", d.classes);
  c.p_in = j.value("p_in", d.p_in);
  c.p_out = j.value("p_out", d.p_out);
  c.topic_words = j.value("topic_words", d.topic_words);
  c.shared_words = j.value("shared_words", d.shared_words);
  c.words_per_node = j.value("words_per_node", d.words_per_node);
  c.words_jitter = j.value("words_jitter", d.words_jitter);
  c.topic_fidelity = j.value("topic_fidelity", d.topic_fidelity);
  c.seed = j.value("seed", d.seed);
}

/// Labels are assigned round-robin, so class sizes differ by at most one.
inline Graph make_sbm(const SbmConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x5b11));
  const auto n = cfg.nodes;
  const auto k = static_cast<std::size_t>(cfg.classes);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % k);

  Adjacency a(n);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      if (rng.bernoulli(labels[i] == labels[j] ? cfg.p_in : cfg.p_out)) a.add_edge(i, j);
    }
  }

  const std::size_t vocab = k * cfg.topic_words + cfg.shared_words;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(vocab));
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = cfg.words_per_node;
    if (cfg.words_jitter > 0) count = count - cfg.words_jitter + rng.below(2 * cfg.words_jitter + 1);
    for (std::size_t w = 0; w < count; ++w) {
      std::size_t word;
      if (rng.bernoulli(cfg.topic_fidelity)) {
        word = static_cast<std::size_t>(labels[i]) * cfg.topic_words + rng.below(cfg.topic_words);
      } else {
        word = rng.below(vocab);
      }
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(word)) = 1.0;
    }
  }
  return Graph("sbm", std::move(a), std::move(x), std::move(labels));
}

}  // namespace gddm

#endif  // GDDM_SYNTHETIC_HPP
