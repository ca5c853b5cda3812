#ifndef GDDM_TRAINER_HPP
#define GDDM_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gddm/autodiff.hpp"
#include "gddm/denoiser.hpp"
#include "gddm/diffusion.hpp"
#include "gddm/error.hpp"
#include "gddm/graph.hpp"
#include "gddm/log.hpp"
#include "gddm/rng.hpp"

namespace gddm {

struct TrainConfig {
  int steps = 2000;
  ad::AdamConfig adam{.lr = 1e-3, .grad_clip = 1.0};
  int T = 64;
  double p = 0.0;
  std::uint64_t seed = 0;
  double negatives_per_positive = 4.0;
  /// Adds the parameter-free prior KL term to the reported loss.
  bool include_prior_term = false;
  int checkpoint_every = 0;  // 0: only the caller saves
  std::string checkpoint_dir;

  void validate() const {
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (!(adam.lr > 0.0)) throw ConfigError("train.lr must be > 0");
    if (T < 1) throw ConfigError("train.T must be >= 1");
    if (!(negatives_per_positive >= 0.0)) {
      throw ConfigError("train.negatives_per_positive must be >= 0");
    }
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"lr", c.adam.lr},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"grad_clip", c.adam.grad_clip},
       {"T", c.T},
       {"p", c.p},
       {"seed", c.seed},
       {"negatives_per_positive", c.negatives_per_positive},
       {"include_prior_term", c.include_prior_term},
       {"checkpoint_every", c.checkpoint_every},
       {"checkpoint_dir", c.checkpoint_dir}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.steps = j.value("steps", d.steps);
  c.adam.lr = j.value("lr", d.adam.lr);
  c.adam.beta1 = j.value("beta1", d.adam.beta1);
  c.adam.beta2 = j.value("beta2", d.adam.beta2);
  c.adam.grad_clip = j.value("grad_clip", d.adam.grad_clip);
  c.T = j.value("T", d.T);
  c.p = j.value("p", d.p);
  c.seed = j.value("seed", d.seed);
  c.negatives_per_positive = j.value("negatives_per_positive", d.negatives_per_positive);
  c.include_prior_term = j.value("include_prior_term", d.include_prior_term);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.checkpoint_dir = j.value("checkpoint_dir", d.checkpoint_dir);
}

struct LossBreakdown {
  double total = 0.0;
  double pair_nll = 0.0;  // mean cross-entropy over candidates
  double prior = 0.0;     // parameter-free KL(q(A^T|A^0) || p(A^T))
  int t = 0;
  std::size_t candidates = 0;
  std::size_t positives = 0;
};

/// One Monte-Carlo draw of (t, A^{t-1}, A^t) with its supervised pairs.
struct TrainingBatch {
  int t = 0;
  Adjacency a_prev;
  Adjacency a_t;
  DegreeVector d0;
  StateVector s;
  std::vector<Edge> pairs;
  std::vector<int> labels;  // 1 iff the pair is an edge of A^{t-1}
  std::size_t positives = 0;
};

/// Closed-form KL between the terminal marginal and a Bernoulli(p) prior,
/// summed over entries. With p = 0 the prior is smoothed to 1e-12 so the term
/// stays finite; it carries no parameters either way.
inline double prior_kl(const Adjacency& a0, const Schedule& s) {
  const double prior = std::max(s.p, 1e-12);
  auto kl = [prior](double q) {
    double out = 0.0;
    if (q > 0.0) out += q * std::log(q / prior);
    if (q < 1.0) out += (1.0 - q) * std::log((1.0 - q) / (1.0 - prior));
    return out;
  };
  const double n = static_cast<double>(a0.size());
  const double edges = static_cast<double>(a0.edge_count());
  const double pairs = n * (n - 1.0) / 2.0;
  return edges * kl(marginal_edge_prob(1, s.T, s)) +
         (pairs - edges) * kl(marginal_edge_prob(0, s.T, s));
}

namespace detail {

inline std::uint64_t pair_key(NodeId u, NodeId v) {
  return (static_cast<std::uint64_t>(std::min(u, v)) << 32) | std::max(u, v);
}

}  // namespace detail

/// Draws t ~ U{1..T}, A^{t-1} ~ q(.|A^0), A^t ~ q(.|A^{t-1}) and builds the
/// candidate set: every removed edge (positive) plus uniformly drawn active
/// non-edge pairs (negatives), capped at `cap` with positives never dropped.
inline TrainingBatch sample_training_batch(const Adjacency& a0, const Schedule& sched,
                                           double negatives_per_positive,
                                           std::size_t cap, Rng& rng) {
  TrainingBatch b;
  b.t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.T)));
  b.a_prev = forward_marginal_sample(a0, b.t - 1, sched, rng);
  b.a_t = forward_step_sample(b.a_prev, b.t, sched, rng);
  b.d0 = degree_vector(a0);
  b.s = compute_state_vector(b.a_prev, b.a_t);

  std::vector<NodeId> active;
  for (NodeId i = 0; i < b.s.size(); ++i) {
    if (b.s[i]) active.push_back(i);
  }
  for (const auto& e : b.a_prev.edges()) {
    if (!b.a_t.has_edge(e.u, e.v) && b.s[e.u] && b.s[e.v]) {
      b.pairs.push_back(e);
      b.labels.push_back(1);
    }
  }
  b.positives = b.pairs.size();

  const std::size_t a = active.size();
  const std::size_t total_pairs = a < 2 ? 0 : a * (a - 1) / 2;
  // Active pairs that are absent from A^{t-1} (hence also from A^t).
  std::size_t prev_edges_active = 0;
  for (NodeId u : active) {
    for (NodeId v : b.a_prev.neighbors(u)) prev_edges_active += (u < v && b.s[v]);
  }
  const std::size_t available = total_pairs - prev_edges_active;
  std::size_t want = static_cast<std::size_t>(
      std::ceil(negatives_per_positive * static_cast<double>(b.positives)));
  if (b.positives + want > cap) want = cap > b.positives ? cap - b.positives : 0;
  want = std::min(want, available);
  if (want == 0) return b;

  if (want * 2 >= available) {
    // Dense regime: enumerate then subsample.
    std::vector<Edge> pool;
    pool.reserve(available);
    for (std::size_t x = 0; x < a; ++x) {
      for (std::size_t y = x + 1; y < a; ++y) {
        if (!b.a_prev.has_edge(active[x], active[y])) pool.emplace_back(active[x], active[y]);
      }
    }
    for (std::size_t k = 0; k < want; ++k) {
      std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
    }
    pool.resize(want);
    std::sort(pool.begin(), pool.end());
    for (const auto& e : pool) {
      b.pairs.push_back(e);
      b.labels.push_back(0);
    }
    return b;
  }
  std::unordered_set<std::uint64_t> seen;
  std::vector<Edge> negs;
  while (negs.size() < want) {
    const NodeId u = active[rng.below(a)];
    const NodeId v = active[rng.below(a)];
    if (u == v || b.a_prev.has_edge(u, v)) continue;
    if (!seen.insert(detail::pair_key(u, v)).second) continue;
    negs.emplace_back(u, v);
  }
  std::sort(negs.begin(), negs.end());
  for (const auto& e : negs) {
    b.pairs.push_back(e);
    b.labels.push_back(0);
  }
  return b;
}

/// Mean pair cross-entropy of `batch` under `params`; accumulates gradients
/// into `params` unless `with_grad` is false.
inline LossBreakdown batch_loss(const TrainingBatch& batch, DenoiserParams& params,
                                bool with_grad = true, double constant = 0.0) {
  LossBreakdown out;
  out.t = batch.t;
  out.candidates = batch.pairs.size();
  out.positives = batch.positives;
  out.prior = constant;
  if (batch.pairs.empty()) {
    out.total = constant;
    return out;
  }
  ad::Tape tape(with_grad);
  DenoiserPass pass(tape, params);
  const NetState state = pass.encode(batch.a_t, batch.d0, batch.t);
  const ad::Var scores = pass.pair_scores(state, batch.pairs);
  ad::Var loss = ad::softmax_cross_entropy(tape, scores, batch.labels);
  out.pair_nll = tape.scalar(loss);
  if (constant != 0.0) {
    loss = ad::add(tape, loss, tape.constant(ad::Matrix::Constant(1, 1, constant)));
  }
  out.total = tape.scalar(loss);
  if (!std::isfinite(out.total)) {
    throw NumericError("non-finite training loss at t=" + std::to_string(batch.t) +
                       " (" + std::to_string(batch.pairs.size()) + " candidates, " +
                       std::to_string(batch.positives) + " positives)");
  }
  if (with_grad) tape.backward(loss);
  return out;
}

/// Stateful driver around batch sampling, loss and Adam.
class Trainer {
 public:
  Trainer(const Adjacency& a0, DenoiserParams& params, TrainConfig cfg)
      : a0_(a0),
        params_(params),
        cfg_(std::move(cfg)),
        sched_(build_schedule(cfg_.T, cfg_.p)),
        adam_(params.pointers(), cfg_.adam),
        prior_(cfg_.include_prior_term ? prior_kl(a0, sched_) : 0.0) {
    cfg_.validate();
  }

  const Schedule& schedule() const noexcept { return sched_; }

  /// Algorithm step `index`: its randomness is a substream keyed by index.
  LossBreakdown step(long index) {
    Rng rng = Rng(cfg_.seed).substream(static_cast<std::uint64_t>(index));
    const auto batch = sample_training_batch(a0_, sched_, cfg_.negatives_per_positive,
                                             params_.config().candidate_cap, rng);
    return apply(batch);
  }

  LossBreakdown apply(const TrainingBatch& batch) {
    params_.zero_grad();
    const auto loss = batch_loss(batch, params_, true, prior_);
    if (!batch.pairs.empty()) adam_.step();
    return loss;
  }

 private:
  const Adjacency& a0_;
  DenoiserParams& params_;
  TrainConfig cfg_;
  Schedule sched_;
  ad::Adam adam_;
  double prior_;
};

/// One optimization step on a fresh Monte-Carlo draw.
inline LossBreakdown training_step(const Adjacency& a0, DenoiserParams& params,
                                   const Schedule& sched, const TrainConfig& cfg,
                                   ad::Adam& adam, Rng& rng) {
  const auto batch = sample_training_batch(a0, sched, cfg.negatives_per_positive,
                                           params.config().candidate_cap, rng);
  params.zero_grad();
  const double prior = cfg.include_prior_term ? prior_kl(a0, sched) : 0.0;
  const auto loss = batch_loss(batch, params, true, prior);
  if (!batch.pairs.empty()) adam.step();
  return loss;
}

struct TrainCurveRow {
  long step = 0;
  int t = 0;
  double loss = 0.0;
  std::size_t candidates = 0;
};

struct TrainResult {
  DenoiserParams params;
  std::vector<TrainCurveRow> curve;
  std::vector<std::string> checkpoints;
};

inline void write_train_curve(const std::string& path,
                              const std::vector<TrainCurveRow>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "step,t,loss,candidates\n";
  out.precision(10);
  for (const auto& r : curve) {
    out << r.step << ',' << r.t << ',' << r.loss << ',' << r.candidates << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Trains from freshly initialized parameters (seeded by cfg.seed).
inline TrainResult train(const Graph& graph, const DenoiserConfig& dcfg,
                         const TrainConfig& cfg,
                         const std::function<void(const TrainCurveRow&)>& on_step = {}) {
  cfg.validate();
  dcfg.validate();
  std::size_t max_deg = 0;
  for (auto d : degree_vector(graph.adjacency()).values) max_deg = std::max(max_deg, d);
  if (max_deg > static_cast<std::size_t>(dcfg.max_degree)) {
    log::warn("training graph max degree " + std::to_string(max_deg) +
              " exceeds denoiser.max_degree " + std::to_string(dcfg.max_degree) +
              "; degrees will be clamped");
  }
  TrainResult result;
  result.params = DenoiserParams::init(dcfg, cfg.seed);
  Trainer trainer(graph.adjacency(), result.params, cfg);
  for (long step = 0; step < cfg.steps; ++step) {
    const auto loss = trainer.step(step);
    TrainCurveRow row{step, loss.t, loss.total, loss.candidates};
    result.curve.push_back(row);
    if (on_step) on_step(row);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        !cfg.checkpoint_dir.empty()) {
      const auto path = (std::filesystem::path(cfg.checkpoint_dir) /
                         ("step_" + std::to_string(step + 1) + ".ckpt"))
                            .string();
      nlohmann::json echo = cfg;
      echo.erase("checkpoint_dir");  // keeps checkpoint bytes location-independent
      save_checkpoint(path, result.params, {{"train", echo}, {"step", step + 1}});
      result.checkpoints.push_back(path);
    }
  }
  return result;
}

}  // namespace gddm

#endif  // GDDM_TRAINER_HPP
