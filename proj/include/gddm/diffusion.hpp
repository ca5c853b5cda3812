#ifndef GDDM_DIFFUSION_HPP
#define GDDM_DIFFUSION_HPP

// Discrete Bernoulli edge diffusion: every off-diagonal entry is kept with
// probability alpha_t or resampled from Bernoulli(p) at each step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gddm/error.hpp"
#include "gddm/graph.hpp"
#include "gddm/rng.hpp"

namespace gddm {

/// Diffusion horizon and per-step rates. Vectors are indexed by step t with
/// entry 0 describing the clean state (alpha_bar[0] = 1).
struct Schedule {
  int T = 0;
  double p = 0.0;
  double final_alpha_bar = 1e-4;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  double beta_at(int t) const { return beta.at(static_cast<std::size_t>(t)); }
  double alpha_at(int t) const { return alpha.at(static_cast<std::size_t>(t)); }
  double alpha_bar_at(int t) const {
    return alpha_bar.at(static_cast<std::size_t>(t));
  }
};

/// alpha_bar decays linearly from 1 to `final_alpha_bar` over T steps. The
/// stored alpha_bar is the running product of the stored alpha values, so the
/// recursion alpha_bar[t] = alpha_bar[t-1] * alpha[t] holds bit-for-bit.
inline Schedule build_schedule(int T, double p = 0.0,
                               double final_alpha_bar = 1e-4) {
  if (T < 1) throw ConfigError("diffusion horizon must be >= 1, got " +
                               std::to_string(T));
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
  if (!(final_alpha_bar > 0.0 && final_alpha_bar < 1.0)) {
    throw ConfigError("final alpha_bar must lie in (0, 1)");
  }
  Schedule s;
  s.T = T;
  s.p = p;
  s.final_alpha_bar = final_alpha_bar;
  const auto n = static_cast<std::size_t>(T) + 1;
  s.alpha.assign(n, 1.0);
  s.beta.assign(n, 0.0);
  s.alpha_bar.assign(n, 1.0);
  for (int t = 1; t <= T; ++t) {
    const double target =
        1.0 - (1.0 - final_alpha_bar) * static_cast<double>(t) / T;
    const double prev = s.alpha_bar[t - 1];
    double a = target / prev;
    if (t == T) {
      while (prev * a > final_alpha_bar) a = std::nextafter(a, 0.0);
    }
    s.alpha[t] = a;
    s.beta[t] = 1.0 - a;
    s.alpha_bar[t] = prev * a;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Forward process

namespace detail {

inline void check_step(int t, const Schedule& s, int lo = 1) {
  if (t < lo || t > s.T) {
    throw BoundsError("diffusion step " + std::to_string(t) +
                      " outside [" + std::to_string(lo) + ", " +
                      std::to_string(s.T) + "]");
  }
}

/// Samples each entry independently with P(1) = keep * a + flip where `a` is
/// the current entry. With flip = 0 only existing edges are visited.
inline Adjacency bernoulli_resample(const Adjacency& a, double keep,
                                    double flip, Rng& rng) {
  Adjacency out(a.size());
  if (flip == 0.0) {
    for (const auto& e : a.edges()) {
      if (rng.bernoulli(keep)) out.add_edge(e.u, e.v);
    }
    return out;
  }
  const auto n = static_cast<NodeId>(a.size());
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      const double prob = keep * a(i, j) + flip;
      if (rng.bernoulli(prob)) out.add_edge(i, j);
    }
  }
  return out;
}

}  // namespace detail

/// One forward step: A^t ~ q(A^t | A^{t-1}).
inline Adjacency forward_step_sample(const Adjacency& prev, int t,
                                     const Schedule& s, Rng& rng) {
  detail::check_step(t, s);
  return detail::bernoulli_resample(prev, 1.0 - s.beta[t], s.beta[t] * s.p,
                                    rng);
}

/// P(a_t = 1 | a_0). t = 0 is accepted and returns a0.
inline double marginal_edge_prob(int a0, int t, const Schedule& s) {
  detail::check_step(t, s, 0);
  const double ab = s.alpha_bar[t];
  return ab * a0 + (1.0 - ab) * s.p;
}

/// A^t ~ q(A^t | A^0) in one shot.
inline Adjacency forward_marginal_sample(const Adjacency& a0, int t,
                                         const Schedule& s, Rng& rng) {
  detail::check_step(t, s, 0);
  const double ab = s.alpha_bar[t];
  return detail::bernoulli_resample(a0, ab, (1.0 - ab) * s.p, rng);
}

/// P(a_t | a_{t-1}) for a single entry.
inline double step_transition_prob(int a_t, int a_prev, int t,
                                   const Schedule& s) {
  detail::check_step(t, s);
  const double on = (1.0 - s.beta[t]) * a_prev + s.beta[t] * s.p;
  return a_t ? on : 1.0 - on;
}

/// q(a_{t-1} = 1 | a_t, a_0) by Bayes' rule over the single-step and
/// marginal transitions.
inline double posterior_edge_prob(int a_t, int a0, int t, const Schedule& s) {
  detail::check_step(t, s);
  const double on_t = marginal_edge_prob(a0, t, s);
  const double evidence = a_t ? on_t : 1.0 - on_t;
  if (evidence <= 0.0) {
    throw ImpossibleEvidence("q(a_t=" + std::to_string(a_t) + " | a0=" +
                             std::to_string(a0) + ") is zero at t=" +
                             std::to_string(t));
  }
  const double prior_on = marginal_edge_prob(a0, t - 1, s);
  return step_transition_prob(a_t, 1, t, s) * prior_on / evidence;
}

// ---------------------------------------------------------------------------
// State vector

/// Binary per-node indicator of a degree change between consecutive steps.
struct StateVector {
  std::vector<std::uint8_t> values;

  std::size_t size() const noexcept { return values.size(); }
  bool operator[](std::size_t i) const { return values[i] != 0; }
  std::size_t active_count() const {
    std::size_t c = 0;
    for (auto v : values) c += v;
    return c;
  }
  friend bool operator==(const StateVector&, const StateVector&) = default;
};

/// Which per-edge removal ratio drives the state-vector probability.
enum class StateVectorRule {
  /// beta_t * abar_{t-1} / (1 - abar_t): exact conditional for p = 0.
  kExact,
  /// beta_t * abar_{t-1} / (1 - abar_{t-1}), with the t = 1 singularity
  /// resolved by its divergence limit.
  kPaper,
};

inline const char* to_string(StateVectorRule r) {
  return r == StateVectorRule::kExact ? "exact" : "paper";
}

inline StateVectorRule parse_state_vector_rule(const std::string& s) {
  if (s == "exact") return StateVectorRule::kExact;
  if (s == "paper") return StateVectorRule::kPaper;
  throw ConfigError("unknown state-vector rule '" + s + "'");
}

/// P(s^t_i = 1 | d^0_i, d^t_i) = 1 - (1 - r_t)^(d0 - dt) where r_t is the
/// probability that an edge missing at step t was removed exactly at t.
inline double state_vector_prob(std::size_t d0, std::size_t dt, int t,
                                const Schedule& s,
                                StateVectorRule rule = StateVectorRule::kExact) {
  detail::check_step(t, s);
  if (dt > d0) {
    throw InvariantError("inconsistent degrees: d_t=" + std::to_string(dt) +
                         " exceeds d_0=" + std::to_string(d0));
  }
  const auto deficit = d0 - dt;
  if (deficit == 0) return 0.0;
  const double removed_now = s.beta[t] * s.alpha_bar[t - 1];
  const double denom = rule == StateVectorRule::kExact
                           ? 1.0 - s.alpha_bar[t]
                           : 1.0 - s.alpha_bar[t - 1];
  if (denom <= 0.0) return 1.0;
  double base = 1.0 - removed_now / denom;
  base = std::clamp(base, 0.0, 1.0);
  const double prob = 1.0 - std::pow(base, static_cast<double>(deficit));
  return std::clamp(prob, 0.0, 1.0);
}

inline StateVector sample_state_vector(
    const DegreeVector& d0, const DegreeVector& dt, int t, const Schedule& s,
    Rng& rng, StateVectorRule rule = StateVectorRule::kExact) {
  if (d0.size() != dt.size()) {
    throw InvariantError("degree vectors differ in length");
  }
  StateVector out;
  out.values.resize(d0.size());
  for (std::size_t i = 0; i < d0.size(); ++i) {
    const double prob = state_vector_prob(d0[i], dt[i], t, s, rule);
    out.values[i] = rng.bernoulli(prob) ? 1 : 0;
  }
  return out;
}

/// s_i = 1 iff node i has a different degree in the two matrices.
inline StateVector compute_state_vector(const Adjacency& prev,
                                        const Adjacency& next) {
  if (prev.size() != next.size()) {
    throw InvariantError("adjacency dimensions differ (" +
                         std::to_string(prev.size()) + " vs " +
                         std::to_string(next.size()) + ")");
  }
  StateVector out;
  out.values.resize(prev.size());
  for (NodeId i = 0; i < prev.size(); ++i) {
    out.values[i] = prev.degree(i) != next.degree(i) ? 1 : 0;
  }
  return out;
}

}  // namespace gddm

#endif  // GDDM_DIFFUSION_HPP
