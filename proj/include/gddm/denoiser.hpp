#ifndef GDDM_DENOISER_HPP
#define GDDM_DENOISER_HPP

// Recovery network p_theta(A^{t-1} | s^t, A^t). Nodes are described only by
// their degree at step t and in the reference graph; L message-passing
// layers (neighbor attention, gated recurrent update, global context) refine
// that description, and an MLP over Z_i + Z_j scores each candidate pair.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gddm/autodiff.hpp"
#include "gddm/diffusion.hpp"
#include "gddm/error.hpp"
#include "gddm/graph.hpp"
#include "gddm/log.hpp"
#include "gddm/rng.hpp"

namespace gddm {

struct DenoiserConfig {
  int layers = 3;
  int embed_dim = 64;   // width of Z; each degree embedding is embed_dim / 2
  int hidden_dim = 128; // MLP hidden width
  int heads = 4;
  int max_degree = 256;
  std::size_t candidate_cap = 20000;

  void validate() const {
    if (layers < 1) throw ConfigError("denoiser.layers must be >= 1");
    if (embed_dim < 2 || embed_dim % 2 != 0) {
      throw ConfigError("denoiser.embed_dim must be even and >= 2");
    }
    if (hidden_dim < 1) throw ConfigError("denoiser.hidden_dim must be >= 1");
    if (heads < 1 || embed_dim % heads != 0) {
      throw ConfigError("denoiser.heads must divide embed_dim");
    }
    if (max_degree < 1) throw ConfigError("denoiser.max_degree must be >= 1");
    if (candidate_cap < 1) throw ConfigError("denoiser.candidate_cap must be >= 1");
  }

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

inline void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"layers", c.layers},         {"embed_dim", c.embed_dim},
       {"hidden_dim", c.hidden_dim}, {"heads", c.heads},
       {"max_degree", c.max_degree}, {"candidate_cap", c.candidate_cap}};
}

inline void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  DenoiserConfig d;
  c.layers = j.value("layers", d.layers);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.heads = j.value("heads", d.heads);
  c.max_degree = j.value("max_degree", d.max_degree);
  c.candidate_cap = j.value("candidate_cap", d.candidate_cap);
}

/// All learnable arrays, in a fixed creation order.
class DenoiserParams {
 public:
  DenoiserParams() = default;

  /// Glorot-uniform weights, zero biases.
  static DenoiserParams init(const DenoiserConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DenoiserParams p;
    p.config_ = cfg;
    Rng rng(derive_seed(seed, 0xde401));
    const int e = cfg.embed_dim;
    const int h = cfg.hidden_dim;
    auto weight = [&](const std::string& name, int rows, int cols) {
      const double lim = std::sqrt(6.0 / (rows + cols));
      ad::Matrix m(rows, cols);
      for (int j = 0; j < cols; ++j) {
        for (int i = 0; i < rows; ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * lim;
      }
      p.add(name, std::move(m));
    };
    auto bias = [&](const std::string& name, int cols) {
      p.add(name, ad::Matrix::Zero(1, cols));
    };
    {
      // Embedding rows are drawn like a (max_degree+1) x (e/2) weight.
      const double lim = 1.0;
      ad::Matrix m(cfg.max_degree + 1, e / 2);
      for (int j = 0; j < m.cols(); ++j) {
        for (int i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * lim;
      }
      p.add("deg_emb", std::move(m));
    }
    weight("time.w1", e, e);
    bias("time.b1", e);
    weight("time.w2", e, e);
    bias("time.b2", e);
    for (int l = 0; l < cfg.layers; ++l) {
      const auto pre = "mpm" + std::to_string(l) + ".";
      for (const char* n : {"q", "k", "v", "skip"}) {
        weight(pre + "w" + n, 2 * e, e);
        bias(pre + "b" + n, e);
      }
      for (const char* g : {"r", "z", "h"}) {
        weight(pre + "gru.w" + g, e, e);
        weight(pre + "gru.u" + g, e, e);
        bias(pre + "gru.b" + g, e);
      }
      weight(pre + "ctx.w1", 2 * e, h);
      bias(pre + "ctx.b1", h);
      weight(pre + "ctx.w2", h, e);
      bias(pre + "ctx.b2", e);
    }
    weight("head.w1", e, h);
    bias("head.b1", h);
    weight("head.w2", h, 2);
    bias("head.b2", 2);
    return p;
  }

  const DenoiserConfig& config() const noexcept { return config_; }
  DenoiserConfig& mutable_config() noexcept { return config_; }

  std::vector<ad::Parameter>& params() noexcept { return params_; }
  const std::vector<ad::Parameter>& params() const noexcept { return params_; }

  std::vector<ad::Parameter*> pointers() {
    std::vector<ad::Parameter*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  ad::Parameter& at(const std::string& name) { return params_.at(index(name)); }
  const ad::Parameter& at(const std::string& name) const {
    return params_.at(index(name));
  }
  bool contains(const std::string& name) const { return lookup_.count(name) > 0; }

  std::size_t index(const std::string& name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) throw InvariantError("unknown parameter '" + name + "'");
    return it->second;
  }

  Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& p : params_) {
      if (!p.value.allFinite()) return false;
    }
    return true;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  friend bool operator==(const DenoiserParams& a, const DenoiserParams& b) {
    if (!(a.config_ == b.config_) || a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      const auto& x = a.params_[i];
      const auto& y = b.params_[i];
      if (x.name != y.name || x.value.rows() != y.value.rows() ||
          x.value.cols() != y.value.cols() || x.value != y.value) {
        return false;
      }
    }
    return true;
  }

  void add(std::string name, ad::Matrix value) {
    lookup_[name] = params_.size();
    params_.emplace_back(std::move(name), std::move(value));
  }

 private:
  DenoiserConfig config_;
  std::vector<ad::Parameter> params_;
  std::map<std::string, std::size_t> lookup_;
};

/// Per-pass node representations. The Vars live on the tape they were
/// recorded on.
struct NetState {
  ad::Var Z;
  ad::Var H;
  ad::Var c;
  ad::Var t_emb;
};

/// Candidate pairs with their two-component scores (column 0: no edge,
/// column 1: edge).
struct EdgeLogits {
  std::vector<Edge> pairs;
  ad::Matrix b;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
};

inline std::shared_ptr<ad::NeighborIndex> neighbor_index(const Adjacency& a) {
  auto nb = std::make_shared<ad::NeighborIndex>();
  nb->offsets.reserve(a.size() + 1);
  nb->cols.reserve(2 * a.edge_count());
  nb->offsets.push_back(0);
  for (NodeId i = 0; i < a.size(); ++i) {
    for (NodeId j : a.neighbors(i)) nb->cols.push_back(j);
    nb->offsets.push_back(static_cast<Eigen::Index>(nb->cols.size()));
  }
  return nb;
}

/// Sinusoidal features of a timestep, width `dim`.
inline ad::Matrix timestep_features(int t, int dim) {
  ad::Matrix f(1, dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / std::max(1, half));
    f(0, k) = std::sin(t * freq);
    f(0, half + k) = std::cos(t * freq);
  }
  if (dim % 2) f(0, dim - 1) = 0.0;
  return f;
}

/// One forward pass of the network on a tape. Parameters are bound lazily so a
/// pass touches only the arrays it uses.
class DenoiserPass {
 public:
  DenoiserPass(ad::Tape& tape, DenoiserParams& params)
      : tape_(tape), params_(params), bound_(params.params().size()) {}

  ad::Tape& tape() noexcept { return tape_; }
  DenoiserParams& params() noexcept { return params_; }
  std::size_t clamped() const noexcept { return clamped_; }

  ad::Var p(const std::string& name) {
    const auto k = params_.index(name);
    if (!bound_[k].valid()) bound_[k] = tape_.param(params_.params()[k]);
    return bound_[k];
  }

  /// Z^0 = [emb(d^t) | emb(d^0)], c^0 = mean(Z^0), t_emb = MLP(sin(t)),
  /// H^0 = 0.
  NetState init_node_repr(const DegreeVector& d0, const DegreeVector& dt, int t) {
    const auto& cfg = params_.config();
    if (d0.size() != dt.size()) throw InvariantError("degree vectors differ in length");
    const auto cap = static_cast<std::size_t>(cfg.max_degree);
    std::vector<Eigen::Index> idx_t(dt.size()), idx_0(d0.size());
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < d0.size(); ++i) {
      clamped += (dt[i] > cap) + (d0[i] > cap);
      idx_t[i] = static_cast<Eigen::Index>(std::min(dt[i], cap));
      idx_0[i] = static_cast<Eigen::Index>(std::min(d0[i], cap));
    }
    if (clamped > 0) {
      clamped_ += clamped;
      log::debug("clamped " + std::to_string(clamped) +
                 " degrees to max_degree " + std::to_string(cap));
    }
    auto& tp = tape_;
    NetState s;
    const ad::Var emb = p("deg_emb");
    s.Z = ad::concat_cols(tp, ad::gather_rows(tp, emb, std::move(idx_t)),
                          ad::gather_rows(tp, emb, std::move(idx_0)));
    s.c = ad::mean_rows(tp, s.Z);
    const ad::Var tf = tp.constant(timestep_features(t, cfg.embed_dim));
    s.t_emb = ad::linear(
        tp, ad::silu(tp, ad::linear(tp, tf, p("time.w1"), p("time.b1"))),
        p("time.w2"), p("time.b2"));
    s.H = tp.constant(ad::Matrix::Zero(static_cast<Eigen::Index>(d0.size()),
                                       cfg.embed_dim));
    return s;
  }

  NetState mpm_layer(const NetState& in, std::shared_ptr<const ad::NeighborIndex> nb,
                     int layer) {
    const auto& cfg = params_.config();
    if (layer < 0 || layer >= cfg.layers) {
      throw BoundsError("layer " + std::to_string(layer) + " out of range");
    }
    auto& tp = tape_;
    const auto pre = "mpm" + std::to_string(layer) + ".";
    const auto n = tp.value(in.Z).rows();

    // Graph transformer over [Z | t_emb].
    const ad::Var x = ad::concat_cols(tp, in.Z, ad::tile_rows(tp, in.t_emb, n));
    const ad::Var q = ad::linear(tp, x, p(pre + "wq"), p(pre + "bq"));
    const ad::Var k = ad::linear(tp, x, p(pre + "wk"), p(pre + "bk"));
    const ad::Var v = ad::linear(tp, x, p(pre + "wv"), p(pre + "bv"));
    const ad::Var msg = ad::neighbor_attention(tp, q, k, v, std::move(nb), cfg.heads);
    const ad::Var gt = ad::add(tp, msg, ad::linear(tp, x, p(pre + "wskip"), p(pre + "bskip")));

    // GRU(gt, H).
    auto gate = [&](const char* g, ad::Var h) {
      const std::string w = pre + "gru.w" + g;
      const std::string u = pre + "gru.u" + g;
      const std::string b = pre + "gru.b" + g;
      return ad::add_row(tp, ad::add(tp, ad::matmul(tp, gt, p(w)), ad::matmul(tp, h, p(u))),
                         p(b));
    };
    const ad::Var r = ad::sigmoid(tp, gate("r", in.H));
    const ad::Var z = ad::sigmoid(tp, gate("z", in.H));
    const ad::Var cand = ad::tanh(tp, gate("h", ad::mul(tp, r, in.H)));
    const ad::Var h_next =
        ad::add(tp, ad::mul(tp, ad::one_minus(tp, z), in.H), ad::mul(tp, z, cand));

    // Global context from [Z | c] then Z + c.
    const ad::Var zc = ad::concat_cols(tp, h_next, ad::tile_rows(tp, in.c, n));
    const ad::Var c_next = ad::linear(
        tp, ad::silu(tp, ad::linear(tp, ad::mean_rows(tp, zc), p(pre + "ctx.w1"),
                                    p(pre + "ctx.b1"))),
        p(pre + "ctx.w2"), p(pre + "ctx.b2"));

    NetState out;
    out.H = h_next;
    out.c = c_next;
    out.Z = ad::add_row(tp, h_next, c_next);
    out.t_emb = in.t_emb;
    if (!tp.value(out.Z).allFinite() || !tp.value(out.c).allFinite()) {
      throw NumericError("non-finite activations in message-passing layer " +
                         std::to_string(layer));
    }
    return out;
  }

  /// Runs init + all layers on A_t.
  NetState encode(const Adjacency& a_t, const DegreeVector& d0, int t) {
    NetState s = init_node_repr(d0, degree_vector(a_t), t);
    auto nb = neighbor_index(a_t);
    for (int l = 0; l < params_.config().layers; ++l) s = mpm_layer(s, nb, l);
    return s;
  }

  /// b_ij = MLP(Z_i + Z_j) for each pair; m x 2.
  ad::Var pair_scores(const NetState& s, std::span<const Edge> pairs) {
    auto& tp = tape_;
    std::vector<Eigen::Index> us(pairs.size()), vs(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      us[k] = pairs[k].u;
      vs[k] = pairs[k].v;
    }
    const ad::Var sum = ad::add(tp, ad::gather_rows(tp, s.Z, std::move(us)),
                                ad::gather_rows(tp, s.Z, std::move(vs)));
    const ad::Var hidden = ad::silu(tp, ad::linear(tp, sum, p("head.w1"), p("head.b1")));
    return ad::linear(tp, hidden, p("head.w2"), p("head.b2"));
  }

 private:
  ad::Tape& tape_;
  DenoiserParams& params_;
  std::vector<ad::Var> bound_;
  std::size_t clamped_ = 0;
};

// ---------------------------------------------------------------------------
// Candidate pairs and sampling

/// Pairs (i < j) with both endpoints active and not yet connected. When more
/// than `cap` exist, a uniform subsample of size `cap` is drawn (returned in
/// lexicographic order). No randomness is consumed when under the cap.
inline std::vector<Edge> candidate_pairs(const StateVector& s, const Adjacency& a_t,
                                         std::size_t cap, Rng& rng) {
  if (s.size() != a_t.size()) throw InvariantError("state vector length mismatch");
  std::vector<NodeId> active;
  for (NodeId i = 0; i < s.size(); ++i) {
    if (s[i]) active.push_back(i);
  }
  std::vector<Edge> pairs;
  const std::size_t a = active.size();
  pairs.reserve(a < 2 ? 0 : std::min(a * (a - 1) / 2, std::size_t{1} << 22));
  for (std::size_t x = 0; x < a; ++x) {
    for (std::size_t y = x + 1; y < a; ++y) {
      if (!a_t.has_edge(active[x], active[y])) pairs.emplace_back(active[x], active[y]);
    }
  }
  if (pairs.size() > cap) {
    // Partial Fisher-Yates for the first `cap` positions.
    for (std::size_t k = 0; k < cap; ++k) {
      const auto j = k + rng.below(pairs.size() - k);
      std::swap(pairs[k], pairs[j]);
    }
    pairs.resize(cap);
    std::sort(pairs.begin(), pairs.end());
  }
  return pairs;
}

/// P(edge) = softmax(b)[1].
inline double edge_probability(double no_edge, double edge) {
  return 1.0 / (1.0 + std::exp(no_edge - edge));
}

/// Gumbel-argmax per pair: the pair is kept when b_1 + g_1 > b_0 + g_0.
/// `greedy` drops the noise (argmax of b only) and consumes no randomness.
inline std::vector<Edge> sample_edges(const EdgeLogits& logits, Rng& rng,
                                      bool greedy = false) {
  std::vector<Edge> out;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    double g0 = 0.0, g1 = 0.0;
    if (!greedy) {
      g0 = rng.gumbel();
      g1 = rng.gumbel();
    }
    if (logits.b(r, 1) + g1 > logits.b(r, 0) + g0) out.push_back(logits.pairs[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Free-function interface

inline NetState init_node_repr(ad::Tape& tape, DenoiserParams& params,
                               const DegreeVector& d0, const DegreeVector& dt, int t) {
  DenoiserPass pass(tape, params);
  return pass.init_node_repr(d0, dt, t);
}

/// Scores the candidate pairs of `s_t` on `a_t`.
inline EdgeLogits predict_edge_logits(DenoiserPass& pass, const NetState& state,
                                      const StateVector& s_t, const Adjacency& a_t,
                                      Rng& rng) {
  EdgeLogits out;
  out.pairs = candidate_pairs(s_t, a_t, pass.params().config().candidate_cap, rng);
  if (out.pairs.empty()) {
    out.b.resize(0, 2);
    return out;
  }
  out.b = pass.tape().value(pass.pair_scores(state, out.pairs));
  return out;
}

struct DenoiseOptions {
  bool greedy = false;
  /// When set, only candidates present in this matrix are scored. Noise is
  /// keyed by candidate position, so the result equals filtering the
  /// unrestricted output by this matrix.
  const Adjacency* restrict_to = nullptr;
};

/// A^{t-1} = A^t plus sampled edges among active pairs. Consumes the
/// candidate subsample draws plus one noise key from `rng`.
inline Adjacency denoise_step(const Adjacency& a_t, const StateVector& s_t,
                              const DegreeVector& d0, int t, DenoiserParams& params,
                              Rng& rng, const DenoiseOptions& opt = {}) {
  if (d0.size() != a_t.size()) throw InvariantError("d0 length mismatch");
  Adjacency next = a_t;
  const auto pairs = candidate_pairs(s_t, a_t, params.config().candidate_cap, rng);
  if (pairs.empty()) return next;
  const std::uint64_t key = rng.engine()();

  std::vector<std::size_t> scored;
  scored.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (opt.restrict_to == nullptr || opt.restrict_to->has_edge(pairs[k].u, pairs[k].v)) {
      scored.push_back(k);
    }
  }
  if (scored.empty()) return next;
  ad::Tape tape(false);
  DenoiserPass pass(tape, params);
  const NetState state = pass.encode(a_t, d0, t);
  std::vector<Edge> sub;
  sub.reserve(scored.size());
  for (auto k : scored) sub.push_back(pairs[k]);
  const ad::Matrix b = tape.value(pass.pair_scores(state, sub));
  for (std::size_t r = 0; r < scored.size(); ++r) {
    const auto k = scored[r];
    double g0 = 0.0, g1 = 0.0;
    if (!opt.greedy) {
      g0 = keyed_gumbel(key, 2 * k);
      g1 = keyed_gumbel(key, 2 * k + 1);
    }
    const auto row = static_cast<Eigen::Index>(r);
    if (b(row, 1) + g1 > b(row, 0) + g0) next.add_edge(pairs[k].u, pairs[k].v);
  }
  return next;
}

// ---------------------------------------------------------------------------
// Checkpoints: "GDDMCKPT", u32 version, u64 + json config echo, u32 count,
// then per array: u32 + name, u64 rows, u64 cols, rows*cols doubles
// (column-major, native little-endian).

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const DenoiserParams& params,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  out.write("GDDMCKPT", 8);
  put_u32(kCheckpointVersion);
  nlohmann::json header = extra;
  header["denoiser"] = params.config();
  const std::string text = header.dump();
  put_u64(text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u32(static_cast<std::uint32_t>(params.params().size()));
  for (const auto& p : params.params()) {
    put_u32(static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u64(static_cast<std::uint64_t>(p.value.rows()));
    put_u64(static_cast<std::uint64_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(double) * p.value.size()));
  }
  if (!out) throw IoError("checkpoint write failed for '" + path + "'");
}

struct Checkpoint {
  DenoiserParams params;
  nlohmann::json header;
};

/// Reads a checkpoint and checks every array against the shapes implied by
/// the echoed DenoiserConfig.
inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  auto get = [&](void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in) throw ParseError("truncated checkpoint '" + path + "'", 0);
  };
  char magic[8];
  get(magic, 8);
  if (std::string(magic, 8) != "GDDMCKPT") throw ParseError("not a checkpoint: " + path, 0);
  std::uint32_t version = 0;
  get(&version, 4);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  }
  std::uint64_t len = 0;
  get(&len, 8);
  if (len > (std::uint64_t{1} << 30)) throw ParseError("corrupt checkpoint header", 0);
  std::string text(len, '\0');
  get(text.data(), len);
  Checkpoint ck;
  ck.header = nlohmann::json::parse(text);
  const auto cfg = ck.header.at("denoiser").get<DenoiserConfig>();
  auto expected = DenoiserParams::init(cfg, 0);
  std::uint32_t count = 0;
  get(&count, 4);
  if (count != expected.params().size()) {
    throw InvariantError("checkpoint holds " + std::to_string(count) +
                         " arrays, config implies " +
                         std::to_string(expected.params().size()));
  }
  for (std::uint32_t k = 0; k < count; ++k) {
    std::uint32_t nlen = 0;
    get(&nlen, 4);
    if (nlen > 4096) throw ParseError("corrupt array name", 0);
    std::string name(nlen, '\0');
    get(name.data(), nlen);
    std::uint64_t rows = 0, cols = 0;
    get(&rows, 8);
    get(&cols, 8);
    if (!expected.contains(name)) {
      throw InvariantError("unexpected array '" + name + "' in checkpoint");
    }
    auto& target = expected.at(name);
    if (static_cast<std::uint64_t>(target.value.rows()) != rows ||
        static_cast<std::uint64_t>(target.value.cols()) != cols) {
      throw InvariantError("shape mismatch for '" + name + "'");
    }
    get(target.value.data(), sizeof(double) * rows * cols);
  }
  ck.params = std::move(expected);
  return ck;
}

}  // namespace gddm

#endif  // GDDM_DENOISER_HPP
