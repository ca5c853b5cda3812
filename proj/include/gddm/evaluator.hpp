#ifndef GDDM_EVALUATOR_HPP
#define GDDM_EVALUATOR_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gddm/attacks.hpp"
#include "gddm/autodiff.hpp"
#include "gddm/denoiser.hpp"
#include "gddm/diffusion.hpp"
#include "gddm/error.hpp"
#include "gddm/graph.hpp"
#include "gddm/log.hpp"
#include "gddm/purifier.hpp"
#include "gddm/rng.hpp"

namespace gddm {

// ---------------------------------------------------------------------------
// GCN classifier

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
inline ad::SparseMatrix normalize_adjacency(const Adjacency& a) {
  const auto n = static_cast<Eigen::Index>(a.size());
  std::vector<double> inv_sqrt(a.size());
  for (NodeId i = 0; i < a.size(); ++i) {
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(a.degree(i) + 1));
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(a.size() + 2 * a.edge_count());
  for (NodeId i = 0; i < a.size(); ++i) {
    trip.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
    for (NodeId j : a.neighbors(i)) trip.emplace_back(i, j, inv_sqrt[i] * inv_sqrt[j]);
  }
  ad::SparseMatrix s(n, n);
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

struct GCNConfig {
  int hidden_dim = 16;
  int epochs = 200;
  double lr = 0.01;
  double weight_decay = 5e-4;  // L2 on the first layer's weights
  double dropout = 0.5;
  int patience = 30;
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden_dim < 1) throw ConfigError("gcn.hidden_dim must be >= 1");
    if (epochs < 0) throw ConfigError("gcn.epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("gcn.lr must be > 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("gcn.dropout must lie in [0, 1)");
    if (patience < 1) throw ConfigError("gcn.patience must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const GCNConfig& c) {
  j = {{"hidden_dim", c.hidden_dim}, {"epochs", c.epochs},   {"lr", c.lr},
       {"weight_decay", c.weight_decay}, {"dropout", c.dropout}, {"patience", c.patience},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GCNConfig& c) {
  GCNConfig d;
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.epochs = j.value("epochs", d.epochs);
  c.lr = j.value("lr", d.lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.dropout = j.value("dropout", d.dropout);
  c.patience = j.value("patience", d.patience);
  c.seed = j.value("seed", d.seed);
}

struct GcnModel {
  ad::Parameter w1, b1, w2, b2;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_acc = 0.0;

  std::vector<ad::Parameter*> pointers() { return {&w1, &b1, &w2, &b2}; }
};

namespace detail {

inline ad::Var gcn_forward(ad::Tape& t, GcnModel& m, const Eigen::MatrixXd& x,
                           const std::shared_ptr<const ad::SparseMatrix>& a_hat, double dropout,
                           Rng* rng) {
  ad::Var h = t.constant(x);
  if (rng != nullptr) h = ad::dropout(t, h, dropout, *rng);
  h = ad::add_row(t, ad::spmm(t, a_hat, ad::matmul(t, h, t.param(m.w1))), t.param(m.b1));
  h = ad::relu(t, h);
  if (rng != nullptr) h = ad::dropout(t, h, dropout, *rng);
  return ad::add_row(t, ad::spmm(t, a_hat, ad::matmul(t, h, t.param(m.w2))), t.param(m.b2));
}

inline double accuracy_of(const ad::Matrix& logits, const std::vector<int>& labels,
                          const std::vector<NodeId>& nodes) {
  if (nodes.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t ok = 0;
  for (NodeId v : nodes) {
    Eigen::Index arg = 0;
    logits.row(v).maxCoeff(&arg);
    ok += arg == labels[v];
  }
  return static_cast<double>(ok) / static_cast<double>(nodes.size());
}

inline std::vector<Eigen::Index> as_rows(const std::vector<NodeId>& v) {
  return {v.begin(), v.end()};
}

}  // namespace detail

inline GcnModel init_gcn(std::size_t in_dim, int hidden, int classes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6c2));
  auto glorot = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
    const double lim = std::sqrt(6.0 / static_cast<double>(r + c));
    ad::Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * lim;
    return ad::Parameter(name, std::move(m));
  };
  GcnModel m;
  m.w1 = glorot("w1", static_cast<Eigen::Index>(in_dim), hidden);
  m.b1 = ad::Parameter("b1", ad::Matrix::Zero(1, hidden));
  m.w2 = glorot("w2", hidden, classes);
  m.b2 = ad::Parameter("b2", ad::Matrix::Zero(1, classes));
  return m;
}

/// Logits for every node.
inline ad::Matrix gcn_logits(GcnModel& m, const Graph& g) {
  const auto a_hat = std::make_shared<const ad::SparseMatrix>(normalize_adjacency(g.adjacency()));
  ad::Tape t(false);
  return t.value(detail::gcn_forward(t, m, g.features(), a_hat, 0.0, nullptr));
}

/// Two-layer GCN, cross-entropy on the train mask, best validation accuracy
/// kept (ties: lower validation loss), stop after `patience` epochs without
/// improvement.
inline GcnModel train_gcn(const Graph& g, const Split& split, const GCNConfig& cfg) {
  cfg.validate();
  if (split.size() != g.size()) throw InvariantError("split size differs from graph size");
  const int classes = std::max(1, g.num_classes());
  GcnModel m = init_gcn(static_cast<std::size_t>(g.features().cols()), cfg.hidden_dim, classes,
                        cfg.seed);
  const auto a_hat = std::make_shared<const ad::SparseMatrix>(normalize_adjacency(g.adjacency()));
  const auto train_nodes = split.train();
  const auto val_nodes = split.val();
  const auto train_rows = detail::as_rows(train_nodes);
  const auto val_rows = detail::as_rows(val_nodes);
  ad::Adam opt(m.pointers(), {.lr = cfg.lr});
  Rng rng(derive_seed(cfg.seed, 0xd40));
  GcnModel best = m;
  double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  int since = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.zero_grad();
    {
      ad::Tape t;
      const ad::Var logits = detail::gcn_forward(t, m, g.features(), a_hat, cfg.dropout, &rng);
      ad::Var loss = ad::softmax_cross_entropy(t, logits, g.labels(), train_rows);
      if (cfg.weight_decay > 0.0) {
        loss = ad::add(t, loss, ad::sum_squares(t, t.param(m.w1), 0.5 * cfg.weight_decay));
      }
      if (!std::isfinite(t.scalar(loss))) {
        throw NumericError("non-finite GCN loss at epoch " + std::to_string(epoch));
      }
      t.backward(loss);
    }
    opt.step();
    m.epochs_run = epoch + 1;
    ad::Tape t(false);
    const ad::Matrix logits = t.value(detail::gcn_forward(t, m, g.features(), a_hat, 0.0, nullptr));
    const double acc = detail::accuracy_of(logits, g.labels(), val_nodes);
    const double vloss =
        val_rows.empty()
            ? 0.0
            : t.scalar(ad::softmax_cross_entropy(t, t.constant(logits), g.labels(), val_rows));
    const double acc_cmp = std::isnan(acc) ? 0.0 : acc;
    if (acc_cmp > best_acc || (acc_cmp == best_acc && vloss < best_loss)) {
      best_acc = acc_cmp;
      best_loss = vloss;
      best = m;
      best.best_epoch = epoch;
      best.best_val_acc = acc_cmp;
      since = 0;
    } else if (++since >= cfg.patience) {
      break;
    }
  }
  best.epochs_run = m.epochs_run;
  return best;
}

/// Fraction of `nodes` classified correctly.
inline double evaluate_nodes(GcnModel& m, const Graph& g, const std::vector<NodeId>& nodes) {
  return detail::accuracy_of(gcn_logits(m, g), g.labels(), nodes);
}

/// Accuracy on the test mask.
inline double evaluate(GcnModel& m, const Graph& g, const Split& split) {
  return evaluate_nodes(m, g, split.test());
}

/// Accuracy of precomputed predictions on the test mask.
inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels,
                       const Split& split) {
  const auto test = split.test();
  if (test.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t ok = 0;
  for (NodeId v : test) ok += predicted.at(v) == labels.at(v);
  return static_cast<double>(ok) / static_cast<double>(test.size());
}

// ---------------------------------------------------------------------------
// Reports

struct RunStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

/// NaN runs are excluded.
inline RunStats run_stats(const std::vector<double>& xs) {
  RunStats s;
  std::size_t n = 0;
  for (double x : xs) {
    if (std::isnan(x)) continue;
    s.mean += x;
    ++n;
  }
  if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  s.mean /= static_cast<double>(n);
  double sq = 0.0;
  for (double x : xs) {
    if (!std::isnan(x)) sq += (x - s.mean) * (x - s.mean);
  }
  s.std = std::sqrt(sq / static_cast<double>(n));
  return s;
}

struct EvalReport {
  std::string dataset;
  std::string attack_kind;
  double level = 0.0;
  std::string defense;  // "none" or a defense label
  std::optional<double> mu;
  std::vector<double> runs;
  double mean = 0.0;
  double std = 0.0;
  std::string error;

  std::string scenario_id() const {
    std::ostringstream o;
    o << dataset << '/' << attack_kind << '@' << level << '/' << defense;
    return o.str();
  }

  void finalize() {
    const auto s = run_stats(runs);
    mean = s.mean;
    std = s.std;
  }
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"scenario", r.scenario_id()}, {"dataset", r.dataset}, {"attack_kind", r.attack_kind},
       {"level", r.level},           {"defense", r.defense}, {"runs", r.runs},
       {"mean", r.mean},             {"std", r.std},         {"error", r.error}};
  j["mu"] = r.mu ? nlohmann::json(*r.mu) : nlohmann::json(nullptr);
}

// ---------------------------------------------------------------------------
// Benchmark harness

/// One grid cell: an attack level evaluated with or without purification.
struct Scenario {
  AttackSpec attack;        // seed is replaced per run
  double level = 0.0;       // ptb_rate or ptb_num, for tables and plots
  bool defended = false;
  std::string defense = "none";
  PurifyConfig purify;      // seed and targets are replaced per run
  /// Select degree > 10 test targets and score only them. Defaults to on
  /// for targeted attacks; set explicitly to score a clean graph on the
  /// same targets or a targeted attack on the full test mask.
  std::optional<bool> target_eval;
  bool mu_sweep = false;    // plotted on the accuracy-vs-mu chart

  bool evaluates_targets() const { return target_eval.value_or(attack.targeted()); }
};

struct BenchmarkConfig {
  int runs = 10;
  std::uint64_t master_seed = 0;
  GCNConfig gcn;
  std::string out_dir;  // empty: no files
};

namespace detail {

inline std::string fixed(double v, int digits = 6) {
  if (std::isnan(v)) return "nan";
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// Per-run seed shared by every cell, so defended and undefended cells see
/// the same split, attack and classifier initialization.
inline std::uint64_t run_seed(std::uint64_t master, int run) {
  return derive_seed(master, static_cast<std::uint64_t>(run));
}

struct RunOutcome {
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  std::size_t edges_attacked = 0;
  std::size_t edges_purified = 0;
  std::size_t targets = 0;
};

/// Split, attack, optional purification, GCN training and evaluation for one
/// seed.
inline RunOutcome run_scenario_once(const Graph& clean, const Scenario& sc,
                                    DenoiserParams* params, const Schedule& sched,
                                    const GCNConfig& gcn_base, std::uint64_t seed) {
  RunOutcome out;
  const Split split = random_split(clean, seed);
  AttackSpec spec = sc.attack;
  spec.seed = seed;
  std::vector<NodeId> targets;
  if (spec.targeted() || sc.evaluates_targets()) {
    targets = select_target_nodes(clean, split);
    if (targets.empty()) throw InvariantError("no eligible target nodes");
    spec.targets = targets;
  }
  AttackedGraph attacked = apply_attack(clean, spec);
  out.edges_attacked = attacked.adjacency().edge_count();
  out.targets = targets.size();
  Graph eval_graph = attacked.graph;
  if (sc.defended) {
    if (params == nullptr) throw ConfigError("defended scenario needs a trained denoiser");
    PurifyConfig pc = sc.purify;
    pc.seed = seed;
    if (pc.mode == AttackMode::kTargeted) pc.target_nodes = targets;
    eval_graph = purify(attacked, *params, sched, pc).graph;
  }
  out.edges_purified = eval_graph.edge_count();
  GCNConfig gcfg = gcn_base;
  gcfg.seed = seed;
  GcnModel model = train_gcn(eval_graph, split, gcfg);
  out.accuracy = sc.evaluates_targets() ? evaluate_nodes(model, eval_graph, targets)
                                        : evaluate(model, eval_graph, split);
  return out;
}

inline void write_runs_csv(const std::string& path, const std::vector<EvalReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "dataset,attack_kind,level,defense,run,accuracy\n";
  for (const auto& r : reports) {
    for (std::size_t k = 0; k < r.runs.size(); ++k) {
      out << detail::csv_field(r.dataset) << ',' << r.attack_kind << ',' << detail::fixed(r.level, 4)
          << ',' << detail::csv_field(r.defense) << ',' << k << ',' << detail::fixed(r.runs[k])
          << '\n';
    }
  }
}

inline void write_aggregate_csv(const std::string& path, const std::vector<EvalReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "dataset,attack_kind,level,defense,mu,runs,mean,std,error\n";
  for (const auto& r : reports) {
    out << detail::csv_field(r.dataset) << ',' << r.attack_kind << ',' << detail::fixed(r.level, 4)
        << ',' << detail::csv_field(r.defense) << ',' << (r.mu ? detail::fixed(*r.mu, 4) : "")
        << ',' << r.runs.size() << ',' << detail::fixed(r.mean) << ',' << detail::fixed(r.std)
        << ',' << detail::csv_field(r.error) << '\n';
  }
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y), sorted by x
};

/// Minimal line chart.
inline void write_svg_plot(const std::string& path, const std::string& title,
                           const std::string& xlabel, const std::string& ylabel,
                           const std::vector<Series>& series) {
  const double W = 640, H = 420, L = 70, R = 170, T = 40, B = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (std::isnan(y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 - y0 < 1e-3) y0 -= 0.01, y1 += 0.01;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0;
    const double xv = x0 + (x1 - x0) * k / 4.0;
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << detail::fixed(yv, 3) << "</text>\n"
        << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << detail::fixed(xv, 2) << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\" font-size=\"13\">"
      << xlabel << "</text>\n"
      << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 18 " << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto* c = colors[i % 6];
    out << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[i].points) {
      if (!std::isnan(y)) out << px(x) << ',' << py(y) << ' ';
    }
    out << "\"/>\n";
    for (const auto& [x, y] : series[i].points) {
      if (!std::isnan(y)) out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    }
    out << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (i + 1) << "\" font-size=\"12\" fill=\""
        << c << "\">" << series[i].name << "</text>\n";
  }
  out << "</svg>\n";
}

/// Chart series grouped from reports: (attack, defense) lines versus level,
/// and mu-sweep lines versus mu.
inline std::vector<Series> perturbation_series(const std::vector<EvalReport>& reports) {
  std::map<std::string, Series> by;
  for (const auto& r : reports) {
    if (r.mu && r.defense.find("mu=") != std::string::npos) continue;
    const auto key = r.attack_kind + " / " + r.defense;
    by[key].name = key;
    by[key].points.emplace_back(r.level, r.mean);
  }
  std::vector<Series> out;
  for (auto& [k, s] : by) {
    std::sort(s.points.begin(), s.points.end());
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Series> mu_series(const std::vector<EvalReport>& reports,
                                     const std::vector<Scenario>& scenarios) {
  std::map<std::string, Series> by;
  for (std::size_t i = 0; i < reports.size() && i < scenarios.size(); ++i) {
    if (!scenarios[i].mu_sweep) continue;
    const auto& r = reports[i];
    const auto key = r.attack_kind + "@" + detail::fixed(r.level, 2);
    by[key].name = key;
    by[key].points.emplace_back(scenarios[i].purify.mu, r.mean);
  }
  std::vector<Series> out;
  for (auto& [k, s] : by) {
    std::sort(s.points.begin(), s.points.end());
    out.push_back(std::move(s));
  }
  return out;
}

/// Evaluates every scenario over `runs` seeds. Failures are recorded per
/// report and the harness moves on.
inline std::vector<EvalReport> benchmark(const Graph& clean, const std::vector<Scenario>& grid,
                                         DenoiserParams* params, const Schedule& sched,
                                         const BenchmarkConfig& cfg) {
  std::vector<EvalReport> reports;
  for (const auto& sc : grid) {
    EvalReport r;
    r.dataset = clean.name();
    r.attack_kind = to_string(sc.attack.kind);
    r.level = sc.level;
    r.defense = sc.defended ? sc.defense : "none";
    if (sc.defended) r.mu = sc.purify.mu;
    for (int run = 0; run < cfg.runs; ++run) {
      try {
        r.runs.push_back(
            run_scenario_once(clean, sc, params, sched, cfg.gcn, run_seed(cfg.master_seed, run))
                .accuracy);
      } catch (const std::exception& e) {
        r.runs.push_back(std::numeric_limits<double>::quiet_NaN());
        if (r.error.empty()) r.error = e.what();
        log::warn("scenario " + r.scenario_id() + " run " + std::to_string(run) + ": " + e.what());
      }
    }
    r.finalize();
    reports.push_back(std::move(r));
  }
  if (!cfg.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    write_runs_csv((dir / "runs.csv").string(), reports);
    write_aggregate_csv((dir / "aggregate.csv").string(), reports);
    write_svg_plot((dir / "accuracy_vs_perturbation.svg").string(), "Accuracy vs perturbation",
                   "perturbation level", "accuracy", perturbation_series(reports));
    const auto mus = mu_series(reports, grid);
    if (!mus.empty()) {
      write_svg_plot((dir / "accuracy_vs_mu.svg").string(), "Accuracy vs graph size ratio", "mu",
                     "accuracy", mus);
    }
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Run directories

/// FNV-1a over the compact JSON dump.
inline std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str().substr(0, 10);
}

/// base/<YYYYmmdd-HHMMSS>-<hash>, created.
inline std::string make_run_dir(const std::string& base, const nlohmann::json& config) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const auto dir = std::filesystem::path(base) / (std::string(stamp) + "-" + config_hash(config));
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace gddm

#endif  // GDDM_EVALUATOR_HPP
