#ifndef GDDM_GRAPH_HPP
#define GDDM_GRAPH_HPP

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gddm/error.hpp"
#include "gddm/rng.hpp"

namespace gddm {

using NodeId = std::uint32_t;

/// Undirected edge, always stored with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  Edge() = default;
  Edge(NodeId a, NodeId b) : u(std::min(a, b)), v(std::max(a, b)) {}

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Symmetric binary adjacency with zero diagonal, stored as sorted neighbor
/// lists. Semantically an n x n 0/1 matrix; storage is O(n + |E|).
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(std::size_t n) : nbrs_(n) {}

  /// Builds from an edge list; reversed and duplicate pairs collapse.
  static Adjacency from_edges(std::size_t n, std::span<const Edge> edges) {
    Adjacency a(n);
    for (const auto& e : edges) {
      if (e.u == e.v) {
        throw InvariantError("self-loop at node " + std::to_string(e.u));
      }
      if (e.v >= n) {
        throw BoundsError("node id " + std::to_string(e.v) +
                          " out of range for " + std::to_string(n) + " nodes");
      }
      a.nbrs_[e.u].push_back(e.v);
      a.nbrs_[e.v].push_back(e.u);
    }
    a.edge_count_ = 0;
    for (auto& list : a.nbrs_) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
      a.edge_count_ += list.size();
    }
    a.edge_count_ /= 2;
    return a;
  }

  std::size_t size() const noexcept { return nbrs_.size(); }
  std::size_t edge_count() const noexcept { return edge_count_; }
  std::size_t degree(NodeId i) const { return nbrs_[i].size(); }

  std::span<const NodeId> neighbors(NodeId i) const {
    return {nbrs_[i].data(), nbrs_[i].size()};
  }

  bool has_edge(NodeId i, NodeId j) const {
    if (i == j || i >= size() || j >= size()) return false;
    const auto& a = nbrs_[i].size() <= nbrs_[j].size() ? nbrs_[i] : nbrs_[j];
    const NodeId other = nbrs_[i].size() <= nbrs_[j].size() ? j : i;
    return std::binary_search(a.begin(), a.end(), other);
  }

  /// Entry (i, j) of the matrix view.
  int operator()(NodeId i, NodeId j) const { return has_edge(i, j) ? 1 : 0; }

  /// Returns false if the edge was already present.
  bool add_edge(NodeId i, NodeId j) {
    check_pair(i, j);
    if (!insert_sorted(nbrs_[i], j)) return false;
    insert_sorted(nbrs_[j], i);
    ++edge_count_;
    return true;
  }

  /// Returns false if the edge was absent.
  bool remove_edge(NodeId i, NodeId j) {
    check_pair(i, j);
    if (!erase_sorted(nbrs_[i], j)) return false;
    erase_sorted(nbrs_[j], i);
    --edge_count_;
    return true;
  }

  /// All edges with u < v in lexicographic order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count_);
    for (NodeId i = 0; i < size(); ++i) {
      for (NodeId j : nbrs_[i]) {
        if (i < j) out.emplace_back(i, j);
      }
    }
    return out;
  }

  /// Dense 0/1 matrix; intended for small graphs and tests.
  Eigen::MatrixXi dense() const {
    Eigen::MatrixXi m = Eigen::MatrixXi::Zero(size(), size());
    for (NodeId i = 0; i < size(); ++i) {
      for (NodeId j : nbrs_[i]) m(i, j) = 1;
    }
    return m;
  }

  static Adjacency from_dense(const Eigen::MatrixXi& m) {
    if (m.rows() != m.cols()) throw InvariantError("adjacency must be square");
    std::vector<Edge> edges;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (m(i, i) != 0) throw InvariantError("non-zero diagonal");
      for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
        if (m(i, j) != m(j, i)) throw InvariantError("asymmetric adjacency");
        if (m(i, j) != 0 && m(i, j) != 1) {
          throw InvariantError("non-binary adjacency entry");
        }
        if (m(i, j)) edges.emplace_back(i, j);
      }
    }
    return from_edges(m.rows(), edges);
  }

  friend bool operator==(const Adjacency& a, const Adjacency& b) {
    return a.nbrs_ == b.nbrs_;
  }

 private:
  void check_pair(NodeId i, NodeId j) const {
    if (i >= size() || j >= size()) {
      throw BoundsError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                        ") out of range");
    }
    if (i == j) throw InvariantError("self-loop at node " + std::to_string(i));
  }

  static bool insert_sorted(std::vector<NodeId>& v, NodeId x) {
    auto it = std::lower_bound(v.begin(), v.end(), x);
    if (it != v.end() && *it == x) return false;
    v.insert(it, x);
    return true;
  }

  static bool erase_sorted(std::vector<NodeId>& v, NodeId x) {
    auto it = std::lower_bound(v.begin(), v.end(), x);
    if (it == v.end() || *it != x) return false;
    v.erase(it);
    return true;
  }

  std::vector<std::vector<NodeId>> nbrs_;
  std::size_t edge_count_ = 0;
};

/// Per-node degree counts of an adjacency.
struct DegreeVector {
  std::vector<std::size_t> values;

  std::size_t size() const noexcept { return values.size(); }
  std::size_t operator[](std::size_t i) const { return values[i]; }
  friend bool operator==(const DegreeVector&, const DegreeVector&) = default;
};

inline DegreeVector degree_vector(const Adjacency& a) {
  DegreeVector d;
  d.values.resize(a.size());
  for (NodeId i = 0; i < a.size(); ++i) d.values[i] = a.degree(i);
  return d;
}

/// Adjacency plus clean node features and labels. Immutable once built.
class Graph {
 public:
  Graph() = default;

  Graph(std::string name, Adjacency adjacency, Eigen::MatrixXd features,
        std::vector<int> labels)
      : name_(std::move(name)),
        adjacency_(std::move(adjacency)),
        features_(std::move(features)),
        labels_(std::move(labels)) {
    const auto n = adjacency_.size();
    if (static_cast<std::size_t>(features_.rows()) != n) {
      throw InvariantError("feature rows (" + std::to_string(features_.rows()) +
                           ") != node count (" + std::to_string(n) + ")");
    }
    if (labels_.size() != n) {
      throw InvariantError("label count (" + std::to_string(labels_.size()) +
                           ") != node count (" + std::to_string(n) + ")");
    }
    for (int y : labels_) {
      if (y < 0) throw InvariantError("negative class id");
    }
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t size() const noexcept { return adjacency_.size(); }
  std::size_t edge_count() const noexcept { return adjacency_.edge_count(); }
  const Adjacency& adjacency() const noexcept { return adjacency_; }
  const Eigen::MatrixXd& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  int num_classes() const {
    return labels_.empty() ? 0
                           : *std::max_element(labels_.begin(), labels_.end()) + 1;
  }

  /// Same features and labels over a different structure.
  Graph with_adjacency(Adjacency adjacency, std::string name = {}) const {
    return Graph(name.empty() ? name_ : std::move(name), std::move(adjacency),
                 features_, labels_);
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.adjacency_ == b.adjacency_ && a.labels_ == b.labels_ &&
           a.features_.rows() == b.features_.rows() &&
           a.features_.cols() == b.features_.cols() &&
           a.features_ == b.features_;
  }

 private:
  std::string name_;
  Adjacency adjacency_;
  Eigen::MatrixXd features_;
  std::vector<int> labels_;
};

/// Disjoint train/val/test node masks.
class Split {
 public:
  Split() = default;
  Split(std::vector<char> train, std::vector<char> val, std::vector<char> test,
        std::uint64_t seed)
      : train_(std::move(train)),
        val_(std::move(val)),
        test_(std::move(test)),
        seed_(seed) {
    const auto n = train_.size();
    if (val_.size() != n || test_.size() != n) {
      throw InvariantError("split masks differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (train_[i] + val_[i] + test_[i] != 1) {
        throw InvariantError("split masks must partition the nodes (node " +
                             std::to_string(i) + ")");
      }
    }
  }

  std::size_t size() const noexcept { return train_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<char>& train_mask() const noexcept { return train_; }
  const std::vector<char>& val_mask() const noexcept { return val_; }
  const std::vector<char>& test_mask() const noexcept { return test_; }

  std::vector<NodeId> train() const { return indices(train_); }
  std::vector<NodeId> val() const { return indices(val_); }
  std::vector<NodeId> test() const { return indices(test_); }

  friend bool operator==(const Split& a, const Split& b) {
    return a.train_ == b.train_ && a.val_ == b.val_ && a.test_ == b.test_;
  }

 private:
  static std::vector<NodeId> indices(const std::vector<char>& mask) {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < mask.size(); ++i) {
      if (mask[i]) out.push_back(i);
    }
    return out;
  }

  std::vector<char> train_, val_, test_;
  std::uint64_t seed_ = 0;
};

/// 10% train, 10% validation, remainder test.
inline Split random_split(std::size_t n, std::uint64_t seed) {
  if (n < 10) {
    throw InvariantError("graph too small to split (" + std::to_string(n) +
                         " nodes, need >= 10)");
  }
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  Rng rng(derive_seed(seed, 0x5911ULL));
  rng.shuffle(order.begin(), order.end());
  const std::size_t n_train = n / 10;
  const std::size_t n_val = n / 10;
  std::vector<char> train(n, 0), val(n, 0), test(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_train) {
      train[order[k]] = 1;
    } else if (k < n_train + n_val) {
      val[order[k]] = 1;
    } else {
      test[order[k]] = 1;
    }
  }
  return Split(std::move(train), std::move(val), std::move(test), seed);
}

inline Split random_split(const Graph& g, std::uint64_t seed) {
  return random_split(g.size(), seed);
}

// ---------------------------------------------------------------------------
// Text IO

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Splits on whitespace, commas and parentheses.
inline std::vector<std::string_view> tokenize(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_sep = [](char c) {
    return c == ' ' || c == '\t' || c == ',' || c == '(' || c == ')' ||
           c == '\r' || c == '\n';
  };
  while (i < s.size()) {
    while (i < s.size() && is_sep(s[i])) ++i;
    const auto b = i;
    while (i < s.size() && !is_sep(s[i])) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, std::size_t line) {
  T value{};
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("cannot parse '" + std::string(tok) + "'", line);
  }
  return value;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

inline bool skip_line(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

}  // namespace detail

/// Reads "u<TAB>v" pairs. Ids are checked against `n` when n > 0.
inline std::vector<Edge> read_edge_list(std::istream& in, std::size_t n = 0) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    const auto toks = detail::tokenize(line);
    if (toks.size() != 2) {
      throw ParseError("expected two node ids", lineno);
    }
    const auto u = detail::parse_number<std::int64_t>(toks[0], lineno);
    const auto v = detail::parse_number<std::int64_t>(toks[1], lineno);
    if (u < 0 || v < 0 || (n > 0 && (static_cast<std::size_t>(u) >= n ||
                                     static_cast<std::size_t>(v) >= n))) {
      throw BoundsError("node id out of range at line " +
                        std::to_string(lineno));
    }
    if (u == v) {
      throw InvariantError("self-loop (" + std::to_string(u) + "," +
                           std::to_string(v) + ") at line " +
                           std::to_string(lineno));
    }
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }
  return edges;
}

inline std::vector<Edge> read_edge_list(const std::string& path,
                                        std::size_t n = 0) {
  auto in = detail::open_input(path);
  return read_edge_list(in, n);
}

inline Eigen::MatrixXd read_features(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    std::vector<double> row;
    for (auto tok : detail::tokenize(line)) {
      row.push_back(detail::parse_number<double>(tok, lineno));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("ragged feature row", lineno);
    }
    rows.push_back(std::move(row));
  }
  const auto d = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd x(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rows[i][j];
  }
  return x;
}

inline std::vector<int> read_labels(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    const auto toks = detail::tokenize(line);
    if (toks.size() != 1) throw ParseError("expected one class id", lineno);
    labels.push_back(detail::parse_number<int>(toks[0], lineno));
  }
  return labels;
}

/// Node count comes from the feature table.
inline Graph load_graph(const std::string& edge_path,
                        const std::string& feature_path,
                        const std::string& label_path,
                        std::string name = "graph") {
  auto features = read_features(feature_path);
  auto labels = read_labels(label_path);
  const auto n = static_cast<std::size_t>(features.rows());
  const auto edges = read_edge_list(edge_path, n);
  return Graph(std::move(name), Adjacency::from_edges(n, edges),
               std::move(features), std::move(labels));
}

inline void write_edge_list(std::ostream& out, const Adjacency& a) {
  for (const auto& e : a.edges()) out << e.u << '\t' << e.v << '\n';
}

inline void save_edge_list(const std::string& path, const Adjacency& a) {
  auto out = detail::open_output(path);
  write_edge_list(out, a);
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void save_features(const std::string& path, const Eigen::MatrixXd& x) {
  auto out = detail::open_output(path);
  char buf[32];
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x(i, j));
      if (j) out << ',';
      out.write(buf, p - buf);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void save_labels(const std::string& path, const std::vector<int>& y) {
  auto out = detail::open_output(path);
  for (int v : y) out << v << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void save_graph(const Graph& g, const std::string& edge_path,
                       const std::string& feature_path,
                       const std::string& label_path) {
  save_edge_list(edge_path, g.adjacency());
  save_features(feature_path, g.features());
  save_labels(label_path, g.labels());
}

/// Three lines: "train: ...", "val: ...", "test: ..." plus a seed line.
inline void save_split(const std::string& path, const Split& s) {
  auto out = detail::open_output(path);
  out << "seed: " << s.seed() << '\n';
  auto put = [&](const char* tag, const std::vector<NodeId>& ids) {
    out << tag << ':';
    for (auto i : ids) out << ' ' << i;
    out << '\n';
  };
  put("train", s.train());
  put("val", s.val());
  put("test", s.test());
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Split load_split(const std::string& path, std::size_t n) {
  auto in = detail::open_input(path);
  std::vector<char> masks[3] = {std::vector<char>(n, 0), std::vector<char>(n, 0),
                                std::vector<char>(n, 0)};
  std::uint64_t seed = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("missing ':'", lineno);
    const auto tag = detail::trim(std::string_view(line).substr(0, colon));
    const auto toks = detail::tokenize(std::string_view(line).substr(colon + 1));
    if (tag == "seed") {
      if (toks.size() != 1) throw ParseError("bad seed line", lineno);
      seed = detail::parse_number<std::uint64_t>(toks[0], lineno);
      continue;
    }
    int which = tag == "train" ? 0 : tag == "val" ? 1 : tag == "test" ? 2 : -1;
    if (which < 0) throw ParseError("unknown split tag", lineno);
    for (auto tok : toks) {
      const auto id = detail::parse_number<std::size_t>(tok, lineno);
      if (id >= n) throw BoundsError("split node id out of range");
      masks[which][id] = 1;
    }
  }
  return Split(std::move(masks[0]), std::move(masks[1]), std::move(masks[2]),
               seed);
}

}  // namespace gddm

#endif  // GDDM_GRAPH_HPP
