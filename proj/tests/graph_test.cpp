#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "gddm/graph.hpp"
#include "gddm/rng.hpp"

namespace fs = std::filesystem;
using namespace gddm;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::path(GDDM_TEST_TMP) / "graph" / name;
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

Adjacency random_adjacency(std::size_t n, double density, Rng& rng) {
  Adjacency a(n);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      if (rng.bernoulli(density)) a.add_edge(i, j);
    }
  }
  return a;
}

}  // namespace

TEST(Adjacency, FromEdgesDeduplicatesReversedPairs) {
  const std::vector<Edge> edges = {{0, 1}, {1, 0}, {2, 1}, {1, 2}, {0, 1}};
  const auto a = Adjacency::from_edges(3, edges);
  EXPECT_EQ(a.edge_count(), 2u);
  EXPECT_TRUE(a.has_edge(1, 0));
  EXPECT_TRUE(a.has_edge(1, 2));
  EXPECT_FALSE(a.has_edge(0, 2));
}

TEST(Adjacency, RejectsSelfLoopAndOutOfRange) {
  const std::vector<Edge> loop = {{1, 1}};
  EXPECT_THROW(Adjacency::from_edges(3, loop), InvariantError);
  const std::vector<Edge> far = {{0, 3}};
  EXPECT_THROW(Adjacency::from_edges(3, far), BoundsError);
  Adjacency a(2);
  EXPECT_THROW(a.add_edge(0, 0), InvariantError);
}

TEST(Adjacency, DenseRoundTripIsSymmetricWithZeroDiagonal) {
  Rng rng(3);
  const auto a = random_adjacency(12, 0.3, rng);
  const auto m = a.dense();
  EXPECT_EQ(m, m.transpose());
  EXPECT_EQ(m.diagonal().sum(), 0);
  EXPECT_EQ(Adjacency::from_dense(m), a);
  Eigen::MatrixXi bad = m;
  bad(0, 1) = 1;
  bad(1, 0) = 0;
  EXPECT_THROW(Adjacency::from_dense(bad), InvariantError);
}

TEST(DegreeVector, SpecExamples) {
  const std::vector<Edge> one = {{0, 1}};
  EXPECT_EQ(degree_vector(Adjacency::from_edges(2, one)).values,
            (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(degree_vector(Adjacency(4)).values,
            (std::vector<std::size_t>{0, 0, 0, 0}));
  const std::vector<Edge> path = {{0, 1}, {1, 2}};
  EXPECT_EQ(degree_vector(Adjacency::from_edges(3, path)).values,
            (std::vector<std::size_t>{1, 2, 1}));
}

TEST(DegreeVector, MatchesDenseRowSumsAndHandshake) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_adjacency(5 + trial, 0.25, rng);
    const auto d = degree_vector(a);
    const auto m = a.dense();
    std::size_t total = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_EQ(static_cast<int>(d[i]), m.row(static_cast<Eigen::Index>(i)).sum());
      total += d[i];
    }
    EXPECT_EQ(total, 2 * a.edge_count());
  }
}

TEST(LoadGraph, SingleEdgeGraph) {
  const auto dir = temp_dir("single");
  write_file(dir / "e.tsv", "0\t1\n");
  write_file(dir / "x.csv", "1,0,0\n0,1,0\n");
  write_file(dir / "y.txt", "0\n1\n");
  const auto g = load_graph((dir / "e.tsv").string(), (dir / "x.csv").string(),
                            (dir / "y.txt").string());
  EXPECT_EQ(g.size(), 2u);
  Eigen::MatrixXi expected(2, 2);
  expected << 0, 1, 1, 0;
  EXPECT_EQ(g.adjacency().dense(), expected);
  EXPECT_EQ(g.features().cols(), 3);
}

TEST(LoadGraph, SelfLoopIsRejected) {
  const auto dir = temp_dir("loop");
  write_file(dir / "e.tsv", "(0,0)\n");
  write_file(dir / "x.csv", "1\n2\n");
  write_file(dir / "y.txt", "0\n0\n");
  EXPECT_THROW(load_graph((dir / "e.tsv").string(), (dir / "x.csv").string(),
                          (dir / "y.txt").string()),
               InvariantError);
}

TEST(LoadGraph, MalformedLineReportsLineNumber) {
  std::istringstream in("0\t1\n# comment\n1\tx\n");
  try {
    read_edge_list(in, 4);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadGraph, OutOfRangeIdIsBoundsError) {
  std::istringstream in("0\t5\n");
  EXPECT_THROW(read_edge_list(in, 3), BoundsError);
}

TEST(LoadGraph, DirectedInputIsSymmetrized) {
  const auto dir = temp_dir("directed");
  write_file(dir / "e.tsv", "0 1\n1 0\n2,1\n");
  write_file(dir / "x.csv", "0\n0\n0\n");
  write_file(dir / "y.txt", "0\n0\n0\n");
  const auto g = load_graph((dir / "e.tsv").string(), (dir / "x.csv").string(),
                            (dir / "y.txt").string());
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_EQ(g.adjacency().dense(), g.adjacency().dense().transpose());
}

TEST(LoadGraph, SaveLoadRoundTripIsIdentical) {
  Rng rng(5);
  const std::size_t n = 30;
  Eigen::MatrixXd x(n, 4);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) x(static_cast<Eigen::Index>(i), j) = rng.normal() / 3.0;
    y[i] = static_cast<int>(i % 3);
  }
  const Graph g("rt", random_adjacency(n, 0.2, rng), x, y);
  const auto dir = temp_dir("roundtrip");
  save_graph(g, (dir / "e.tsv").string(), (dir / "x.csv").string(),
             (dir / "y.txt").string());
  const auto h = load_graph((dir / "e.tsv").string(), (dir / "x.csv").string(),
                            (dir / "y.txt").string(), "rt");
  EXPECT_EQ(g, h);
  const auto k = h.with_adjacency(h.adjacency());
  EXPECT_EQ(h, k);
}

TEST(LoadGraph, CoraStatisticsWhenAvailable) {
  const char* root = std::getenv("GDDM_DATA_ROOT");
  if (root == nullptr) GTEST_SKIP() << "GDDM_DATA_ROOT not set";
  const auto dir = fs::path(root) / "cora";
  if (!fs::exists(dir / "edges.tsv")) GTEST_SKIP() << "no cora files under " << dir;
  const auto g = load_graph((dir / "edges.tsv").string(), (dir / "features.csv").string(),
                            (dir / "labels.txt").string(), "cora");
  EXPECT_EQ(g.size(), 2708u);
  EXPECT_EQ(g.edge_count(), 5278u);
}

TEST(GraphType, RejectsMismatchedRows) {
  EXPECT_THROW(Graph("g", Adjacency(3), Eigen::MatrixXd::Zero(2, 1), {0, 0, 0}),
               InvariantError);
  EXPECT_THROW(Graph("g", Adjacency(3), Eigen::MatrixXd::Zero(3, 1), {0, 0}),
               InvariantError);
}

TEST(RandomSplit, ExactProportionsForHundredNodes) {
  const auto s = random_split(100, 0);
  EXPECT_EQ(s.train().size(), 10u);
  EXPECT_EQ(s.val().size(), 10u);
  EXPECT_EQ(s.test().size(), 80u);
}

TEST(RandomSplit, DeterministicAndSeedSensitive) {
  EXPECT_EQ(random_split(100, 7), random_split(100, 7));
  for (std::uint64_t seed = 0; seed < 20; seed += 2) {
    EXPECT_NE(random_split(100, seed).train_mask(),
              random_split(100, seed + 1).train_mask());
  }
}

TEST(RandomSplit, TooSmallThrows) {
  EXPECT_THROW(random_split(9, 0), InvariantError);
}

TEST(RandomSplit, PartitionPropertyOverRandomSizes) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 10 + rng.below(500);
    const auto s = random_split(n, rng.engine()());
    std::size_t covered = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = s.train_mask()[i] + s.val_mask()[i] + s.test_mask()[i];
      ASSERT_EQ(c, 1);
      ++covered;
    }
    EXPECT_EQ(covered, n);
    EXPECT_EQ(s.train().size(), n / 10);
    EXPECT_EQ(s.val().size(), n / 10);
    EXPECT_EQ(s.test().size(), n - 2 * (n / 10));
  }
}

TEST(RandomSplit, SaveLoadRoundTrip) {
  const auto s = random_split(57, 4);
  const auto dir = temp_dir("split");
  save_split((dir / "split.txt").string(), s);
  const auto t = load_split((dir / "split.txt").string(), 57);
  EXPECT_EQ(s, t);
  EXPECT_EQ(t.seed(), 4u);
}
