#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

#include <gtest/gtest.h>

#include "gddm/trainer.hpp"

namespace fs = std::filesystem;
using namespace gddm;

namespace {

DenoiserConfig tiny_config() {
  DenoiserConfig c;
  c.layers = 1;
  c.embed_dim = 2;
  c.hidden_dim = 2;
  c.heads = 1;
  c.max_degree = 4;
  return c;
}

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.layers = 2;
  c.embed_dim = 16;
  c.hidden_dim = 32;
  c.heads = 2;
  c.max_degree = 32;
  return c;
}

Adjacency random_graph(std::size_t n, double density, Rng& rng) {
  Adjacency a(n);
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (rng.bernoulli(density)) a.add_edge(i, j);
  return a;
}

/// Two equal blocks; dense inside, sparse across.
Adjacency two_blocks(std::size_t n, double p_in, double p_out, Rng& rng) {
  Adjacency a(n);
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (rng.bernoulli((i < n / 2) == (j < n / 2) ? p_in : p_out)) a.add_edge(i, j);
  return a;
}

Graph as_graph(const Adjacency& a) {
  return Graph("g", a, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.size()), 1),
               std::vector<int>(a.size(), 0));
}

TrainingBatch nonempty_batch(const Adjacency& a0, const Schedule& s, std::size_t cap,
                             std::uint64_t seed) {
  for (std::uint64_t k = 0;; ++k) {
    Rng rng(seed + k);
    auto b = sample_training_batch(a0, s, 4.0, cap, rng);
    if (b.positives > 0) return b;
  }
}

double flat_grad_norm(const DenoiserParams& p) {
  double s = 0.0;
  for (const auto& x : p.params()) s += x.grad.squaredNorm();
  return std::sqrt(s);
}

}  // namespace

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c;
  c.steps = 17;
  c.adam.lr = 0.01;
  nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(back.steps, 17);
  EXPECT_EQ(back.adam.lr, 0.01);
  c.adam.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.T = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainingBatch, CandidatesContainEveryRemovedEdge) {
  Rng g(1);
  const auto a0 = random_graph(25, 0.3, g);
  const auto s = build_schedule(16);
  for (std::size_t cap : {std::size_t{3}, std::size_t{20}, std::size_t{20000}}) {
    for (int rep = 0; rep < 20; ++rep) {
      Rng rng(100 + rep);
      const auto b = sample_training_batch(a0, s, 4.0, cap, rng);
      std::size_t removed = 0;
      for (const auto& e : b.a_prev.edges()) removed += !b.a_t.has_edge(e.u, e.v);
      EXPECT_EQ(b.positives, removed);
      std::size_t pos = 0;
      for (std::size_t k = 0; k < b.pairs.size(); ++k) {
        const auto& e = b.pairs[k];
        EXPECT_TRUE(b.s[e.u] && b.s[e.v]);
        EXPECT_EQ(b.labels[k], b.a_prev.has_edge(e.u, e.v) ? 1 : 0);
        EXPECT_FALSE(b.a_t.has_edge(e.u, e.v));
        pos += b.labels[k];
      }
      EXPECT_EQ(pos, removed);
      EXPECT_LE(b.pairs.size(), std::max(cap, removed));
      EXPECT_EQ(b.s, compute_state_vector(b.a_prev, b.a_t));
    }
  }
}

TEST(TrainingStep, VacuousDrawLeavesParametersUnchanged) {
  auto params = DenoiserParams::init(tiny_config(), 1);
  const auto before = params;
  const Adjacency empty(6);
  TrainConfig cfg;
  cfg.T = 8;
  Trainer trainer(empty, params, cfg);
  const auto loss = trainer.step(0);
  EXPECT_EQ(loss.candidates, 0u);
  EXPECT_EQ(loss.total, 0.0);
  EXPECT_EQ(params, before);
}

TEST(TrainingStep, GradientMatchesCentralDifferences) {
  auto cfg = tiny_config();
  auto params = DenoiserParams::init(cfg, 2);
  ASSERT_LE(params.scalar_count(), 200);
  const std::vector<Edge> e = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}};
  const auto a0 = Adjacency::from_edges(5, e);
  const auto sched = build_schedule(8);
  const auto batch = nonempty_batch(a0, sched, 1000, 3);
  params.zero_grad();
  batch_loss(batch, params);
  const double h = 1e-6;
  double worst = 0.0;
  for (auto& p : params.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.data()[i];
      p.value.data()[i] = keep + h;
      const double up = batch_loss(batch, params, false).total;
      p.value.data()[i] = keep - h;
      const double down = batch_loss(batch, params, false).total;
      p.value.data()[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = p.grad.data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(TrainingStep, PriorConstantDoesNotChangeGradients) {
  auto params = DenoiserParams::init(tiny_config(), 4);
  Rng g(4);
  const auto a0 = random_graph(8, 0.4, g);
  const auto sched = build_schedule(8);
  const auto batch = nonempty_batch(a0, sched, 1000, 5);
  const double prior = prior_kl(a0, sched);
  EXPECT_GT(prior, 0.0);
  params.zero_grad();
  const auto plain = batch_loss(batch, params, true, 0.0);
  std::vector<ad::Matrix> g0;
  for (const auto& p : params.params()) g0.push_back(p.grad);
  params.zero_grad();
  const auto with = batch_loss(batch, params, true, prior);
  for (std::size_t k = 0; k < g0.size(); ++k) EXPECT_EQ(params.params()[k].grad, g0[k]);
  EXPECT_NEAR(with.total - plain.total, prior, 1e-12);
  EXPECT_EQ(with.pair_nll, plain.pair_nll);
  EXPECT_GE(with.total, 0.0);
}

TEST(TrainingStep, LossInvariantUnderRelabeling) {
  auto params = DenoiserParams::init(small_config(), 6);
  Rng g(6);
  const std::size_t n = 18;
  const auto a0 = random_graph(n, 0.3, g);
  const auto sched = build_schedule(16);
  const auto b = nonempty_batch(a0, sched, 20000, 7);
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  g.shuffle(perm.begin(), perm.end());
  auto relabel = [&](const Adjacency& a) {
    Adjacency out(n);
    for (const auto& e : a.edges()) out.add_edge(perm[e.u], perm[e.v]);
    return out;
  };
  TrainingBatch pb;
  pb.t = b.t;
  pb.a_prev = relabel(b.a_prev);
  pb.a_t = relabel(b.a_t);
  pb.d0.values.resize(n);
  pb.s.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    pb.d0.values[perm[i]] = b.d0[i];
    pb.s.values[perm[i]] = b.s.values[i];
  }
  for (std::size_t k = 0; k < b.pairs.size(); ++k) {
    pb.pairs.emplace_back(perm[b.pairs[k].u], perm[b.pairs[k].v]);
    pb.labels.push_back(b.labels[k]);
  }
  pb.positives = b.positives;
  const double x = batch_loss(b, params, false).total;
  const double y = batch_loss(pb, params, false).total;
  EXPECT_NEAR(x, y, 1e-12);
}

TEST(TrainingStep, ProgressOnFixedGraph) {
  Rng g(8);
  const auto a0 = random_graph(20, 0.25, g);
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.T = 16;
  cfg.seed = 8;
  cfg.adam.lr = 3e-3;
  const auto r = train(as_graph(a0), small_config(), cfg);
  ASSERT_EQ(r.curve.size(), 200u);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    first += r.curve[static_cast<std::size_t>(i)].loss;
    last += r.curve[static_cast<std::size_t>(150 + i)].loss;
  }
  EXPECT_LT(last / 50, first / 50);
  for (const auto& row : r.curve) {
    EXPECT_TRUE(std::isfinite(row.loss));
    EXPECT_GE(row.loss, 0.0);
    EXPECT_GE(row.t, 1);
    EXPECT_LE(row.t, 16);
  }
}

TEST(Train, ZeroStepsReturnsInitialization) {
  Rng g(9);
  TrainConfig cfg;
  cfg.steps = 0;
  cfg.seed = 9;
  const auto r = train(as_graph(random_graph(10, 0.3, g)), small_config(), cfg);
  EXPECT_EQ(r.params, DenoiserParams::init(small_config(), 9));
  EXPECT_TRUE(r.curve.empty());
}

TEST(Train, DeterministicWithBitwiseIdenticalCheckpoints) {
  Rng g(10);
  const auto graph = as_graph(random_graph(15, 0.3, g));
  const auto dir = fs::path(GDDM_TEST_TMP) / "trainer";
  fs::remove_all(dir);
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.T = 8;
  cfg.seed = 10;
  cfg.checkpoint_every = 15;
  cfg.checkpoint_dir = (dir / "a").string();
  const auto ra = train(graph, small_config(), cfg);
  cfg.checkpoint_dir = (dir / "b").string();
  const auto rb = train(graph, small_config(), cfg);
  EXPECT_EQ(ra.params, rb.params);
  ASSERT_EQ(ra.checkpoints.size(), 2u);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir / "a" / "step_30.ckpt"), slurp(dir / "b" / "step_30.ckpt"));
  EXPECT_EQ(load_checkpoint(ra.checkpoints.back()).params, ra.params);

  cfg.checkpoint_dir = (dir / "missing" / "deeper").string();
  EXPECT_THROW(train(graph, small_config(), cfg), IoError);
}

TEST(Train, TrainedModelHasHigherHeldOutLikelihoodOnTwoBlockGraph) {
  Rng g(11);
  const std::size_t n = 50;
  const auto a0 = two_blocks(n, 0.3, 0.02, g);
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.T = 16;
  cfg.seed = 11;
  cfg.adam.lr = 2e-3;
  auto trained = train(as_graph(a0), small_config(), cfg).params;
  auto untrained = DenoiserParams::init(small_config(), 11);
  const auto sched = build_schedule(cfg.T);

  // Held-out draws use a seed family disjoint from the training substreams.
  double ll_trained = 0.0, ll_untrained = 0.0;
  std::size_t pairs = 0;
  for (int rep = 0; rep < 200; ++rep) {
    Rng rng(derive_seed(0xfeed, static_cast<std::uint64_t>(rep)));
    const auto b = sample_training_batch(a0, sched, 4.0, 20000, rng);
    if (b.pairs.empty()) continue;
    ll_trained -= batch_loss(b, trained, false).pair_nll * static_cast<double>(b.pairs.size());
    ll_untrained -= batch_loss(b, untrained, false).pair_nll * static_cast<double>(b.pairs.size());
    pairs += b.pairs.size();
  }
  ASSERT_GT(pairs, 1000u);
  EXPECT_GT(ll_trained / pairs, ll_untrained / pairs);
}

TEST(TrainCurve, CsvHasHeaderAndRows) {
  const auto dir = fs::path(GDDM_TEST_TMP) / "trainer_csv";
  fs::create_directories(dir);
  const auto path = (dir / "curve.csv").string();
  write_train_curve(path, {{0, 3, 0.5, 10}, {1, 2, 0.25, 4}});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,t,loss,candidates");
  std::getline(in, line);
  EXPECT_EQ(line, "0,3,0.5,10");
}

TEST(TrainingStep, FreeFunctionMatchesTrainerStep) {
  Rng g(12);
  const auto a0 = random_graph(12, 0.3, g);
  TrainConfig cfg;
  cfg.T = 8;
  cfg.seed = 12;
  auto p1 = DenoiserParams::init(small_config(), 1);
  auto p2 = p1;
  Trainer trainer(a0, p1, cfg);
  const auto sched = build_schedule(cfg.T);
  ad::Adam adam(p2.pointers(), cfg.adam);
  for (long step = 0; step < 5; ++step) {
    const auto x = trainer.step(step);
    Rng rng = Rng(cfg.seed).substream(static_cast<std::uint64_t>(step));
    const auto y = training_step(a0, p2, sched, cfg, adam, rng);
    EXPECT_EQ(x.total, y.total);
  }
  EXPECT_EQ(p1, p2);
  EXPECT_GT(flat_grad_norm(p1), 0.0);
}
