#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace pprgnn;

namespace {

ModelState<double> scalar_state(double x) {
  ModelState<double> s;
  s.head_b = {x};
  return s;
}

// Graphs whose label is the sign of the (constant) node feature.
std::vector<Graph<double>> sign_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  std::uniform_int_distribution<std::size_t> size(2, 5);
  std::vector<Graph<double>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = size(rng);
    const int label = static_cast<int>(i % 2);
    Graph<double> g;
    g.adjacency = testutil::random_graph(k, 0.5, rng);
    g.features = DenseMatrix<double>(k, 1);
    const double v = (label == 1 ? 1.0 : -1.0) * mag(rng);
    for (std::size_t r = 0; r < k; ++r) g.features(r, 0) = v;
    g.label = label;
    out.push_back(std::move(g));
  }
  return out;
}

ModelSpec tiny_spec(std::size_t input_dim) {
  ModelSpec s;
  s.n_layers = 1;
  s.hidden_dim = 4;
  s.input_dim = input_dim;
  s.n_classes = 2;
  return s;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = 8;
  c.folds = 4;
  c.lr = 0.05;
  c.seed = 3;
  return c;
}

std::string fixture(const char* name) {
  return std::string(PPRGNN_SOURCE_DIR) + "/tests/fixtures/" + name;
}

}  // namespace

TEST(Adam, ZeroGradNoDecayLeavesParams) {
  auto p = scalar_state(1.5);
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.1;
  for (int i = 0; i < 5; ++i) adam_step<double>(p, scalar_state(0.0), st, cfg);
  EXPECT_EQ(p.head_b[0], 1.5);
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, TwoStepHandComputation) {
  auto p = scalar_state(1.0);
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step<double>(p, scalar_state(0.5), st, cfg);
  EXPECT_NEAR(p.head_b[0], 0.900000002, 1e-15);
  adam_step<double>(p, scalar_state(-0.25), st, cfg);
  EXPECT_NEAR(p.head_b[0], 0.8733662987078463, 1e-14);
}

TEST(Adam, DecayShrinksTowardZeroMonotonically) {
  for (double start : {2.0, -3.0}) {
    auto p = scalar_state(start);
    AdamState<double> st;
    AdamConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.1;
    double prev = std::abs(start);
    for (int i = 0; i < 50; ++i) {
      adam_step<double>(p, scalar_state(0.0), st, cfg);
      EXPECT_LT(std::abs(p.head_b[0]), prev);
      prev = std::abs(p.head_b[0]);
    }
  }
}

TEST(Adam, RejectsNonFiniteGrads) {
  auto p = scalar_state(1.0);
  AdamState<double> st;
  EXPECT_THROW(adam_step<double>(p, scalar_state(NAN), st, AdamConfig{}), NumericalError);
}

TEST(Clip, BelowThresholdUnchanged) {
  auto g = scalar_state(3.0);
  g.head_w = DenseMatrix<double>{{4.0}};
  EXPECT_DOUBLE_EQ(clip_gradients(g, 10.0), 5.0);
  EXPECT_EQ(g.head_b[0], 3.0);
  EXPECT_EQ(g.head_w(0, 0), 4.0);
}

TEST(Clip, DoubleNormIsHalved) {
  auto g = scalar_state(6.0);
  g.head_w = DenseMatrix<double>{{8.0}};
  clip_gradients(g, 5.0);
  EXPECT_DOUBLE_EQ(g.head_b[0], 3.0);
  EXPECT_DOUBLE_EQ(g.head_w(0, 0), 4.0);
  EXPECT_NEAR(global_norm<double>(g), 5.0, 1e-12);
}

TEST(Clip, ZeroStaysZeroAndNormNeverExceeds) {
  auto z = scalar_state(0.0);
  clip_gradients(z, 1.0);
  EXPECT_EQ(z.head_b[0], 0.0);
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    ModelState<double> g;
    g.head_w = testutil::random_dense(4, 3, rng, -100.0, 100.0);
    g.head_b = {1e3, -2e3};
    const double cap = 0.5 + rep;
    clip_gradients(g, cap);
    EXPECT_LE(global_norm<double>(g), cap + 1e-9);
  }
}

TEST(Plateau, DecreasingLossKeepsRate) {
  std::vector<double> h;
  for (int i = 0; i < 40; ++i) h.push_back(1.0 / (1.0 + i));
  EXPECT_EQ(reduce_on_plateau(h, 3, 0.5, 0.01), 0.01);
}

TEST(Plateau, FlatForPatiencePlusOneEpochs) {
  const std::size_t patience = 4;
  std::vector<double> h(1 + patience, 2.0);
  EXPECT_EQ(reduce_on_plateau(h, patience, 0.5, 0.01), 0.01);
  h.push_back(2.0);
  EXPECT_DOUBLE_EQ(reduce_on_plateau(h, patience, 0.5, 0.01), 0.005);
}

TEST(Plateau, TwoPlateausTwoReductions) {
  const std::vector<double> h{1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5};
  PlateauScheduler s(0.1, 2, 0.5);
  for (std::size_t i = 0; i + 1 < h.size(); ++i) s.step(h[i]);
  EXPECT_EQ(s.reductions(), 1u);
  s.step(h.back());
  EXPECT_EQ(s.reductions(), 2u);
  EXPECT_DOUBLE_EQ(s.lr(), 0.025);
}

TEST(Plateau, SmallImprovementDoesNotCount) {
  std::vector<double> h{1.0};
  for (int i = 1; i <= 3; ++i) h.push_back(1.0 - 1e-6 * i);
  EXPECT_DOUBLE_EQ(reduce_on_plateau(h, 2, 0.5, 1.0), 0.5);
}

TEST(Folds, StratifiedAndBalanced) {
  std::vector<int> labels;
  for (int i = 0; i < 37; ++i) labels.push_back(i % 3 == 0 ? 1 : 0);
  const auto folds = stratified_folds(labels, 5, 9);
  std::set<std::size_t> seen;
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& f : folds) {
    lo = std::min(lo, f.size());
    hi = std::max(hi, f.size());
    std::size_t ones = 0;
    for (auto i : f) {
      EXPECT_TRUE(seen.insert(i).second);
      ones += labels[i] == 1;
    }
    EXPECT_GE(ones, 2u);
    EXPECT_LE(ones, 3u);
  }
  EXPECT_EQ(seen.size(), labels.size());
  EXPECT_LE(hi - lo, 1u);
  EXPECT_EQ(folds, stratified_folds(labels, 5, 9));
  EXPECT_NE(folds, stratified_folds(labels, 5, 10));
}

TEST(CrossValidation, SeparableDatasetIsPerfect) {
  const auto graphs = sign_dataset(40, 1);
  const auto report = run_cross_validation(graphs, tiny_spec(1), quick_config());
  ASSERT_EQ(report.folds.size(), 4u);
  EXPECT_DOUBLE_EQ(report.mean_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(report.std_accuracy, 0.0);
  EXPECT_GE(report.mean_effective_depth, 1.0);
}

TEST(CrossValidation, LeaveOneOutOnFourGraphs) {
  const auto ds = load_tudataset<double>(fixture("four_graphs"));
  auto cfg = quick_config();
  cfg.folds = 4;
  cfg.epochs = 3;
  const auto report = run_cross_validation(ds.graphs, tiny_spec(ds.meta.feature_dim), cfg);
  ASSERT_EQ(report.folds.size(), 4u);
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_EQ(report.folds[f].fold, f);
    EXPECT_EQ(report.folds[f].n_val, 1u);
    EXPECT_EQ(report.folds[f].history.size(), 3u);
  }
}

TEST(CrossValidation, SameSeedSameResults) {
  const auto graphs = sign_dataset(24, 2);
  auto cfg = quick_config();
  cfg.epochs = 5;
  auto strip = [](FoldReport r) {
    for (auto& f : r.folds)
      for (auto& h : f.history) h.wall_ms = 0.0;
    return to_json(r).dump();
  };
  const auto a = strip(run_cross_validation(graphs, tiny_spec(1), cfg));
  const auto b = strip(run_cross_validation(graphs, tiny_spec(1), cfg));
  const auto threaded = strip(run_cross_validation(graphs, tiny_spec(1), cfg, 3));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, threaded);
  cfg.seed = 4;
  EXPECT_NE(a, strip(run_cross_validation(graphs, tiny_spec(1), cfg)));
}

TEST(CrossValidation, MissingClassFailsLoudly) {
  auto graphs = sign_dataset(8, 3);
  for (auto& g : graphs) g.label = 0;
  graphs[0].label = 1;
  auto cfg = quick_config();
  cfg.folds = 2;
  EXPECT_THROW(run_cross_validation(graphs, tiny_spec(1), cfg), ValueError);
}

TEST(Training, SinkSeesEveryEpochAndValAccIsBest) {
  const auto graphs = sign_dataset(20, 4);
  auto [train, val] = train_test_split(graphs.size(), 0.75, 1);
  std::vector<EpochRecord> seen;
  auto cfg = quick_config();
  cfg.epochs = 7;
  const auto out = train_model<double>(graphs, train, val, tiny_spec(1), cfg, 0, 5,
                                       [&](const EpochRecord& r) { seen.push_back(r); });
  ASSERT_EQ(seen.size(), 7u);
  double best = 0.0;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    EXPECT_EQ(seen[i].epoch, i + 1);
    best = std::max(best, seen[i].val_acc);
  }
  EXPECT_EQ(out.result.best_val_acc, best);
  EXPECT_EQ(out.result.n_train, 15u);
}

TEST(Training, TrainingLossFallsOnSeparableData) {
  const auto graphs = sign_dataset(32, 6);
  std::vector<std::size_t> all(graphs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto out = train_model<double>(graphs, all, {}, tiny_spec(1), quick_config(), 0, 7);
  EXPECT_LT(out.result.history.back().train_loss, 0.5 * out.result.history.front().train_loss);
  EXPECT_DOUBLE_EQ(out.result.final_train_acc, 1.0);
}

// Logistic regression on separable points: Adam must drive the convex loss down.
TEST(Training, ConvexProbeLossDecreases) {
  std::mt19937_64 rng(8);
  auto x = testutil::random_dense(40, 2, rng);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = x(i, 0) + 0.5 * x(i, 1) > 0.0 ? 1 : 0;
  ModelState<double> p;
  p.head_w = DenseMatrix<double>(2, 2);
  p.head_b = {0.0, 0.0};
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.05;
  double prev = INFINITY;
  for (int it = 0; it < 100; ++it) {
    auto logits = matmul(x, p.head_w);
    add_row_vector(logits, std::span<const double>(p.head_b));
    const auto l = cross_entropy_loss(logits, y);
    if (it % 10 == 0) {
      EXPECT_LT(l.loss, prev);
      prev = l.loss;
    }
    ModelState<double> g;
    g.head_w = matmul_tn(x, l.d_logits);
    g.head_b = column_sums(l.d_logits);
    adam_step<double>(p, g, st, cfg);
  }
  EXPECT_LT(prev, 0.3);
}

TEST(Training, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ValueError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValueError);
  c = TrainConfig{};
  c.plateau_factor = 1.0;
  EXPECT_THROW(c.validate(), ValueError);
}

TEST(Training, PerGraphDepthsShape) {
  const auto graphs = sign_dataset(6, 9);
  auto spec = tiny_spec(1);
  spec.n_layers = 2;
  const auto state = init_model_state<double>(spec, 1);
  const auto d = per_graph_depths(spec, state, graphs, SolverOptions<double>{});
  ASSERT_EQ(d.size(), 6u);
  for (const auto& row : d) {
    ASSERT_EQ(row.size(), 2u);
    for (auto k : row) EXPECT_GE(k, 1u);
  }
}
