#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace pprgnn;
using testutil::random_dense;
using testutil::random_graph;
namespace oracle = pprgnn::oracle;

namespace {

CsrMatrix<double> edges(std::size_t n, std::vector<std::pair<Index, Index>> e) {
  return adjacency_from_edges<double>(n, e);
}

}  // namespace

TEST(Csr, RejectsNonCanonicalInput) {
  EXPECT_THROW(CsrMatrix<double>(2, 2, {0, 2, 2}, {1, 0}, {1.0, 1.0}), DimensionError);
  EXPECT_THROW(CsrMatrix<double>(2, 2, {0, 1, 1}, {2}, {1.0}), DimensionError);
  EXPECT_THROW(CsrMatrix<double>(2, 2, {0, 1}, {0}, {1.0}), DimensionError);
  EXPECT_THROW(CsrMatrix<double>(2, 2, {1, 1, 1}, {}, {}), DimensionError);
  EXPECT_THROW(CsrMatrix<double>(2, 2, {0, 2, 1}, {0, 1}, {1.0, 1.0}), DimensionError);
}

TEST(Csr, FromTripletsSumsDuplicatesAndSorts) {
  auto m = CsrMatrix<double>::from_triplets(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 2, 0.5}, {1, 0, 3.0}});
  EXPECT_EQ(m.nnz(), 3u);
  EXPECT_EQ(m.row_offsets(), (std::vector<Index>{0, 1, 3}));
  EXPECT_EQ(m.col_indices(), (std::vector<Index>{1, 0, 2}));
  EXPECT_DOUBLE_EQ(m.at(1, 2), 1.5);
  EXPECT_DOUBLE_EQ(m.at(0, 0), 0.0);
}

TEST(Csr, DenseRoundTripAndTranspose) {
  std::mt19937_64 rng(1);
  auto d = random_dense(4, 5, rng);
  d(1, 3) = 0.0;
  auto m = CsrMatrix<double>::from_dense(d);
  EXPECT_EQ(m.to_dense(), d);
  EXPECT_EQ(m.transposed().to_dense(), d.transposed());
}

TEST(Spmm, IdentityAndZero) {
  std::mt19937_64 rng(2);
  auto x = random_dense(5, 3, rng);
  EXPECT_EQ(spmm(CsrMatrix<double>::identity(5), x), x);
  EXPECT_EQ(spmm(CsrMatrix<double>::zero(5, 5), x), DenseMatrix<double>(5, 3));
  EXPECT_EQ(spmm_transpose(CsrMatrix<double>::identity(5), x), x);
}

TEST(Spmm, MatchesDenseOracle) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    auto d = random_dense(5, 5, rng);
    std::bernoulli_distribution keep(0.4);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!keep(rng)) d.data()[i] = 0.0;
    const auto m = CsrMatrix<double>::from_dense(d);
    const auto x = random_dense(5, 3, rng);
    const auto expect = oracle::mul(testutil::to_oracle(d), testutil::to_oracle(x));
    EXPECT_LE(oracle::max_abs_diff(testutil::to_oracle(spmm(m, x)), expect), 1e-12);
  }
}

TEST(Spmm, TransposeMatchesDenseOracleOnAsymmetric) {
  std::mt19937_64 rng(4);
  auto d = random_dense(4, 4, rng);
  d(0, 1) = 0.0;
  d(3, 2) = 0.0;
  const auto m = CsrMatrix<double>::from_dense(d);
  ASSERT_FALSE(m.is_symmetric());
  const auto x = random_dense(4, 2, rng);
  const auto expect = oracle::mul(oracle::transpose(testutil::to_oracle(d)), testutil::to_oracle(x));
  EXPECT_LE(oracle::max_abs_diff(testutil::to_oracle(spmm_transpose(m, x)), expect), 1e-12);
}

TEST(Spmm, TransposeEqualsForwardOnSymmetric) {
  std::mt19937_64 rng(5);
  const auto a = normalize_adjacency(random_graph(7, 0.4, rng), true);
  const auto x = random_dense(7, 3, rng);
  EXPECT_LE(max_abs_diff(spmm_transpose(a, x), spmm(a, x)), 1e-12);
}

TEST(Spmm, DimensionMismatchThrows) {
  EXPECT_THROW(spmm(CsrMatrix<double>::identity(3), DenseMatrix<double>(4, 2)), DimensionError);
  EXPECT_THROW(spmm_transpose(CsrMatrix<double>::zero(3, 4), DenseMatrix<double>(4, 2)),
               DimensionError);
}

TEST(Normalize, SingleNodeWithSelfLoop) {
  const auto a = normalize_adjacency(CsrMatrix<double>::zero(1, 1), true);
  EXPECT_DOUBLE_EQ(a.at(0, 0), 1.0);
}

TEST(Normalize, SingleEdgeNoSelfLoops) {
  const auto a = normalize_adjacency(edges(2, {{0, 1}}), false);
  EXPECT_EQ(a.at(0, 1), 1.0);
  EXPECT_EQ(a.at(1, 0), 1.0);
  EXPECT_EQ(a.nnz(), 2u);
}

TEST(Normalize, ThreeNodePath) {
  const auto a = normalize_adjacency(edges(3, {{0, 1}, {1, 2}}), false);
  EXPECT_NEAR(a.at(0, 1), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(a.at(1, 2), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Normalize, IsolatedNodeGivesZeroRow) {
  const auto a = normalize_adjacency(edges(3, {{0, 1}}), false);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(a.at(2, j), 0.0);
    EXPECT_EQ(a.at(j, 2), 0.0);
  }
  for (double v : a.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Normalize, Errors) {
  EXPECT_THROW(normalize_adjacency(CsrMatrix<double>::zero(2, 3), true), DimensionError);
  auto neg = CsrMatrix<double>::from_triplets(2, 2, {{0, 1, -1.0}, {1, 0, -1.0}});
  EXPECT_THROW(normalize_adjacency(neg, false), ValueError);
}

TEST(Normalize, PatternAndExactSymmetryOnRandomGraphs) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 30; ++rep) {
    const auto a = random_graph(3 + rep % 9, 0.3, rng, rep % 2 == 0);
    for (bool loops : {false, true}) {
      const auto n = normalize_adjacency(a, loops);
      EXPECT_TRUE(n.is_symmetric());
      std::size_t extra = 0;
      for (std::size_t i = 0; i < a.n_rows(); ++i) {
        for (std::size_t j = 0; j < a.n_cols(); ++j) {
          const bool in_a = a.at(i, j) != 0.0;
          if (i == j && loops) {
            EXPECT_GT(n.at(i, i), 0.0);
            extra += !in_a;
          } else {
            EXPECT_EQ(n.at(i, j) != 0.0, in_a);
          }
        }
      }
      EXPECT_EQ(n.nnz(), a.nnz() + extra);
    }
  }
}

// Spectral radius of D^-1/2 (A+I) D^-1/2 is at most 1 for 0/1 adjacency.
TEST(Normalize, SpectralRadiusAtMostOne) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 30; ++rep) {
    const auto n = normalize_adjacency(random_graph(2 + rep % 11, 0.4, rng), true);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(testutil::to_eigen(n.to_dense()));
    EXPECT_LE(es.eigenvalues().cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  }
}

// Row sums can exceed 1: star centre with 4 leaves, self-loops on.
TEST(Normalize, RowSumBoundFailsOnStar) {
  const auto n = normalize_adjacency(edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}), true);
  double centre = 0.0;
  for (std::size_t j = 0; j < 5; ++j) centre += std::abs(n.at(0, j));
  EXPECT_NEAR(centre, 0.2 + 4.0 / std::sqrt(10.0), 1e-12);
  EXPECT_GT(centre, 1.0);
}

TEST(Batch, SingleGraphIsIdentity) {
  std::mt19937_64 rng(8);
  Graph<double> g{random_graph(4, 0.5, rng), random_dense(4, 3, rng), 1, std::nullopt};
  const auto b = batch_graphs(std::vector<Graph<double>>{g});
  EXPECT_EQ(b.adjacency, g.adjacency);
  EXPECT_EQ(b.features, g.features);
  EXPECT_EQ(b.graph_of_node, (std::vector<std::size_t>(4, 0)));
  EXPECT_EQ(b.graph_labels, std::vector<int>{1});
  b.validate();
}

TEST(Batch, TwoEdgesBlockDiagonal) {
  Graph<double> g0{edges(2, {{0, 1}}), DenseMatrix<double>(2, 1, 1.0), 0, std::nullopt};
  Graph<double> g1{edges(2, {{0, 1}}), DenseMatrix<double>(2, 1, 2.0), 1, std::nullopt};
  const auto b = batch_graphs(std::vector<Graph<double>>{g0, g1});
  const DenseMatrix<double> expect{{0, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, 1, 0}};
  EXPECT_EQ(b.adjacency.to_dense(), expect);
  EXPECT_EQ(b.graph_of_node, (std::vector<std::size_t>{0, 0, 1, 1}));
  EXPECT_EQ(b.graph_offsets(), (std::vector<std::size_t>{0, 2, 4}));
  EXPECT_EQ(b.features(2, 0), 2.0);
  b.validate();
}

TEST(Batch, InconsistentWidthThrows) {
  Graph<double> g0{edges(2, {{0, 1}}), DenseMatrix<double>(2, 1), 0, std::nullopt};
  Graph<double> g1{edges(2, {{0, 1}}), DenseMatrix<double>(2, 2), 0, std::nullopt};
  EXPECT_THROW(batch_graphs(std::vector<Graph<double>>{g0, g1}), DimensionError);
}

TEST(Batch, ValidateCatchesCrossingEdgeAndAsymmetry) {
  Graph<double> g0{edges(2, {{0, 1}}), DenseMatrix<double>(2, 1), 0, std::nullopt};
  auto b = batch_graphs(std::vector<Graph<double>>{g0, g0});
  auto crossing = b;
  crossing.adjacency = edges(4, {{0, 1}, {2, 3}, {1, 2}});
  EXPECT_THROW(crossing.validate(), ValueError);
  auto asym = b;
  asym.adjacency = CsrMatrix<double>::from_triplets(4, 4, {{0, 1, 1.0}});
  EXPECT_THROW(asym.validate(), ValueError);
}

TEST(Batch, SpmmOnBatchEqualsPerGraphConcatenation) {
  std::mt19937_64 rng(9);
  std::vector<Graph<double>> graphs;
  for (int i = 0; i < 10; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i % 5);
    graphs.push_back({random_graph(n, 0.5, rng), random_dense(n, 3, rng), i % 2, std::nullopt});
  }
  const auto batch = batch_graphs(graphs);
  batch.validate();
  const auto a = normalize_adjacency(batch.adjacency, true);
  const auto y = spmm(a, batch.features);
  std::vector<DenseMatrix<double>> parts;
  for (const auto& g : graphs) parts.push_back(spmm(normalize_adjacency(g.adjacency, true), g.features));
  EXPECT_LE(max_abs_diff(y, vstack(std::span<const DenseMatrix<double>>(parts))), 1e-15);
}

TEST(Dense, KernelsMatchOracle) {
  std::mt19937_64 rng(10);
  const auto a = random_dense(3, 4, rng);
  const auto b = random_dense(4, 2, rng);
  const auto c = random_dense(3, 2, rng);
  const auto oa = testutil::to_oracle(a);
  EXPECT_LE(oracle::max_abs_diff(testutil::to_oracle(matmul(a, b)), oracle::mul(oa, testutil::to_oracle(b))), 1e-14);
  EXPECT_LE(oracle::max_abs_diff(testutil::to_oracle(matmul_tn(a, c)),
                                 oracle::mul(oracle::transpose(oa), testutil::to_oracle(c))),
            1e-14);
  const auto d = random_dense(5, 4, rng);
  EXPECT_LE(oracle::max_abs_diff(testutil::to_oracle(matmul_nt(a, d)),
                                 oracle::mul(oa, oracle::transpose(testutil::to_oracle(d)))),
            1e-14);
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Pagerank, SingleNodeSelfLoop) {
  const auto a = CsrMatrix<double>::identity(1);
  const auto r = pagerank_power(a, std::vector<double>{3.0}, 5);
  EXPECT_DOUBLE_EQ(r[0], 1.0);
}

TEST(Pagerank, TwoCycleStaysUniform) {
  const auto a = edges(2, {{0, 1}});
  const auto r = pagerank_power(a, std::vector<double>{0.5, 0.5}, 7);
  EXPECT_DOUBLE_EQ(r[0], 0.5);
  EXPECT_DOUBLE_EQ(r[1], 0.5);
}

TEST(Pagerank, ZeroVectorThrows) {
  EXPECT_THROW(pagerank_power(edges(2, {{0, 1}}), std::vector<double>{0.0, 0.0}, 3), ValueError);
}

// The plain 4-ring is bipartite (eigenvalue -1), so iteration from a
// non-uniform start keeps oscillating. Adding self-loops makes it aperiodic.
TEST(Pagerank, FourRingWithSelfLoopsConvergesToUniform) {
  const auto ring = edges(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  auto looped_dense = ring.to_dense();
  for (std::size_t i = 0; i < 4; ++i) looped_dense(i, i) = 1.0;
  const auto looped = CsrMatrix<double>::from_dense(looped_dense);

  Eigen::MatrixXd m = testutil::to_eigen(looped_dense) / 3.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(m);
  Eigen::Index top = 0;
  es.eigenvalues().real().maxCoeff(&top);
  Eigen::VectorXd v = es.eigenvectors().col(top).real();
  v /= v.sum();

  const auto r = pagerank_power(looped, std::vector<double>{0.7, 0.1, 0.15, 0.05}, 200);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(r[i], 0.25, 1e-8);
    EXPECT_NEAR(r[i], v(static_cast<Eigen::Index>(i)), 1e-8);
  }
}

TEST(Pagerank, PlainFourRingOscillates) {
  const auto ring = edges(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(testutil::to_eigen(ring.to_dense()) / 2.0);
  EXPECT_NEAR(es.eigenvalues().minCoeff(), -1.0, 1e-12);
  const std::vector<double> r0{0.7, 0.1, 0.15, 0.05};
  const auto even = pagerank_power(ring, r0, 200);
  const auto odd = pagerank_power(ring, r0, 201);
  EXPECT_GT(std::abs(even[0] - odd[0]), 0.1);
  EXPECT_NEAR(even[0], 0.425, 1e-12);
}
