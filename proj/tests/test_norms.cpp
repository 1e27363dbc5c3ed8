#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "icg/norms.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace icg {
namespace {

using testing::full_pair_enumeration;
using testing::subset_signal_oracle;

Matrix random_matrix(Index n, Index m, std::uint64_t seed) {
  Rng rng = make_rng(seed, 3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix b(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) b(i, j) = u(rng);
  }
  return b;
}

double subset_sum(const Matrix& b, const CutNormEstimate& est) {
  double sum = 0.0;
  for (Index i : est.subset_u) {
    for (Index j : est.subset_v) sum += b(i, j);
  }
  return std::abs(sum);
}

TEST(Frobenius, MatrixExamples) {
  EXPECT_NEAR(frob_matrix(Matrix(Matrix::Identity(2, 2))), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(frob_matrix(Matrix(Matrix::Ones(3, 3))), 1.0, 1e-15);
  const Matrix b = random_matrix(50, 50, 1);
  double sum = 0.0;
  for (Index i = 0; i < 50; ++i) {
    for (Index j = 0; j < 50; ++j) sum += b(i, j) * b(i, j);
  }
  EXPECT_NEAR(frob_matrix(b), std::sqrt(sum) / 50.0, 1e-12);
  const CsrMatrix sparse = b.sparseView();
  EXPECT_NEAR(frob_matrix(sparse), frob_matrix(b), 1e-12);
}

TEST(Frobenius, SignalExamples) {
  EXPECT_NEAR(frob_signal(Matrix::Ones(7, 3)), std::sqrt(3.0), 1e-14);
  EXPECT_EQ(frob_signal(Matrix::Zero(5, 2)), 0.0);
  const Matrix s = random_matrix(20, 3, 2);
  double sum = 0.0;
  for (Index i = 0; i < 20; ++i) {
    for (Index j = 0; j < 3; ++j) sum += s(i, j) * s(i, j);
  }
  EXPECT_NEAR(frob_signal(s), std::sqrt(sum / 20.0), 1e-12);
}

TEST(Frobenius, PairWeights) {
  const Matrix b = random_matrix(10, 10, 3);
  const Matrix s = random_matrix(10, 2, 4);
  const double e = 37.0;
  EXPECT_NEAR(frob_pair(b, s, NormWeights::make(1.0, 0.0), e), std::sqrt(100.0 / e) * frob_matrix(b),
              1e-12);
  EXPECT_NEAR(frob_pair(b, s, NormWeights::make(0.0, 1.0), e), frob_signal(s), 1e-12);
  const double direct = std::sqrt(0.5 * 100.0 / e * b.squaredNorm() / 100.0 + 0.5 * s.squaredNorm() / 10.0);
  EXPECT_NEAR(frob_pair(b, s, NormWeights::make(0.5, 0.5), e), direct, 1e-12);
  EXPECT_THROW(frob_pair(b, s, NormWeights::make(0.5, 0.5), 0.0), std::invalid_argument);
  EXPECT_THROW(NormWeights::make(0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(NormWeights::make(0.7, 0.7), std::invalid_argument);
  EXPECT_THROW(NormWeights::make(-0.5, 1.5), std::invalid_argument);
}

TEST(CutNormExact, SmallExamples) {
  const CutNormEstimate ones = cut_norm_exact(Matrix::Ones(2, 2), 4.0);
  EXPECT_DOUBLE_EQ(ones.value, 1.0);
  EXPECT_EQ(ones.subset_u.size(), 2u);
  EXPECT_EQ(ones.subset_v.size(), 2u);
  EXPECT_EQ(ones.method, CutMethod::exact);

  EXPECT_EQ(cut_norm_exact(Matrix::Zero(4, 4), 1.0).value, 0.0);

  Matrix b(2, 2);
  b << 1, -1, -1, 1;
  const CutNormEstimate est = cut_norm_exact(b, 1.0);
  EXPECT_DOUBLE_EQ(est.value, 1.0);
  EXPECT_DOUBLE_EQ(subset_sum(b, est), 1.0);

  EXPECT_THROW(cut_norm_exact(Matrix::Zero(25, 25), 1.0), std::invalid_argument);
  EXPECT_THROW(cut_norm_exact(Matrix::Zero(3, 3), 0.0), std::invalid_argument);
}

TEST(CutNormExact, MatchesFullPairEnumeration) {
  for (Index n = 1; n <= 8; ++n) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Matrix b = random_matrix(n, n, 100 * n + seed);
      const double e = 3.0;
      EXPECT_NEAR(cut_norm_exact(b, e).value, full_pair_enumeration(b, e), 1e-12) << "n=" << n;
    }
  }
}

TEST(CutNormExact, Invariants) {
  Rng rng = make_rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + trial % 10;
    const Matrix b = random_matrix(n, n, 500 + trial);
    const double e = 1.0 + trial;
    const CutNormEstimate est = cut_norm_exact(b, e);
    EXPECT_NEAR(est.value, subset_sum(b, est) / e, 1e-12);
    const double nn = static_cast<double>(n * n);
    EXPECT_LE(est.value, nn / e * frob_matrix(b) + 1e-12);
    EXPECT_NEAR(cut_norm_exact(-2.5 * b, e).value, 2.5 * est.value, 1e-12);

    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix pb(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) pb(i, j) = b(perm[i], perm[j]);
    }
    EXPECT_NEAR(cut_norm_exact(pb, e).value, est.value, 1e-12);

    HeuristicOptions options;
    options.restarts = 8;
    options.seed = trial;
    EXPECT_LE(cut_norm_heuristic(b, e, options).value, est.value + 1e-12);
  }
}

TEST(CutNormHeuristic, CloseToExactOnRandomMatrices) {
  HeuristicOptions options;
  options.restarts = 32;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix b = random_matrix(12, 12, 900 + seed);
    options.seed = seed;
    const CutNormEstimate h = cut_norm_heuristic(b, 1.0, options);
    EXPECT_GE(h.value, 0.9 * cut_norm_exact(b, 1.0).value);
    EXPECT_NEAR(h.value, subset_sum(b, h), 1e-12);
    EXPECT_EQ(h.restarts_used, 32);
    EXPECT_EQ(h.method, CutMethod::heuristic);
  }
}

TEST(CutNormHeuristic, ZeroResidualOfExactIcg) {
  const Icg icg = testing::random_icg(30, 3, 0, 4);
  Icg scaled = icg;
  scaled.r = icg.r.cwiseAbs() / (icg.r.cwiseAbs().sum() + 1.0);
  Matrix c = icg_edge_block(scaled, {0, 30}, {0, 30});
  c = 0.5 * (c + c.transpose()).eval();
  const GraphSignal g = GraphSignal::from_dense(c, Matrix(), true);
  EXPECT_LE(cut_norm_heuristic(g, scaled, static_cast<double>(g.nnz())).value, 1e-10);
}

TEST(CutNormHeuristic, RankOneResidual) {
  const Index n = 40;
  Vector u = Vector::Zero(n);
  Vector v = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    if (i % 3 == 0) u(i) = 0.1 + 0.01 * i;
    if (i % 4 != 1) v(i) = 0.2 + 0.005 * i;
  }
  const Matrix b = u * v.transpose();
  const double e = static_cast<double>(n * n);
  const CutNormEstimate est = cut_norm_heuristic(b, e);
  EXPECT_NEAR(est.value, u.sum() * v.sum() / e, 1e-12);
  EXPECT_EQ(est.subset_u.size(), static_cast<std::size_t>((u.array() > 0).count()));
  EXPECT_EQ(est.subset_v.size(), static_cast<std::size_t>((v.array() > 0).count()));
}

TEST(CutNormHeuristic, ImplicitResidualMatchesDense) {
  const GraphSignal g = testing::random_graph_signal(18, 0, 0.3, true, 12);
  const Icg icg = testing::random_icg(18, 4, 0, 13);
  const Matrix q = materialize_q(icg);
  const Matrix dense = testing::dense_adjacency(g) - q * icg.r.asDiagonal() * q.transpose();
  HeuristicOptions options;
  options.seed = 5;
  const CutNormEstimate implicit = cut_norm_heuristic(g, icg, 7.0, options);
  const CutNormEstimate explicit_est = cut_norm_heuristic(dense, 7.0, options);
  EXPECT_NEAR(implicit.value, explicit_est.value, 1e-12);
  EXPECT_LE(implicit.value, cut_norm_exact(dense, 7.0).value + 1e-12);
}

TEST(CutNormSignal, Examples) {
  Matrix z(3, 1);
  z << 1, -2, 3;
  EXPECT_NEAR(cut_norm_signal(z), 4.0 / 3.0, 1e-15);
  Matrix pos(4, 2);
  pos << 1, 0.5, 2, 0.5, 3, 0.5, 4, 0.5;
  EXPECT_NEAR(cut_norm_signal(pos), (10.0 / 4.0 + 0.5) / 2.0, 1e-15);
  EXPECT_EQ(cut_norm_signal(Matrix::Zero(5, 2)), 0.0);
  EXPECT_THROW(cut_norm_signal(Matrix(3, 0)), std::invalid_argument);
}

TEST(CutNormSignal, MatchesSubsetEnumeration) {
  for (Index n = 1; n <= 12; ++n) {
    const Matrix z = random_matrix(n, 3, 40 + n);
    EXPECT_NEAR(cut_norm_signal(z), subset_signal_oracle(z), 1e-12);
    EXPECT_NEAR(cut_norm_signal(-3.0 * z), 3.0 * cut_norm_signal(z), 1e-12);
  }
}

TEST(CutMetricPair, Combination) {
  const Matrix b = random_matrix(6, 6, 70);
  const Matrix z = random_matrix(6, 2, 71);
  EXPECT_EQ(cut_metric_pair(Matrix::Zero(6, 6), Matrix::Zero(6, 2), NormWeights::make(0.5, 0.5), 3.0),
            0.0);
  EXPECT_NEAR(cut_metric_pair(b, z, NormWeights::make(1.0, 0.0), 3.0), cut_norm_exact(b, 3.0).value,
              1e-12);
  const double independent = 0.3 * full_pair_enumeration(b, 3.0) + 0.7 * subset_signal_oracle(z);
  EXPECT_NEAR(cut_metric_pair(b, z, NormWeights::make(0.3, 0.7), 3.0), independent, 1e-12);
}

TEST(CutNormEstimate, Json) {
  const nlohmann::json j = cut_norm_exact(Matrix::Ones(2, 2), 4.0);
  EXPECT_EQ(j["method"], "exact");
  EXPECT_EQ(j["size_u"], 2);
  EXPECT_DOUBLE_EQ(j["normalizer"].get<double>(), 4.0);
}

}  // namespace
}  // namespace icg
