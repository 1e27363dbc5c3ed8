#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "icg/sgd.hpp"
#include "test_util.hpp"

namespace icg {
namespace {

using testing::random_graph_signal;
using testing::random_icg;
using testing::rel_err;

TEST(SubgraphLoss, IdentitySampleEqualsFullLoss) {
  const GraphSignal g = random_graph_signal(50, 3, 0.3, true, 1);
  const Icg icg = random_icg(50, 4, 3, 2);
  EXPECT_EQ(subgraph_loss(g, icg, identity_sample(50), 0.8).total, loss_efficient(g, icg, 0.8).total);
}

TEST(SubgraphLoss, MatchesDenseOracle) {
  const GraphSignal g = random_graph_signal(80, 2, 0.3, false, 3);
  const Icg icg = random_icg(80, 5, 2, 4);
  const NodeSample sample = draw_node_sample(80, 30, 5);
  const Matrix a = testing::dense_adjacency(g);
  Matrix sub_a(30, 30);
  Matrix sub_s(30, 2);
  Icg sub = icg;
  sub.logits.resize(30, 5);
  for (Index i = 0; i < 30; ++i) {
    for (Index j = 0; j < 30; ++j) sub_a(i, j) = a(sample.indices[i], sample.indices[j]);
    sub_s.row(i) = g.signal().row(sample.indices[i]);
    sub.logits.row(i) = icg.logits.row(sample.indices[i]);
  }
  EXPECT_LE(rel_err(subgraph_loss(g, icg, sample, 1.3).total, testing::dense_loss(sub_a, sub_s, sub, 1.3)),
            1e-10);
}

TEST(SubgraphLoss, ZeroResidual) {
  Icg icg = random_icg(30, 3, 0, 6);
  icg.r = icg.r.cwiseAbs() / (icg.r.cwiseAbs().sum() + 1.0);
  const Matrix q = materialize_q(icg);
  Matrix c = q * icg.r.asDiagonal() * q.transpose();
  c = 0.5 * (c + c.transpose()).eval();
  const GraphSignal g = GraphSignal::from_dense(c, Matrix(), true);
  NodeSample sample{{3, 7, 7, 12, 29}, 0};
  EXPECT_LE(std::abs(subgraph_loss(g, icg, sample, 1.0).total), 1e-18);
  const IcgGradients grads = subgraph_grads(g, icg, sample, 1.0);
  EXPECT_LE(grads.logits.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(grads.r.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SubgraphGrads, IdentitySampleEqualsFullGradients) {
  const GraphSignal g = random_graph_signal(40, 2, 0.3, true, 7);
  const Icg icg = random_icg(40, 4, 2, 8);
  const IcgGradients full = grad_all(g, icg, 0.9);
  const IcgGradients sub = subgraph_grads(g, icg, identity_sample(40), 0.9);
  EXPECT_EQ(full.logits, sub.logits);
  EXPECT_EQ(full.r, sub.r);
  EXPECT_EQ(full.f, sub.f);
}

TEST(SubgraphGrads, MatchFiniteDifferencesAndZeroOutside) {
  const GraphSignal g = random_graph_signal(60, 2, 0.3, true, 9);
  const Icg icg = random_icg(60, 4, 2, 10);
  NodeSample sample = draw_node_sample(60, 25, 11);
  sample.indices[1] = sample.indices[0];
  const double lambda = 0.6;
  const IcgGradients grads = subgraph_grads(g, icg, sample, lambda);
  const std::set<Index> drawn(sample.indices.begin(), sample.indices.end());
  const double h = 1e-5;
  const auto loss = [&](const Icg& x) { return subgraph_loss(g, x, sample, lambda).total; };
  const auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-4 * std::max(std::abs(a), std::abs(b)) + 1e-11;
  };
  for (Index i = 0; i < 60; ++i) {
    for (Index k = 0; k < 4; ++k) {
      if (!drawn.count(i)) {
        EXPECT_EQ(grads.logits(i, k), 0.0);
        continue;
      }
      Icg plus = icg;
      Icg minus = icg;
      plus.logits(i, k) += h;
      minus.logits(i, k) -= h;
      const double fd = (loss(plus) - loss(minus)) / (2 * h);
      EXPECT_TRUE(close(grads.logits(i, k), fd)) << i << "," << k << ": " << grads.logits(i, k) << " vs " << fd;
    }
  }
  for (Index k = 0; k < 4; ++k) {
    Icg plus = icg;
    Icg minus = icg;
    plus.r(k) += h;
    minus.r(k) -= h;
    EXPECT_TRUE(close(grads.r(k), (loss(plus) - loss(minus)) / (2 * h)));
    for (Index d = 0; d < 2; ++d) {
      Icg fp = icg;
      Icg fm = icg;
      fp.f(k, d) += h;
      fm.f(k, d) -= h;
      EXPECT_TRUE(close(grads.f(k, d), (loss(fp) - loss(fm)) / (2 * h)));
    }
  }
}

TEST(SgdStep, IdentitySampleMatchesFullGradientStep) {
  const GraphSignal g = random_graph_signal(40, 2, 0.3, true, 12);
  const Icg init = random_icg(40, 4, 2, 13);
  FitConfig fit_config;
  fit_config.k = 4;
  fit_config.lambda = 0.0;
  fit_config.lr = 0.01;
  fit_config.epochs = 1;
  fit_config.optimizer = Optimizer::gd;
  const Icg full_step = fit_from(g, fit_config, init).first;

  SgdConfig config;
  config.m = 40;
  config.lr = 0.01;
  config.lambda = 0.0;
  config.optimizer = Optimizer::gd;
  Icg icg = init;
  SgdState state;
  sgd_step(g, icg, identity_sample(40), config, state);
  EXPECT_EQ(icg.logits, full_step.logits);
  EXPECT_EQ(icg.r, full_step.r);
  EXPECT_EQ(icg.f, full_step.f);
}

TEST(SgdStep, UnsampledRowsUntouched) {
  const GraphSignal g = random_graph_signal(50, 2, 0.3, false, 14);
  const Icg init = random_icg(50, 3, 2, 15);
  const NodeSample sample = draw_node_sample(50, 10, 16);
  const std::set<Index> drawn(sample.indices.begin(), sample.indices.end());
  for (Optimizer opt : {Optimizer::gd, Optimizer::adam}) {
    SgdConfig config;
    config.m = 10;
    config.optimizer = opt;
    Icg icg = init;
    SgdState state;
    sgd_step(g, icg, sample, config, state);
    for (Index i = 0; i < 50; ++i) {
      if (drawn.count(i)) {
        EXPECT_NE(icg.logits.row(i), init.logits.row(i));
      } else {
        EXPECT_EQ(icg.logits.row(i), init.logits.row(i));
      }
    }
  }
}

TEST(SgdFit, ZeroStepsReturnsInit) {
  const GraphSignal g = random_graph_signal(30, 1, 0.3, false, 17);
  const Icg init = random_icg(30, 3, 1, 18);
  SgdConfig config;
  config.m = 10;
  config.steps = 0;
  const auto [icg, report] = sgd_fit(g, config, init);
  EXPECT_EQ(icg.logits, init.logits);
  EXPECT_EQ(icg.r, init.r);
  EXPECT_TRUE(report.total_loss.empty());
}

GraphSignal planted_graph(Index n, std::uint64_t seed) {
  Icg planted = random_icg(n, 4, 0, seed, 3.0);
  planted.r = Vector::Constant(4, 0.22);
  planted.r(3) = -0.1;
  const Matrix q = materialize_q(planted);
  Matrix c = (q * planted.r.asDiagonal() * q.transpose()).cwiseMax(0.0).cwiseMin(1.0);
  c = 0.5 * (c + c.transpose()).eval();
  c.diagonal().setZero();
  return GraphSignal::from_dense(c, Matrix());
}

TEST(SgdFit, FullSizeSamplesTrackFullFit) {
  const GraphSignal g = planted_graph(300, 21);
  const Icg init = init_random(g, 12, 3);
  FitConfig fit_config;
  fit_config.k = 12;
  fit_config.lambda = 0.0;
  fit_config.lr = 0.05;
  fit_config.epochs = 400;
  const double full = fit_from(g, fit_config, init).second.final.graph;

  SgdConfig config;
  config.m = 300;
  config.steps = 400;
  config.lr = 0.05;
  config.lambda = 0.0;
  config.eval_every = 100;
  const auto [icg, report] = sgd_fit(g, config, init);
  EXPECT_EQ(report.total_loss.size(), 4u);
  EXPECT_LE(report.final.graph, 2.0 * full);
}

TEST(SgdFit, SmallSamplesReduceFullLoss) {
  const GraphSignal g = planted_graph(600, 22);
  const Icg init = init_random(g, 12, 4);
  SgdConfig config;
  config.m = 60;
  config.steps = 4000;
  config.lr = 0.01;
  config.lambda = 0.0;
  config.eval_every = 1000;
  const auto [icg, report] = sgd_fit(g, config, init);
  EXPECT_LE(report.final.graph, 0.2 * report.initial.graph);
}

TEST(GradStudy, BoundFormulas) {
  const double p = 0.1;
  const double expected_r =
      4.0 * std::sqrt((2 * std::log(3.0 * 6 / p) + 2 * std::log(1000.0) + 2 * std::log(6.0) + 2 * std::log(2.0)) / 25.0);
  EXPECT_NEAR(grad_bound_r(1000, 6, 25, p), expected_r, 1e-12);
  EXPECT_NEAR(grad_bound_q(1000, 6, 25, p), expected_r / 1000.0, 1e-12);
  const double expected_f =
      4.0 * 0.5 * std::sqrt((2 * std::log(3.0 * 6 * 4 / p) + 2 * std::log(6.0) + 2 * std::log(4.0) + 2 * std::log(2.0)) / 25.0);
  EXPECT_NEAR(grad_bound_f(6, 4, 25, p, 0.5), expected_f, 1e-12);
  EXPECT_LT(grad_bound_r(1000, 6, 100, p), grad_bound_r(1000, 6, 25, p));
}

TEST(GradStudy, SmallInstancePassesAndClamps) {
  const GraphSignal g = random_graph_signal(200, 3, 0.3, false, 23);
  Icg icg = random_icg(200, 4, 3, 24);
  const GradErrorReport report = grad_error_study(g, icg, {20, 80}, 40, 0.1, 7, 1.0);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_FALSE(report.warnings.empty());
  EXPECT_TRUE(report.all_pass());
  for (const GradErrorRow& row : report.rows) {
    EXPECT_GE(row.r.quantile, row.r.median);
    EXPECT_GT(row.q.quantile, 0.0);
  }
  EXPECT_TRUE(report.slope_defined);
  EXPECT_LT(report.slope_r, 0.0);
  const nlohmann::json j = to_json(report);
  EXPECT_EQ(j["rows"].size(), 2u);
  EXPECT_THROW(grad_error_study(g, icg, {}, 10, 0.1, 1), std::invalid_argument);
  EXPECT_THROW(grad_error_study(g, icg, {10}, 10, 1.5, 1), std::invalid_argument);
}

}  // namespace
}  // namespace icg
