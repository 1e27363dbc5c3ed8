#include <gtest/gtest.h>

#include <set>

#include "icg/experiments.hpp"

namespace icg {
namespace {

TEST(Report, StripTimingRemovesNestedMembers) {
  nlohmann::json j = {{"a", 1},
                      {"timing", {{"s", 0.5}}},
                      {"runs", {{{"k", 2}, {"timing", {{"s", 1.0}}}}}}};
  const nlohmann::json stripped = strip_timing(j);
  EXPECT_FALSE(stripped.contains("timing"));
  EXPECT_FALSE(stripped["runs"][0].contains("timing"));
  EXPECT_EQ(stripped["runs"][0]["k"], 2);
  EXPECT_EQ(stripped["a"], 1);
}

TEST(Report, PassedFollowsAssertionsAndTiming) {
  nlohmann::json r = new_report("bench", nlohmann::json::object());
  add_assertion(r, "ok", true);
  finalize_report(r);
  EXPECT_TRUE(report_passed(r));
  r["timing"]["passed"] = false;
  EXPECT_FALSE(report_passed(r));
  r["timing"]["passed"] = true;
  add_assertion(r, "bad", false, "detail");
  finalize_report(r);
  EXPECT_FALSE(report_passed(r));
}

TEST(Split, PartitionsAllNodes) {
  const Split s = random_split(101, 3);
  EXPECT_EQ(s.train.size(), 51u);
  EXPECT_EQ(s.val.size(), 25u);
  EXPECT_EQ(s.test.size(), 25u);
  std::set<Index> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 101u);
  EXPECT_EQ(random_split(101, 3).train, s.train);
  EXPECT_NE(random_split(101, 4).train, s.train);
  EXPECT_THROW(random_split(10, 0, 0.8, 0.5), std::invalid_argument);
}

TEST(Slope, RecoversPowerLaw) {
  const std::vector<double> x = {10, 20, 40, 80};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 1.5));
  EXPECT_NEAR(log_log_slope(x, y), 1.5, 1e-12);
  EXPECT_THROW(log_log_slope({1.0}, {1.0}), std::invalid_argument);
}

TEST(PlantedSbm, LabelsFollowBlocks) {
  const LabeledGraph data = planted_sbm(40, 0.9, 0.05, 3, 1);
  EXPECT_EQ(data.graph.num_nodes(), 40);
  EXPECT_EQ(data.graph.feature_dim(), 3);
  EXPECT_EQ(data.labels.front(), 0);
  EXPECT_EQ(data.labels.back(), 1);
  EXPECT_EQ(data.num_classes, 2);
}

PipelineConfig small_pipeline() {
  PipelineConfig c;
  c.fit.epochs = 60;
  c.train.epochs = 30;
  return c;
}

TEST(Robustness, FullDropIsAnError) {
  const LabeledGraph data = planted_sbm(60, 0.9, 0.05, 2, 2);
  RobustnessConfig config;
  config.pipeline = small_pipeline();
  config.drop_fractions = {0.0, 1.0};
  EXPECT_THROW(cmd_subgraph_robustness(data, config), std::invalid_argument);
}

TEST(Robustness, NoDropMatchesStandardPipeline) {
  const LabeledGraph data = planted_sbm(80, 0.9, 0.05, 2, 3);
  RobustnessConfig config;
  config.pipeline = small_pipeline();
  config.drop_fractions = {0.0};
  config.seeds = {5};
  const nlohmann::json report = cmd_subgraph_robustness(data, config);
  const PipelineRun run = run_pipeline(data, random_split(80, derive_seed(5, 1)), config.pipeline, 5);
  EXPECT_EQ(report["runs"][1]["test_accuracy"].get<double>(), run.metrics.test_accuracy);
  EXPECT_EQ(report["runs"][1]["fit_final_loss"].get<double>(), run.fit.final.total);
}

TEST(AblateK, SingletonGivesSinglePointWithoutComparisons) {
  const LabeledGraph data = planted_sbm(60, 0.9, 0.05, 2, 4);
  AblateConfig config;
  config.pipeline = small_pipeline();
  config.k_list = {4};
  config.seeds = {0};
  const nlohmann::json report = cmd_ablate_k(data, config);
  EXPECT_EQ(report["aggregate"]["curve"].size(), 1u);
  EXPECT_TRUE(report["assertions"].empty());
  EXPECT_TRUE(report["passed"].get<bool>());
}

TEST(Bench, SingletonHasNoSlopes) {
  BenchConfig config;
  config.n_list = {100};
  config.reps = 1;
  const nlohmann::json report = cmd_runtime_bench(config);
  EXPECT_TRUE(report["timing"]["icg_u_slope"].is_null());
  EXPECT_TRUE(report["timing"]["message_passing_slope"].is_null());
  EXPECT_EQ(report["runs"].size(), 1u);
  EXPECT_TRUE(report_passed(report));
}

TEST(BoundCheck, ReportsEveryK) {
  BoundCheckConfig config;
  config.n = 60;
  config.k_list = {3, 6};
  config.restarts = 2;
  config.epochs = 30;
  config.cut_restarts = 4;
  const nlohmann::json report = cmd_bound_check(config);
  ASSERT_EQ(report["runs"].size(), 2u);
  for (const auto& run : report["runs"]) {
    EXPECT_GE(run["delta"].get<double>(), 0.0);
    EXPECT_LE(run["cut_norm_estimate"].get<double>(), run["cs_bound_unrestricted"].get<double>());
  }
  EXPECT_THROW(cmd_bound_check(BoundCheckConfig{.n = 6000}), std::invalid_argument);
}

}  // namespace
}  // namespace icg
