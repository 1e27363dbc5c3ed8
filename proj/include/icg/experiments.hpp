#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icg/fit.hpp"
#include "icg/graph.hpp"
#include "icg/nn.hpp"
#include "json.hpp"

namespace icg {

/// Reports share one layout: command, config, seeds, runs, aggregate,
/// machine, timing, assertions, passed. Wall-clock quantities only ever
/// appear inside objects keyed "timing", so two runs with the same seeds
/// agree once those objects are removed.
nlohmann::json new_report(const std::string& command, nlohmann::json config);
void add_assertion(nlohmann::json& report, const std::string& name, bool passed,
                   const std::string& detail = {});
/// Sets report["passed"] from the assertion list (and from
/// report["timing"]["passed"] when present).
void finalize_report(nlohmann::json& report);
bool report_passed(const nlohmann::json& report);
/// Copy with every "timing" member removed at any depth.
nlohmann::json strip_timing(const nlohmann::json& report);
nlohmann::json machine_info();

struct Split {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
};

/// Random 50/25/25 partition unless other fractions are given.
Split random_split(Index n, std::uint64_t seed, double train_fraction = 0.5,
                   double val_fraction = 0.25);

struct LabeledGraph {
  GraphSignal graph;
  std::vector<int> labels;
  Index num_classes = 0;
};

/// Two equal blocks with edge probabilities p_in / p_out and uniform noise
/// features that carry no label information.
LabeledGraph planted_sbm(Index n, double p_in, double p_out, Index feature_dim, std::uint64_t seed);

struct PipelineConfig {
  FitConfig fit;
  TrainConfig train;
  PipelineConfig();
};

struct PipelineRun {
  FitReport fit;
  TrainMetrics metrics;
};

/// Fit an ICG, then train ICG_u-NN on its affiliations.
PipelineRun run_pipeline(const LabeledGraph& data, const Split& split, const PipelineConfig& config,
                         std::uint64_t seed);
/// Same network trained on Q from an already fitted ICG.
TrainMetrics train_on_icg(const LabeledGraph& data, const Icg& icg, const Split& split,
                          const TrainConfig& config, std::uint64_t seed);
TrainMetrics train_mlp(const LabeledGraph& data, const Split& split, const TrainConfig& config,
                       std::uint64_t seed);

struct BoundCheckConfig {
  Index n = 500;
  double p = 0.5;
  std::vector<Index> k_list = {3, 6, 12, 24, 48};
  int restarts = 3;
  std::uint64_t seed = 0;
  int epochs = 500;
  double lr = 0.01;
  int cut_restarts = 32;
};

nlohmann::json cmd_bound_check(const BoundCheckConfig& config);

struct BenchConfig {
  std::vector<Index> n_list = {500, 1000, 2000, 4000};
  bool dense = true;
  Index k = 32;
  int reps = 3;
  std::uint64_t seed = 0;
  Index features = 128;
  Index hidden = 128;
  Index layers = 3;
  Index out = 5;
};

nlohmann::json cmd_runtime_bench(const BenchConfig& config);

struct RobustnessConfig {
  std::vector<double> drop_fractions = {0.0, 0.1, 0.3, 0.5};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  PipelineConfig pipeline;
};

nlohmann::json cmd_subgraph_robustness(const LabeledGraph& data, const RobustnessConfig& config);

struct AblateConfig {
  std::vector<Index> k_list = {1, 2, 4, 8, 16};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  PipelineConfig pipeline;
};

nlohmann::json cmd_ablate_k(const LabeledGraph& data, const AblateConfig& config);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace icg
