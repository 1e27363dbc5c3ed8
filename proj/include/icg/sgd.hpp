#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icg/adam.hpp"
#include "icg/fit.hpp"
#include "icg/graph.hpp"
#include "icg/model.hpp"
#include "json.hpp"

namespace icg {

struct SgdConfig {
  Index m = 100;
  int steps = 1000;
  double lr = 0.01;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  bool scale_q_grads = true;
  Optimizer optimizer = Optimizer::adam;
  /// Full-graph loss is recorded every this many steps (and after the last).
  int eval_every = 100;

  void validate(Index n) const;
};

/// The scaled loss of the ICG restricted to the sampled nodes (with
/// repetition), normalised by M instead of N.
LossParts subgraph_loss(const GraphSignal& g, const Icg& icg, const NodeSample& sample,
                        double lambda);

/// Exact gradients of subgraph_loss with respect to the full parameter set.
/// Rows of the Q/logit gradients outside the sample are zero; a node drawn
/// several times receives the sum of its copies.
IcgGradients subgraph_grads(const GraphSignal& g, const Icg& icg, const NodeSample& sample,
                            double lambda);

/// Optimizer state carried between sgd steps.
struct SgdState {
  Adam adam;
  AdamMoments logits;
  AdamMoments r;
  AdamMoments f;
};

/// One update from the given sample. Only the sampled logit rows change.
/// Returns the subgraph loss before the update.
LossParts sgd_step(const GraphSignal& g, Icg& icg, const NodeSample& sample,
                   const SgdConfig& config, SgdState& state);

std::pair<Icg, FitReport> sgd_fit(const GraphSignal& g, const SgdConfig& config, Icg init);

struct GradErrorClass {
  double quantile = 0.0;  // empirical (1 - p)-quantile of the max error
  double median = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct GradErrorRow {
  Index m = 0;
  GradErrorClass r;
  GradErrorClass f;
  GradErrorClass q;
};

struct GradErrorReport {
  Index n = 0;
  Index k = 0;
  Index d = 0;
  double lambda = 0.0;
  double p = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
  std::vector<GradErrorRow> rows;
  /// Least-squares slope of log(median r error) against log(M).
  double slope_r = 0.0;
  bool slope_defined = false;
  std::vector<std::string> warnings;

  bool all_pass() const;
};

nlohmann::json to_json(const GradErrorReport& report);

/// Hoeffding-type bounds on the subgraph-gradient deviations at confidence
/// 1 - p, in this library's loss normalisation.
double grad_bound_r(Index n, Index k, Index m, double p);
double grad_bound_f(Index k, Index d, Index m, double p, double lambda);
double grad_bound_q(Index n, Index k, Index m, double p);

/// Monte-Carlo study of |full gradient - subgraph gradient| per parameter
/// class. Parameters outside [0,1] are clamped first, with a warning.
GradErrorReport grad_error_study(const GraphSignal& g, const Icg& icg,
                                 const std::vector<Index>& m_values, int trials, double p,
                                 std::uint64_t seed, double lambda = 1.0);

}  // namespace icg
