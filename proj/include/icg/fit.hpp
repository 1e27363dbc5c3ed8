#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "icg/graph.hpp"
#include "icg/model.hpp"
#include "json.hpp"

namespace icg {

/// Scaled Frobenius loss: graph = ||A - C||^2 / N^2, signal = ||S - QF||^2 / N,
/// total = graph + lambda * signal.
struct LossParts {
  double graph = 0.0;
  double signal = 0.0;
  double total = 0.0;
};

struct IcgGradients {
  Matrix q;       // N x K, with respect to the affiliations themselves
  Matrix logits;  // N x K
  Vector r;       // K
  Matrix f;       // K x D
};

/// Three-term expansion in O(K^2 N + K E + N K D), accumulated in extended
/// precision.
LossParts loss_efficient(const GraphSignal& g, const Icg& icg, double lambda);

/// Closed-form gradients of the total loss.
IcgGradients grad_all(const GraphSignal& g, const Icg& icg, double lambda);

/// Loss and gradients from one pass in double precision (what the optimizer
/// loops use).
std::pair<LossParts, IcgGradients> loss_and_grad(const GraphSignal& g, const Icg& icg,
                                                 double lambda);

struct EigenPairs {
  Vector values;   // sorted by |value|, descending
  Matrix vectors;  // N x m, unit columns
  bool converged = false;
  int iterations = 0;
};

/// Leading-magnitude eigenpairs of a symmetric sparse matrix by Lanczos with
/// full reorthogonalisation. A pair counts as converged when
/// ||A phi - lambda phi|| <= 1e-6 |lambda|.
EigenPairs lanczos_topk(const CsrMatrix& a, Index m, int max_iters = 500,
                        std::uint64_t seed = 0);

inline constexpr double kLogitClamp = 1e-6;

struct SoftCommunity {
  Vector q;
  double r = 0.0;
};

/// Three nonnegative soft indicators whose weighted rank-1 terms sum to
/// lambda phi phi^T exactly.
std::array<SoftCommunity, 3> eigen_soft_indicators(double lambda, const Vector& phi);

struct EigenInitInfo {
  Index eigenpairs = 0;
  bool converged = true;
};

/// floor(k/3) eigenpairs, three communities each; the remaining columns get
/// small random logits and zero magnitude. F = analyze(Q, S).
Icg init_eigen(const GraphSignal& g, Index k, std::uint64_t seed, double ridge = kDefaultRidge,
               EigenInitInfo* info = nullptr);

/// Random logits, small random magnitudes, F = analyze(Q, S).
Icg init_random(const GraphSignal& g, Index k, std::uint64_t seed, double ridge = kDefaultRidge);

enum class Optimizer { gd, adam };
enum class InitMethod { eigen, random };

std::string to_string(Optimizer optimizer);
std::string to_string(InitMethod init);

struct FitConfig {
  Index k = 12;
  double lambda = 1.0;
  double lr = 0.01;
  int epochs = 1000;
  Optimizer optimizer = Optimizer::adam;
  InitMethod init = InitMethod::eigen;
  std::uint64_t seed = 0;
  double ridge = kDefaultRidge;
  std::optional<int> track_cut_norm_every;
  int cut_norm_restarts = 8;

  /// Throws std::invalid_argument on bad values. Zero epochs is allowed and
  /// returns the initialisation.
  void validate() const;
};

struct CutTracePoint {
  int epoch = 0;
  double value = 0.0;
};

struct FitReport {
  std::vector<double> graph_loss;
  std::vector<double> signal_loss;
  std::vector<double> total_loss;
  std::vector<double> epoch_seconds;
  std::vector<CutTracePoint> cut_norm;
  LossParts initial;
  LossParts final;
  double final_frobenius_error = 0.0;
  bool eigen_converged = true;
};

/// Timings go under "timing" so runs can be compared after dropping it.
nlohmann::json to_json(const FitReport& report, bool include_traces = true);

/// sqrt(graph + lambda * signal).
double frobenius_error(const LossParts& loss);

std::pair<Icg, FitReport> fit(const GraphSignal& g, const FitConfig& config);
/// Same loop from a caller-supplied starting point.
std::pair<Icg, FitReport> fit_from(const GraphSignal& g, const FitConfig& config, Icg init);

}  // namespace icg
