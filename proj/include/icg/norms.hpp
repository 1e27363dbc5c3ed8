#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icg/graph.hpp"
#include "icg/model.hpp"
#include "json.hpp"

namespace icg {

/// Weights of the matrix and signal terms; alpha + beta = 1.
struct NormWeights {
  double alpha = 1.0;
  double beta = 0.0;

  static NormWeights make(double alpha, double beta);
};

enum class CutMethod { exact, heuristic };

std::string to_string(CutMethod method);

/// Cut norm value together with the subset pair that attains it.
struct CutNormEstimate {
  double value = 0.0;
  std::vector<Index> subset_u;
  std::vector<Index> subset_v;
  CutMethod method = CutMethod::exact;
  double normalizer_e = 1.0;
  int restarts_used = 0;
};

void to_json(nlohmann::json& j, const CutNormEstimate& estimate);

/// sqrt(sum b_ij^2 / N^2) for an N x N matrix.
double frob_matrix(const Matrix& b);
double frob_matrix(const CsrMatrix& b);

/// sqrt(sum s_ij^2 / N) for an N x D signal.
double frob_signal(const Matrix& s);

/// sqrt(alpha (N^2/E) frob_matrix(B)^2 + beta frob_signal(X)^2).
double frob_pair(const Matrix& b, const Matrix& s, NormWeights weights, double e);
/// Same combination from precomputed squared norms.
double frob_pair_from_squares(double matrix_sq, double signal_sq, NormWeights weights,
                              Index n, double e);

inline constexpr Index kExactCutNormMaxNodes = 24;

/// (1/E) max_{U,V} |sum_{i in U, j in V} b_ij| by enumerating all 2^N row
/// subsets; the column subset is optimal in closed form for each U.
CutNormEstimate cut_norm_exact(const Matrix& b, double e);

struct HeuristicOptions {
  int restarts = 16;
  std::uint64_t seed = 0;
  int max_sweeps = 100;
};

/// Lower bound on the cut norm of A - Q diag(r) Q^T by alternating
/// maximisation over indicator vectors. Never forms the dense residual;
/// every sweep costs O(nnz + N K).
CutNormEstimate cut_norm_heuristic(const CsrMatrix& a, const Matrix& q, const Vector& r, double e,
                                   const HeuristicOptions& options = {});
CutNormEstimate cut_norm_heuristic(const GraphSignal& g, const Icg& icg, double e,
                                   const HeuristicOptions& options = {});
/// Same search on an explicit (not necessarily symmetric) square matrix.
CutNormEstimate cut_norm_heuristic(const Matrix& b, double e,
                                   const HeuristicOptions& options = {});

/// (1/(D N)) sum_j max_w |sum_{i in w} z_ij|, exact in O(N D).
double cut_norm_signal(const Matrix& z);

/// alpha ||B||_cut + beta ||Z||_cut with the exact matrix cut norm.
double cut_metric_pair(const Matrix& b, const Matrix& z, NormWeights weights, double e);
/// Same, reusing an already computed matrix term.
double cut_metric_pair(const CutNormEstimate& matrix_term, const Matrix& z, NormWeights weights);

}  // namespace icg
