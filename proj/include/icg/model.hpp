#pragma once

#include <filesystem>
#include <optional>

#include <Eigen/Cholesky>
#include "json.hpp"

#include "icg/graph.hpp"

namespace icg {

inline constexpr double kDefaultRidge = 1e-8;

/// Intersecting community graph: C = Q diag(r) Q^T, P = Q F with
/// Q = sigmoid(logits).
struct Icg {
  Matrix logits;  // N x K
  Vector r;       // K
  Matrix f;       // K x D

  Index num_nodes() const { return logits.rows(); }
  Index num_communities() const { return logits.cols(); }
  Index feature_dim() const { return f.cols(); }

  /// Throws std::invalid_argument when the three shapes disagree.
  void check_shapes() const;
};

/// Community-space features (K x D).
struct CommunityFeatures {
  Matrix values;
};

double sigmoid(double x);
double logit(double p);

Matrix materialize_q(const Icg& icg);
Matrix materialize_q(const Matrix& logits);

/// F -> Q F.
Matrix synthesize(const Matrix& q, const Matrix& f);

/// Cached factorization of (Q^T Q + ridge I) for repeated analysis with a
/// fixed Q.
class Analysis {
 public:
  Analysis(const Matrix& q, double ridge = kDefaultRidge);

  /// (Q^T Q + ridge I)^{-1} Q^T S.
  Matrix apply(const Matrix& s) const;
  /// Adjoint of apply(): Q (Q^T Q + ridge I)^{-1} G. Used by backprop.
  Matrix apply_adjoint(const Matrix& g) const;
  /// (Q^T Q + ridge I)^{-1} X for a K x D right-hand side.
  Matrix solve(const Matrix& rhs) const;

  const Matrix& q() const { return q_; }
  double ridge() const { return ridge_; }

 private:
  Matrix q_;
  double ridge_;
  Eigen::LLT<Matrix> llt_;
};

/// S -> Q^+ S via the ridge-regularised normal equations. With ridge = 0 a
/// singular Gram matrix is an error.
CommunityFeatures analyze(const Matrix& q, const Matrix& s, double ridge = kDefaultRidge);

/// Q Q^+ S.
Matrix project(const Matrix& q, const Matrix& s, double ridge = kDefaultRidge);

/// Half-open index range [begin, end).
struct IndexRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
};

/// Largest block (in entries) icg_edge_block will materialize.
inline constexpr Index kMaxEdgeBlockEntries = Index{4096} * 4096;

/// Q[rows] diag(r) Q[cols]^T.
Matrix icg_edge_block(const Icg& icg, IndexRange rows, IndexRange cols);
Matrix icg_edge_block(const Matrix& q, const Vector& r, IndexRange rows, IndexRange cols);

/// Binary model file: magic, version, N, K, D, logits, r, f (row-major).
void save_icg(const Icg& icg, const std::filesystem::path& path);
Icg load_icg(const std::filesystem::path& path);

/// r plus the `top` most strongly affiliated nodes of every community.
nlohmann::json icg_summary_json(const Icg& icg, Index top = 10);

}  // namespace icg
