#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "icg/graph.hpp"
#include "icg/model.hpp"
#include "icg/random.hpp"

namespace icg::testing {

/// Symmetric matrix with zero diagonal; a fraction `density` of the pairs
/// is nonzero, weighted uniformly in (0,1] or set to 1.
inline Matrix random_adjacency(Index n, double density, bool weighted, std::uint64_t seed) {
  Rng rng = make_rng(seed, 77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (u(rng) < density) {
        const double w = weighted ? 1.0 - u(rng) : 1.0;
        a(i, j) = w;
        a(j, i) = w;
      }
    }
  }
  return a;
}

inline GraphSignal random_graph_signal(Index n, Index d, double density, bool weighted,
                                       std::uint64_t seed) {
  return GraphSignal::from_dense(random_adjacency(n, density, weighted, seed),
                                 random_features(n, d, derive_seed(seed, 5)));
}

inline Icg random_icg(Index n, Index k, Index d, std::uint64_t seed, double logit_scale = 1.5) {
  Rng rng = make_rng(seed, 91);
  std::normal_distribution<double> normal(0.0, 1.0);
  Icg icg;
  icg.logits.resize(n, k);
  for (Index c = 0; c < k; ++c) {
    for (Index i = 0; i < n; ++i) icg.logits(i, c) = logit_scale * normal(rng);
  }
  icg.r.resize(k);
  for (Index c = 0; c < k; ++c) icg.r(c) = 0.5 * normal(rng);
  icg.f.resize(k, d);
  for (Index c = 0; c < d; ++c) {
    for (Index kk = 0; kk < k; ++kk) icg.f(kk, c) = 0.3 * normal(rng);
  }
  return icg;
}

inline Matrix dense_adjacency(const GraphSignal& g) { return Matrix(g.adjacency()); }

/// ||A - Q diag(r) Q^T||^2 / N^2 + lambda ||S - QF||^2 / N with everything
/// materialised densely.
inline double dense_loss(const Matrix& a, const Matrix& s, const Icg& icg, double lambda) {
  const Index n = a.rows();
  Matrix q(n, icg.num_communities());
  for (Index i = 0; i < q.rows(); ++i) {
    for (Index c = 0; c < q.cols(); ++c) q(i, c) = 1.0 / (1.0 + std::exp(-icg.logits(i, c)));
  }
  double graph = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      double c = 0.0;
      for (Index k = 0; k < q.cols(); ++k) c += q(i, k) * icg.r(k) * q(j, k);
      graph += (a(i, j) - c) * (a(i, j) - c);
    }
  }
  double signal = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < s.cols(); ++d) {
      double p = 0.0;
      for (Index k = 0; k < q.cols(); ++k) p += q(i, k) * icg.f(k, d);
      signal += (s(i, d) - p) * (s(i, d) - p);
    }
  }
  const double nn = static_cast<double>(n);
  return graph / (nn * nn) + lambda * signal / nn;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace icg::testing
