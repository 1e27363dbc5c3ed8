#include "icg/norms.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "icg/random.hpp"

namespace icg {
namespace {

void check_normalizer(double e) {
  if (!(e > 0.0)) throw std::invalid_argument("cut/Frobenius normalizer E must be positive");
}

std::vector<Index> support(const Eigen::VectorXd& indicator) {
  std::vector<Index> out;
  for (Index i = 0; i < indicator.size(); ++i) {
    if (indicator(i) != 0.0) out.push_back(i);
  }
  return out;
}

/// Alternating maximisation of sign * u^T B v over u, v in {0,1}^N.
/// `apply` computes B x, `apply_t` computes B^T x.
template <typename Apply, typename ApplyT>
CutNormEstimate alternating_search(Index n, double e, const HeuristicOptions& options,
                                   const Apply& apply, const ApplyT& apply_t) {
  if (options.restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  check_normalizer(e);
  CutNormEstimate best;
  best.method = CutMethod::heuristic;
  best.normalizer_e = e;
  best.restarts_used = options.restarts;
  double best_abs = -1.0;

  for (int restart = 0; restart < options.restarts; ++restart) {
    Rng rng = make_rng(options.seed, static_cast<std::uint64_t>(restart));
    std::bernoulli_distribution coin(0.5);
    Vector start(n);
    for (Index i = 0; i < n; ++i) start(i) = coin(rng) ? 1.0 : 0.0;

    for (double sign : {1.0, -1.0}) {
      Vector u = start;
      Vector v = Vector::Zero(n);
      Vector bv = Vector::Zero(n);
      for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        const Vector t = apply_t(u);
        Vector v_next(n);
        for (Index j = 0; j < n; ++j) v_next(j) = sign * t(j) > 0.0 ? 1.0 : 0.0;
        bv = apply(v_next);
        Vector u_next(n);
        for (Index i = 0; i < n; ++i) u_next(i) = sign * bv(i) > 0.0 ? 1.0 : 0.0;
        const bool stable = u_next == u && v_next == v;
        u = std::move(u_next);
        v = std::move(v_next);
        if (stable) break;
      }
      const double total = u.dot(bv);
      if (std::abs(total) > best_abs) {
        best_abs = std::abs(total);
        best.value = std::abs(total) / e;
        best.subset_u = support(u);
        best.subset_v = support(v);
      }
    }
  }
  return best;
}

}  // namespace

NormWeights NormWeights::make(double alpha, double beta) {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
  if (alpha == 0.0 && beta == 0.0) throw std::invalid_argument("weights cannot both be zero");
  if (std::abs(alpha + beta - 1.0) > 1e-12) throw std::invalid_argument("weights must sum to 1");
  return {alpha, beta};
}

std::string to_string(CutMethod method) {
  return method == CutMethod::exact ? "exact" : "heuristic";
}

void to_json(nlohmann::json& j, const CutNormEstimate& estimate) {
  j = nlohmann::json{{"value", estimate.value},
                     {"method", to_string(estimate.method)},
                     {"size_u", estimate.subset_u.size()},
                     {"size_v", estimate.subset_v.size()},
                     {"normalizer", estimate.normalizer_e}};
  if (estimate.method == CutMethod::heuristic) j["restarts"] = estimate.restarts_used;
}

double frob_matrix(const Matrix& b) {
  if (b.rows() == 0) return 0.0;
  return b.norm() / static_cast<double>(b.rows());
}

double frob_matrix(const CsrMatrix& b) {
  if (b.rows() == 0) return 0.0;
  return b.norm() / static_cast<double>(b.rows());
}

double frob_signal(const Matrix& s) {
  if (s.rows() == 0) return 0.0;
  return s.norm() / std::sqrt(static_cast<double>(s.rows()));
}

double frob_pair_from_squares(double matrix_sq, double signal_sq, NormWeights weights, Index n,
                              double e) {
  check_normalizer(e);
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  return std::sqrt(weights.alpha * nn / e * matrix_sq + weights.beta * signal_sq);
}

double frob_pair(const Matrix& b, const Matrix& s, NormWeights weights, double e) {
  const double fm = frob_matrix(b);
  const double fs = frob_signal(s);
  return frob_pair_from_squares(fm * fm, fs * fs, weights, b.rows(), e);
}

CutNormEstimate cut_norm_exact(const Matrix& b, double e) {
  check_normalizer(e);
  if (b.rows() != b.cols()) throw std::invalid_argument("cut norm needs a square matrix");
  const Index n = b.rows();
  if (n > kExactCutNormMaxNodes) {
    throw std::invalid_argument("exact cut norm is limited to N <= " +
                                std::to_string(kExactCutNormMaxNodes) +
                                "; use cut_norm_heuristic for larger graphs");
  }

  // Gray-code walk over row subsets U; t holds the column sums over U.
  Vector t = Vector::Zero(n);
  std::uint64_t mask = 0;
  std::uint64_t best_mask = 0;
  double best = 0.0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t step = 1; step < total; ++step) {
    const int bit = std::countr_zero(step);
    mask ^= std::uint64_t{1} << bit;
    if (mask & (std::uint64_t{1} << bit)) {
      t += b.row(bit).transpose();
    } else {
      t -= b.row(bit).transpose();
    }
    double pos = 0.0;
    double neg = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (t(j) > 0.0) pos += t(j);
      else neg -= t(j);
    }
    const double score = std::max(pos, neg);
    if (score > best) {
      best = score;
      best_mask = mask;
    }
  }

  CutNormEstimate out;
  out.method = CutMethod::exact;
  out.normalizer_e = e;
  Vector col_sums = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    if (best_mask & (std::uint64_t{1} << i)) {
      out.subset_u.push_back(i);
      col_sums += b.row(i).transpose();
    }
  }
  double pos = 0.0;
  double neg = 0.0;
  for (Index j = 0; j < n; ++j) {
    if (col_sums(j) > 0.0) pos += col_sums(j);
    else neg -= col_sums(j);
  }
  const bool positive_side = pos >= neg;
  for (Index j = 0; j < n; ++j) {
    if (positive_side ? col_sums(j) > 0.0 : col_sums(j) < 0.0) out.subset_v.push_back(j);
  }
  double sum = 0.0;
  for (Index i : out.subset_u) {
    for (Index j : out.subset_v) sum += b(i, j);
  }
  out.value = std::abs(sum) / e;
  return out;
}

CutNormEstimate cut_norm_heuristic(const CsrMatrix& a, const Matrix& q, const Vector& r, double e,
                                   const HeuristicOptions& options) {
  if (a.rows() != a.cols() || q.rows() != a.rows() || r.size() != q.cols()) {
    throw std::invalid_argument("cut_norm_heuristic: shape mismatch");
  }
  // The residual A - Q diag(r) Q^T is symmetric, so B^T x = B x.
  const auto residual = [&](const Vector& x) -> Vector {
    return a * x - q * r.cwiseProduct(q.transpose() * x);
  };
  return alternating_search(a.rows(), e, options, residual, residual);
}

CutNormEstimate cut_norm_heuristic(const GraphSignal& g, const Icg& icg, double e,
                                   const HeuristicOptions& options) {
  icg.check_shapes();
  return cut_norm_heuristic(g.adjacency(), materialize_q(icg), icg.r, e, options);
}

CutNormEstimate cut_norm_heuristic(const Matrix& b, double e, const HeuristicOptions& options) {
  if (b.rows() != b.cols()) throw std::invalid_argument("cut norm needs a square matrix");
  return alternating_search(
      b.rows(), e, options, [&](const Vector& x) -> Vector { return b * x; },
      [&](const Vector& x) -> Vector { return b.transpose() * x; });
}

double cut_norm_signal(const Matrix& z) {
  if (z.cols() < 1) throw std::invalid_argument("signal cut norm needs D >= 1");
  if (z.rows() == 0) return 0.0;
  double total = 0.0;
  for (Index c = 0; c < z.cols(); ++c) {
    double pos = 0.0;
    double neg = 0.0;
    for (Index i = 0; i < z.rows(); ++i) {
      if (z(i, c) > 0.0) pos += z(i, c);
      else neg -= z(i, c);
    }
    total += std::max(pos, neg);
  }
  return total / (static_cast<double>(z.cols()) * static_cast<double>(z.rows()));
}

double cut_metric_pair(const CutNormEstimate& matrix_term, const Matrix& z, NormWeights weights) {
  double out = weights.alpha * matrix_term.value;
  if (weights.beta != 0.0) out += weights.beta * cut_norm_signal(z);
  return out;
}

double cut_metric_pair(const Matrix& b, const Matrix& z, NormWeights weights, double e) {
  return cut_metric_pair(cut_norm_exact(b, e), z, weights);
}

}  // namespace icg
