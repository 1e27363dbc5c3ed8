#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "icg/fit.hpp"
#include "icg/random.hpp"

namespace icg {
namespace {

constexpr double kResidualTol = 1e-6;
constexpr double kEstimateTol = 1e-8;

std::optional<Vector> fresh_direction(const Matrix& basis, Index used, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = basis.rows();
  for (int attempt = 0; attempt < 8; ++attempt) {
    Vector x(n);
    for (Index i = 0; i < n; ++i) x(i) = normal(rng);
    for (int pass = 0; pass < 2 && used > 0; ++pass) {
      x -= basis.leftCols(used) * (basis.leftCols(used).transpose() * x);
    }
    const double norm = x.norm();
    if (norm > 1e-8) return Vector(x / norm);
  }
  return std::nullopt;
}

std::vector<Index> by_magnitude(const Vector& theta) {
  std::vector<Index> order(static_cast<std::size_t>(theta.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ma = std::abs(theta(a));
    const double mb = std::abs(theta(b));
    if (ma != mb) return ma > mb;
    return theta(a) > theta(b);
  });
  return order;
}

double row_sum_bound(const CsrMatrix& a) {
  double best = 0.0;
  for (Index i = 0; i < a.outerSize(); ++i) {
    double sum = 0.0;
    for (CsrMatrix::InnerIterator it(a, i); it; ++it) sum += std::abs(it.value());
    best = std::max(best, sum);
  }
  return best;
}

}  // namespace

EigenPairs lanczos_topk(const CsrMatrix& a, Index m, int max_iters, std::uint64_t seed) {
  if (a.rows() != a.cols()) throw std::invalid_argument("lanczos_topk: matrix must be square");
  const Index n = a.rows();
  if (m < 0 || m > n) throw std::invalid_argument("lanczos_topk: need 0 <= m <= N");
  if (max_iters < 1) throw std::invalid_argument("lanczos_topk: max_iters must be positive");
  EigenPairs out;
  out.values = Vector(0);
  out.vectors = Matrix(n, 0);
  out.converged = true;
  if (m == 0) return out;

  const Index cap = std::min<Index>(n, std::max<Index>(max_iters, m));
  const double scale = std::max(row_sum_bound(a), 1e-300);
  const double breakdown_tol = 1e-10 * scale;

  Rng rng = make_rng(seed);
  Matrix v(n, cap);
  Vector alpha(cap);
  Vector beta = Vector::Zero(cap);
  v.col(0) = *fresh_direction(v, 0, rng);

  Eigen::SelfAdjointEigenSolver<Matrix> tri;
  Index size = 0;
  for (Index j = 0; j < cap; ++j) {
    Vector w = a * v.col(j);
    alpha(j) = v.col(j).dot(w);
    for (int pass = 0; pass < 2; ++pass) {
      w -= v.leftCols(j + 1) * (v.leftCols(j + 1).transpose() * w);
    }
    const double b = w.norm();
    size = j + 1;
    const bool breakdown = b <= breakdown_tol;
    const Index stride = size < 40 ? 1 : std::max<Index>(5, size / 20);
    const bool last = size == cap;
    if (size >= m && (last || breakdown || size % stride == 0)) {
      tri.computeFromTridiagonal(alpha.head(size), beta.head(size - 1), Eigen::ComputeEigenvectors);
      const std::vector<Index> order = by_magnitude(tri.eigenvalues());
      bool done = true;
      for (Index t = 0; t < m && done; ++t) {
        const Index idx = order[static_cast<std::size_t>(t)];
        const double theta = tri.eigenvalues()(idx);
        const double estimate = std::abs(b * tri.eigenvectors()(size - 1, idx));
        done = estimate <= kEstimateTol * std::max(std::abs(theta), 1e-12 * scale);
      }
      if (done || last) break;
    }
    if (last) break;
    if (breakdown) {
      const std::optional<Vector> next = fresh_direction(v, size, rng);
      if (!next) break;
      beta(j) = 0.0;
      v.col(j + 1) = *next;
    } else {
      beta(j) = b;
      v.col(j + 1) = w / b;
    }
  }

  if (size < m) throw std::runtime_error("lanczos_topk: Krylov basis smaller than m");
  tri.computeFromTridiagonal(alpha.head(size), beta.head(size - 1), Eigen::ComputeEigenvectors);
  const std::vector<Index> order = by_magnitude(tri.eigenvalues());
  out.values.resize(m);
  out.vectors.resize(n, m);
  out.iterations = static_cast<int>(size);
  for (Index t = 0; t < m; ++t) {
    const Index idx = order[static_cast<std::size_t>(t)];
    const double theta = tri.eigenvalues()(idx);
    Vector phi = v.leftCols(size) * tri.eigenvectors().col(idx);
    phi.normalize();
    const double residual = (a * phi - theta * phi).norm();
    if (residual > kResidualTol * std::max(std::abs(theta), 1e-12 * scale)) out.converged = false;
    out.values(t) = theta;
    out.vectors.col(t) = phi;
  }
  return out;
}

}  // namespace icg
