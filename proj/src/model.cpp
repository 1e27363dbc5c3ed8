#include "icg/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace icg {
namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::array<char, 8> kModelMagic = {'I', 'C', 'G', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kModelVersion = 1;

void write_matrix(std::ofstream& out, const Matrix& m) {
  const RowMajorMatrix rows = m;
  out.write(reinterpret_cast<const char*>(rows.data()),
            static_cast<std::streamsize>(sizeof(double) * rows.size()));
}

Matrix read_matrix(std::ifstream& in, Index rows, Index cols) {
  RowMajorMatrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw std::runtime_error("truncated model file");
  return m;
}

void check_range(IndexRange range, Index n, const char* what) {
  if (range.begin < 0 || range.end > n || range.begin > range.end) {
    throw std::invalid_argument(std::string("invalid ") + what + " range");
  }
}

}  // namespace

void Icg::check_shapes() const {
  if (r.size() != logits.cols()) {
    throw std::invalid_argument("r has " + std::to_string(r.size()) + " entries, expected K=" +
                                std::to_string(logits.cols()));
  }
  if (f.rows() != logits.cols()) {
    throw std::invalid_argument("f has " + std::to_string(f.rows()) + " rows, expected K=" +
                                std::to_string(logits.cols()));
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

Matrix materialize_q(const Matrix& logits) {
  return logits.unaryExpr([](double x) { return sigmoid(x); });
}

Matrix materialize_q(const Icg& icg) { return materialize_q(icg.logits); }

Matrix synthesize(const Matrix& q, const Matrix& f) {
  if (q.cols() != f.rows()) {
    throw std::invalid_argument("synthesize: Q has " + std::to_string(q.cols()) +
                                " communities but F has " + std::to_string(f.rows()) + " rows");
  }
  return q * f;
}

Analysis::Analysis(const Matrix& q, double ridge) : q_(q), ridge_(ridge) {
  if (ridge < 0.0) throw std::invalid_argument("ridge must be nonnegative");
  if (q.cols() > q.rows()) {
    throw std::invalid_argument("analysis needs K <= N (got K=" + std::to_string(q.cols()) +
                                ", N=" + std::to_string(q.rows()) + ")");
  }
  Matrix gram = q.transpose() * q;
  gram.diagonal().array() += ridge;
  llt_.compute(gram);
  bool singular = llt_.info() != Eigen::Success;
  if (!singular && ridge == 0.0 && gram.rows() > 0) {
    const Vector pivots = llt_.matrixLLT().diagonal();
    const double ratio = pivots.minCoeff() / pivots.maxCoeff();
    singular = !(ratio * ratio > 1e-14);
  }
  if (singular) {
    throw std::runtime_error(
        "Q^T Q is singular or numerically rank deficient; use a positive ridge");
  }
}

Matrix Analysis::apply(const Matrix& s) const {
  if (s.rows() != q_.rows()) throw std::invalid_argument("analysis: row count mismatch");
  return llt_.solve(q_.transpose() * s);
}

Matrix Analysis::apply_adjoint(const Matrix& g) const {
  if (g.rows() != q_.cols()) throw std::invalid_argument("analysis adjoint: K mismatch");
  return q_ * llt_.solve(g);
}

Matrix Analysis::solve(const Matrix& rhs) const { return llt_.solve(rhs); }

CommunityFeatures analyze(const Matrix& q, const Matrix& s, double ridge) {
  return {Analysis(q, ridge).apply(s)};
}

Matrix project(const Matrix& q, const Matrix& s, double ridge) {
  return synthesize(q, analyze(q, s, ridge).values);
}

Matrix icg_edge_block(const Matrix& q, const Vector& r, IndexRange rows, IndexRange cols) {
  check_range(rows, q.rows(), "row");
  check_range(cols, q.rows(), "column");
  if (r.size() != q.cols()) throw std::invalid_argument("r length differs from K");
  if (rows.size() * cols.size() > kMaxEdgeBlockEntries) {
    throw std::invalid_argument("edge block of " + std::to_string(rows.size()) + " x " +
                                std::to_string(cols.size()) + " exceeds the materialization budget");
  }
  return q.middleRows(rows.begin, rows.size()) * r.asDiagonal() *
         q.middleRows(cols.begin, cols.size()).transpose();
}

Matrix icg_edge_block(const Icg& icg, IndexRange rows, IndexRange cols) {
  icg.check_shapes();
  check_range(rows, icg.num_nodes(), "row");
  check_range(cols, icg.num_nodes(), "column");
  // Only the rows involved are passed through the sigmoid.
  const Matrix q_rows = materialize_q(icg.logits.middleRows(rows.begin, rows.size()).eval());
  const Matrix q_cols = materialize_q(icg.logits.middleRows(cols.begin, cols.size()).eval());
  if (rows.size() * cols.size() > kMaxEdgeBlockEntries) {
    throw std::invalid_argument("edge block exceeds the materialization budget");
  }
  return q_rows * icg.r.asDiagonal() * q_cols.transpose();
}

void save_icg(const Icg& icg, const std::filesystem::path& path) {
  icg.check_shapes();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kModelMagic.data(), kModelMagic.size());
  const std::uint32_t version = kModelVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  for (std::int64_t dim : {std::int64_t{icg.num_nodes()}, std::int64_t{icg.num_communities()},
                           std::int64_t{icg.feature_dim()}}) {
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  }
  write_matrix(out, icg.logits);
  write_matrix(out, icg.r);
  write_matrix(out, icg.f);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Icg load_icg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kModelMagic) throw std::runtime_error("not an ICG model file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kModelVersion) throw std::runtime_error("unsupported model version");
  std::array<std::int64_t, 3> dims{};
  in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
  if (!in || dims[0] < 0 || dims[1] < 0 || dims[2] < 0) {
    throw std::runtime_error("corrupt model header");
  }
  Icg icg;
  icg.logits = read_matrix(in, dims[0], dims[1]);
  icg.r = read_matrix(in, dims[1], 1);
  icg.f = read_matrix(in, dims[1], dims[2]);
  return icg;
}

nlohmann::json icg_summary_json(const Icg& icg, Index top) {
  icg.check_shapes();
  const Matrix q = materialize_q(icg);
  nlohmann::json communities = nlohmann::json::array();
  std::vector<Index> order(static_cast<std::size_t>(q.rows()));
  for (Index k = 0; k < q.cols(); ++k) {
    std::iota(order.begin(), order.end(), Index{0});
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(std::max<Index>(top, 0)), order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](Index a, Index b) {
                        return q(a, k) != q(b, k) ? q(a, k) > q(b, k) : a < b;
                      });
    nlohmann::json members = nlohmann::json::array();
    for (std::size_t t = 0; t < take; ++t) {
      members.push_back({{"node", order[t]}, {"affiliation", q(order[t], k)}});
    }
    communities.push_back({{"index", k},
                           {"magnitude", icg.r(k)},
                           {"mean_affiliation", q.col(k).mean()},
                           {"top_nodes", members}});
  }
  return {{"num_nodes", icg.num_nodes()},
          {"num_communities", icg.num_communities()},
          {"feature_dim", icg.feature_dim()},
          {"communities", communities}};
}

}  // namespace icg
