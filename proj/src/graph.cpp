#include "icg/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "icg/random.hpp"

namespace icg {
namespace {

void check_signal(const Matrix& signal, Index n) {
  if (signal.rows() != n) {
    throw std::invalid_argument("signal has " + std::to_string(signal.rows()) +
                                " rows, expected " + std::to_string(n));
  }
  for (Index c = 0; c < signal.cols(); ++c) {
    for (Index r = 0; r < signal.rows(); ++r) {
      const double v = signal(r, c);
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite signal value");
      if (v < 0.0 || v > 1.0) {
        throw std::invalid_argument("signal value outside [0,1] at node " + std::to_string(r));
      }
    }
  }
}

Matrix shape_signal(Matrix signal, Index n) {
  if (signal.rows() == 0 && signal.cols() == 0) return Matrix(n, 0);
  return signal;
}

std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

constexpr std::array<char, 8> kSnapshotMagic = {'I', 'C', 'G', 'G', 'R', 'P', 'H', '\0'};
constexpr std::uint32_t kSnapshotVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated snapshot");
  return value;
}

}  // namespace

GraphSignal GraphSignal::from_edges(Index n, std::span<const Edge> edges, Matrix signal,
                                    bool allow_self_loops) {
  if (n < 0) throw std::invalid_argument("negative node count");
  std::vector<Edge> canon;
  canon.reserve(edges.size());
  for (const Edge& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) {
      throw std::invalid_argument("edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) +
                                  ") has node id >= N=" + std::to_string(n));
    }
    if (!std::isfinite(e.w)) throw std::invalid_argument("non-finite edge weight");
    if (e.w < 0.0 || e.w > 1.0) {
      throw std::invalid_argument("edge weight " + std::to_string(e.w) + " outside [0,1]");
    }
    if (e.i == e.j && !allow_self_loops) {
      throw std::invalid_argument("self-loop on node " + std::to_string(e.i) +
                                  " (enable self-loops to accept)");
    }
    canon.push_back({std::min(e.i, e.j), std::max(e.i, e.j), e.w});
  }
  std::sort(canon.begin(), canon.end(), [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });

  std::vector<Eigen::Triplet<double, std::int64_t>> triplets;
  triplets.reserve(2 * canon.size());
  for (std::size_t k = 0; k < canon.size(); ++k) {
    const Edge& e = canon[k];
    if (k > 0 && canon[k - 1].i == e.i && canon[k - 1].j == e.j) {
      if (canon[k - 1].w != e.w) {
        throw std::invalid_argument("duplicate edge (" + std::to_string(e.i) + ", " +
                                    std::to_string(e.j) + ") with conflicting weights");
      }
      continue;
    }
    if (e.w == 0.0) continue;
    triplets.emplace_back(e.i, e.j, e.w);
    if (e.i != e.j) triplets.emplace_back(e.j, e.i, e.w);
  }
  CsrMatrix adjacency(n, n);
  adjacency.setFromTriplets(triplets.begin(), triplets.end());
  adjacency.makeCompressed();

  signal = shape_signal(std::move(signal), n);
  check_signal(signal, n);
  return GraphSignal(std::move(adjacency), std::move(signal));
}

GraphSignal GraphSignal::from_dense(const Matrix& adjacency, Matrix signal,
                                    bool allow_self_loops) {
  if (adjacency.rows() != adjacency.cols()) {
    throw std::invalid_argument("adjacency must be square");
  }
  const Index n = adjacency.rows();
  std::vector<Edge> edges;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) {
      if (adjacency(i, j) != adjacency(j, i)) {
        throw std::invalid_argument("adjacency is not symmetric");
      }
      if (adjacency(i, j) != 0.0) edges.push_back({i, j, adjacency(i, j)});
    }
  }
  return from_edges(n, edges, std::move(signal), allow_self_loops);
}

GraphSignal GraphSignal::from_csr(CsrMatrix adjacency, Matrix signal) {
  adjacency.makeCompressed();
  signal = shape_signal(std::move(signal), adjacency.rows());
  GraphSignal g(std::move(adjacency), std::move(signal));
  g.validate();
  return g;
}

GraphSignal GraphSignal::with_signal(Matrix signal) const {
  signal = shape_signal(std::move(signal), num_nodes());
  check_signal(signal, num_nodes());
  return GraphSignal(adjacency_, std::move(signal));
}

void GraphSignal::validate() const {
  if (adjacency_.rows() != adjacency_.cols()) {
    throw std::invalid_argument("adjacency must be square");
  }
  const Index n = adjacency_.rows();
  const auto* outer = adjacency_.outerIndexPtr();
  const auto* inner = adjacency_.innerIndexPtr();
  const auto* values = adjacency_.valuePtr();
  for (Index i = 0; i < n; ++i) {
    for (auto k = outer[i]; k < outer[i + 1]; ++k) {
      if (k > outer[i] && inner[k - 1] >= inner[k]) {
        throw std::invalid_argument("column indices not strictly increasing in row " +
                                    std::to_string(i));
      }
      const double v = values[k];
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw std::invalid_argument("adjacency value outside [0,1]");
      }
      if (adjacency_.coeff(inner[k], i) != v) {
        throw std::invalid_argument("adjacency is not symmetric");
      }
    }
  }
  check_signal(signal_, n);
}

NodeSample draw_node_sample(Index n, Index m, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("cannot sample from an empty graph");
  if (m < 1) throw std::invalid_argument("sample size must be >= 1");
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  NodeSample sample;
  sample.seed = seed;
  sample.indices.resize(static_cast<std::size_t>(m));
  for (auto& idx : sample.indices) idx = pick(rng);
  return sample;
}

NodeSample identity_sample(Index n) {
  NodeSample sample;
  sample.indices.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) sample.indices[static_cast<std::size_t>(i)] = i;
  return sample;
}

GraphSignal load_graph_signal(const std::filesystem::path& edge_path,
                              const std::optional<std::filesystem::path>& feature_path,
                              const LoadOptions& options) {
  std::ifstream in(edge_path);
  if (!in) throw std::runtime_error("cannot open edge file " + edge_path.string());

  std::vector<Edge> edges;
  Index max_id = -1;
  std::optional<Index> header_nodes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("# nodes ", 0) == 0) {
      header_nodes = std::stoll(line.substr(8));
      continue;
    }
    std::istringstream fields(strip_comment(line));
    std::string a, b, w;
    if (!(fields >> a)) continue;
    if (!(fields >> b)) {
      throw std::runtime_error(edge_path.string() + ":" + std::to_string(line_no) +
                               ": expected `i j [w]`");
    }
    Edge e;
    try {
      std::size_t pos = 0;
      e.i = std::stoll(a, &pos);
      if (pos != a.size()) throw std::invalid_argument(a);
      e.j = std::stoll(b, &pos);
      if (pos != b.size()) throw std::invalid_argument(b);
      if (fields >> w) {
        e.w = std::stod(w, &pos);
        if (pos != w.size()) throw std::invalid_argument(w);
      }
    } catch (const std::logic_error&) {
      throw std::runtime_error(edge_path.string() + ":" + std::to_string(line_no) +
                               ": malformed number");
    }
    std::string extra;
    if (fields >> extra) {
      throw std::runtime_error(edge_path.string() + ":" + std::to_string(line_no) +
                               ": trailing fields");
    }
    if (e.i < 0 || e.j < 0) {
      throw std::invalid_argument(edge_path.string() + ":" + std::to_string(line_no) +
                                  ": negative node id");
    }
    max_id = std::max({max_id, e.i, e.j});
    edges.push_back(e);
  }

  Matrix signal;
  if (feature_path) {
    signal = load_features_csv(*feature_path);
    if (options.normalize_features) normalize_columns(signal);
  }

  Index n = max_id + 1;
  if (feature_path) n = std::max(n, signal.rows());
  const std::optional<Index> declared = options.num_nodes ? options.num_nodes : header_nodes;
  if (declared) {
    if (max_id >= *declared) {
      throw std::invalid_argument("node id " + std::to_string(max_id) + " >= declared N=" +
                                  std::to_string(*declared));
    }
    n = *declared;
  }
  if (feature_path && signal.rows() != n) {
    throw std::invalid_argument("feature file has " + std::to_string(signal.rows()) +
                                " rows but the graph has " + std::to_string(n) + " nodes");
  }
  return GraphSignal::from_edges(n, edges, std::move(signal), options.allow_self_loops);
}

void save_edge_list(const GraphSignal& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "# nodes " << g.num_nodes() << "\n";
  const CsrMatrix& a = g.adjacency();
  for (Index i = 0; i < a.outerSize(); ++i) {
    for (CsrMatrix::InnerIterator it(a, i); it; ++it) {
      if (it.col() < i) continue;
      out << i << ' ' << it.col() << ' ' << it.value() << '\n';
    }
  }
}

void save_features_csv(const Matrix& signal, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  for (Index r = 0; r < signal.rows(); ++r) {
    for (Index c = 0; c < signal.cols(); ++c) {
      if (c) out << ',';
      out << signal(r, c);
    }
    out << '\n';
  }
}

Matrix load_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip_comment(line).find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (cell.find_first_not_of(" \t\r", pos) != std::string::npos) {
          throw std::invalid_argument(cell);
        }
        if (!std::isfinite(v)) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::logic_error&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": bad value '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": inconsistent column count");
    }
    rows.push_back(std::move(row));
  }
  const Index d = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  Matrix signal(static_cast<Index>(rows.size()), d);
  for (Index r = 0; r < signal.rows(); ++r) {
    for (Index c = 0; c < d; ++c) signal(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return signal;
}

void normalize_columns(Matrix& signal) {
  for (Index c = 0; c < signal.cols(); ++c) {
    const double lo = signal.col(c).minCoeff();
    const double hi = signal.col(c).maxCoeff();
    if (hi > lo) {
      signal.col(c) = (signal.col(c).array() - lo) / (hi - lo);
    } else {
      signal.col(c).setZero();
    }
  }
}

void save_snapshot(const GraphSignal& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const CsrMatrix& a = g.adjacency();
  out.write(kSnapshotMagic.data(), kSnapshotMagic.size());
  write_pod(out, kSnapshotVersion);
  write_pod<std::int64_t>(out, g.num_nodes());
  write_pod<std::int64_t>(out, g.feature_dim());
  write_pod<std::int64_t>(out, g.nnz());
  out.write(reinterpret_cast<const char*>(a.outerIndexPtr()),
            static_cast<std::streamsize>(sizeof(std::int64_t) * (g.num_nodes() + 1)));
  out.write(reinterpret_cast<const char*>(a.innerIndexPtr()),
            static_cast<std::streamsize>(sizeof(std::int64_t) * g.nnz()));
  out.write(reinterpret_cast<const char*>(a.valuePtr()),
            static_cast<std::streamsize>(sizeof(double) * g.nnz()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = g.signal();
  out.write(reinterpret_cast<const char*>(rows.data()),
            static_cast<std::streamsize>(sizeof(double) * rows.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

GraphSignal load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open snapshot " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kSnapshotMagic) throw std::runtime_error("not a graph snapshot");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kSnapshotVersion) {
    throw std::runtime_error("unsupported snapshot version " + std::to_string(version));
  }
  const auto n = read_pod<std::int64_t>(in);
  const auto d = read_pod<std::int64_t>(in);
  const auto nnz = read_pod<std::int64_t>(in);
  if (n < 0 || d < 0 || nnz < 0) throw std::runtime_error("corrupt snapshot header");

  std::vector<std::int64_t> outer(static_cast<std::size_t>(n + 1));
  std::vector<std::int64_t> inner(static_cast<std::size_t>(nnz));
  std::vector<double> values(static_cast<std::size_t>(nnz));
  in.read(reinterpret_cast<char*>(outer.data()), static_cast<std::streamsize>(outer.size() * 8));
  in.read(reinterpret_cast<char*>(inner.data()), static_cast<std::streamsize>(inner.size() * 8));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(n, d);
  in.read(reinterpret_cast<char*>(rows.data()), static_cast<std::streamsize>(rows.size() * 8));
  if (!in) throw std::runtime_error("truncated snapshot");
  if (outer.front() != 0 || outer.back() != nnz) throw std::runtime_error("corrupt CSR offsets");
  for (auto c : inner) {
    if (c < 0 || c >= n) throw std::runtime_error("corrupt CSR column index");
  }

  Eigen::Map<const CsrMatrix> view(n, n, nnz, outer.data(), inner.data(), values.data());
  return GraphSignal::from_csr(CsrMatrix(view), Matrix(rows));
}

double degree(const GraphSignal& g) {
  const CsrMatrix& a = g.adjacency();
  return Eigen::Map<const Vector>(a.valuePtr(), a.nonZeros()).squaredNorm();
}

GraphSignal gen_erdos_renyi(Index n, double p, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0,1]");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(p * static_cast<double>(n) * static_cast<double>(n - 1) / 2.0 * 1.05) + 16);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (unif(rng) < p) edges.push_back({i, j, 1.0});
    }
  }
  return GraphSignal::from_edges(n, edges, Matrix(n, 0));
}

GraphSignal gen_sbm(std::span<const Index> block_sizes, const Matrix& p_matrix,
                    std::uint64_t seed) {
  if (block_sizes.empty()) throw std::invalid_argument("block list is empty");
  const auto blocks = static_cast<Index>(block_sizes.size());
  if (p_matrix.rows() != blocks || p_matrix.cols() != blocks) {
    throw std::invalid_argument("p_matrix must be blocks x blocks");
  }
  for (Index a = 0; a < blocks; ++a) {
    for (Index b = 0; b < blocks; ++b) {
      if (p_matrix(a, b) != p_matrix(b, a)) throw std::invalid_argument("p_matrix not symmetric");
      if (!(p_matrix(a, b) >= 0.0 && p_matrix(a, b) <= 1.0)) {
        throw std::invalid_argument("p_matrix entries must lie in [0,1]");
      }
    }
  }
  const std::vector<int> label = sbm_labels(block_sizes);
  const auto n = static_cast<Index>(label.size());
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (unif(rng) < p_matrix(label[static_cast<std::size_t>(i)], label[static_cast<std::size_t>(j)])) {
        edges.push_back({i, j, 1.0});
      }
    }
  }
  return GraphSignal::from_edges(n, edges, Matrix(n, 0));
}

std::vector<int> sbm_labels(std::span<const Index> block_sizes) {
  std::vector<int> label;
  for (std::size_t b = 0; b < block_sizes.size(); ++b) {
    if (block_sizes[b] < 0) throw std::invalid_argument("negative block size");
    label.insert(label.end(), static_cast<std::size_t>(block_sizes[b]), static_cast<int>(b));
  }
  return label;
}

GraphSignal gen_from_probabilities(const Matrix& probabilities, std::uint64_t seed) {
  if (probabilities.rows() != probabilities.cols()) {
    throw std::invalid_argument("probability matrix must be square");
  }
  const Index n = probabilities.rows();
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double p = std::clamp(probabilities(i, j), 0.0, 1.0);
      if (unif(rng) < p) edges.push_back({i, j, 1.0});
    }
  }
  return GraphSignal::from_edges(n, edges, Matrix(n, 0));
}

Matrix random_features(Index n, Index d, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix s(n, d);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c < d; ++c) s(r, c) = unif(rng);
  }
  return s;
}

GraphSignal sample_subgraph(const GraphSignal& g, const NodeSample& sample) {
  const Index n = g.num_nodes();
  const Index m = sample.size();
  for (Index idx : sample.indices) {
    if (idx < 0 || idx >= n) throw std::invalid_argument("sample index out of range");
  }
  // Positions at which each original node was drawn.
  std::unordered_map<Index, std::vector<Index>> positions;
  positions.reserve(static_cast<std::size_t>(m));
  for (Index pos = 0; pos < m; ++pos) {
    positions[sample.indices[static_cast<std::size_t>(pos)]].push_back(pos);
  }

  const CsrMatrix& a = g.adjacency();
  std::vector<Eigen::Triplet<double, std::int64_t>> triplets;
  for (Index pos = 0; pos < m; ++pos) {
    const Index node = sample.indices[static_cast<std::size_t>(pos)];
    for (CsrMatrix::InnerIterator it(a, node); it; ++it) {
      const auto hit = positions.find(it.col());
      if (hit == positions.end()) continue;
      for (Index other : hit->second) triplets.emplace_back(pos, other, it.value());
    }
  }
  CsrMatrix sub(m, m);
  sub.setFromTriplets(triplets.begin(), triplets.end());
  sub.makeCompressed();

  Matrix signal(m, g.feature_dim());
  for (Index pos = 0; pos < m; ++pos) {
    signal.row(pos) = g.signal().row(sample.indices[static_cast<std::size_t>(pos)]);
  }
  return GraphSignal::from_csr(std::move(sub), std::move(signal));
}

}  // namespace icg
