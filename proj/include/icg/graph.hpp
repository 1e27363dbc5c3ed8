#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace icg {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Compressed sparse row storage with sorted column indices per row.
using CsrMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;

struct Edge {
  Index i = 0;
  Index j = 0;
  double w = 1.0;
};

/// Undirected graph plus node features. Both (i,j) and (j,i) are stored.
///
/// Instances are built through the factory functions below, which enforce
/// symmetry and the [0,1] value range. The struct is immutable in practice:
/// every algorithm in the library takes it by const reference.
class GraphSignal {
 public:
  GraphSignal() = default;

  /// Builds from an undirected edge list. Each unordered pair may appear
  /// more than once (in either orientation) only with an identical weight.
  /// Zero-weight edges are dropped.
  static GraphSignal from_edges(Index n, std::span<const Edge> edges,
                                Matrix signal, bool allow_self_loops = false);

  /// Builds from a dense symmetric matrix. Intended for tests and small
  /// planted instances.
  static GraphSignal from_dense(const Matrix& adjacency, Matrix signal,
                                bool allow_self_loops = false);

  /// Takes ownership of an already-compressed CSR matrix after validating it.
  static GraphSignal from_csr(CsrMatrix adjacency, Matrix signal);

  Index num_nodes() const { return adjacency_.rows(); }
  Index feature_dim() const { return signal_.cols(); }
  /// Stored directed entries; this is the E used by every cut-norm scaling.
  Index nnz() const { return adjacency_.nonZeros(); }

  const CsrMatrix& adjacency() const { return adjacency_; }
  const Matrix& signal() const { return signal_; }

  /// Same graph with a different feature matrix (validated).
  GraphSignal with_signal(Matrix signal) const;

  /// Throws std::invalid_argument if any invariant is violated.
  void validate() const;

 private:
  GraphSignal(CsrMatrix adjacency, Matrix signal)
      : adjacency_(std::move(adjacency)), signal_(std::move(signal)) {}

  CsrMatrix adjacency_;
  Matrix signal_;
};

/// Node ids drawn uniformly with repetition.
struct NodeSample {
  std::vector<Index> indices;
  std::uint64_t seed = 0;

  Index size() const { return static_cast<Index>(indices.size()); }
};

NodeSample draw_node_sample(Index n, Index m, std::uint64_t seed);
/// The sample (0, 1, ..., n-1).
NodeSample identity_sample(Index n);

struct LoadOptions {
  std::optional<Index> num_nodes;
  bool normalize_features = false;
  bool allow_self_loops = false;
};

/// Reads `i j [w]` lines (0-based, `#` starts a comment) and an optional
/// CSV feature file with one row per node.
GraphSignal load_graph_signal(const std::filesystem::path& edge_path,
                              const std::optional<std::filesystem::path>& feature_path,
                              const LoadOptions& options = {});

/// Writes the upper triangle (i <= j) as `i j w` with round-trip precision.
void save_edge_list(const GraphSignal& g, const std::filesystem::path& path);
void save_features_csv(const Matrix& signal, const std::filesystem::path& path);
Matrix load_features_csv(const std::filesystem::path& path);

/// Min-max rescales each column into [0,1]; constant columns map to 0.
void normalize_columns(Matrix& signal);

/// Binary snapshot: magic, version, N, D, nnz, CSR arrays, row-major signal.
void save_snapshot(const GraphSignal& g, const std::filesystem::path& path);
GraphSignal load_snapshot(const std::filesystem::path& path);

/// Sum of squared adjacency entries, i.e. N^2 times the squared scaled
/// Frobenius norm. Equals nnz() for unweighted graphs.
double degree(const GraphSignal& g);

GraphSignal gen_erdos_renyi(Index n, double p, std::uint64_t seed);

/// Block `a` occupies a contiguous id range; pair (i, j) in blocks (a, b)
/// is an edge with probability p_matrix(a, b).
GraphSignal gen_sbm(std::span<const Index> block_sizes, const Matrix& p_matrix,
                    std::uint64_t seed);

/// Block id of every node for gen_sbm's layout.
std::vector<int> sbm_labels(std::span<const Index> block_sizes);

/// Bernoulli graph with edge probabilities clamp(edge_prob(i, j), 0, 1)
/// for i < j, where edge_prob comes from a dense symmetric matrix.
GraphSignal gen_from_probabilities(const Matrix& probabilities, std::uint64_t seed);

/// Uniform [0,1) features.
Matrix random_features(Index n, Index d, std::uint64_t seed);

/// Induced graph on the sampled nodes: a'(i,j) = a(n_i, n_j), s'_i = s_{n_i}.
GraphSignal sample_subgraph(const GraphSignal& g, const NodeSample& sample);

}  // namespace icg
