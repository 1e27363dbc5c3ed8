#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icg/graph.hpp"
#include "icg/model.hpp"
#include "icg/random.hpp"
#include "json.hpp"

namespace icg {

/// icgnn:   H' = act(H W1 + Q Theta(F) W2 + b), F = Q^+ of the previous input
/// icgnn_u: H' = act(H Ws + Q F W + b), F learned per layer
enum class Arch { icgnn, icgnn_u };
enum class Activation { relu, identity };

std::string to_string(Arch arch);
std::string to_string(Activation activation);
Arch parse_arch(const std::string& name);

struct LayerParams {
  Matrix w_self;  // D_l x D_{l+1}
  Matrix w_comm;  // width of the community features x D_{l+1}
  Vector bias;    // D_{l+1}
  Matrix f;       // icgnn_u: K x D_l
  Matrix t1;      // icgnn: Theta first layer
  Vector c1;
  Matrix t2;      // icgnn: Theta second layer
  Vector c2;
};

struct NnShape {
  Arch arch = Arch::icgnn_u;
  Index input_dim = 0;
  Index hidden_dim = 64;
  Index num_layers = 3;
  Index num_classes = 2;
  Index k = 0;
  Activation activation = Activation::relu;
  bool use_bias = true;
  /// icgnn only: Theta(F) = F instead of the two-layer network.
  bool theta_identity = false;
};

struct NnParams {
  NnShape shape;
  std::vector<LayerParams> layers;
  Matrix w_out;  // D_L x C
  Vector b_out;
  /// Bumped by every optimizer step; caches remember the value they saw.
  std::uint64_t version = 0;

  /// Same layout with every tensor zeroed.
  NnParams zeros_like() const;
  /// Calls fn(tensor) for every tensor, in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn) const;
  Index parameter_count() const;
};

/// Glorot-uniform weights, zero biases, seeded.
NnParams init_params(const NnShape& shape, std::uint64_t seed);

struct NnCache {
  const NnParams* owner = nullptr;
  std::uint64_t version = 0;
  std::shared_ptr<const Analysis> analysis;
  Matrix q;
  std::vector<Matrix> h;      // h[0] = S, h[l+1] = output of layer l (after dropout)
  std::vector<Matrix> z;      // pre-activation of layer l
  std::vector<Matrix> mask;   // dropout scale per layer, empty without dropout
  std::vector<Matrix> f;      // community features entering layer l
  std::vector<Matrix> u;      // Theta pre-activation
  std::vector<Matrix> v;      // Theta hidden
  std::vector<Matrix> theta;  // Theta output
  Matrix logits;
};

struct ForwardOptions {
  double dropout = 0.0;
  Rng* rng = nullptr;
  /// Factorisation of Q^T Q for icgnn; built from q when absent.
  std::shared_ptr<const Analysis> analysis;
  double ridge = kDefaultRidge;
};

NnCache forward_icgnn(const NnParams& params, const Matrix& q, const Matrix& s,
                      const ForwardOptions& options = {});
NnCache forward_icgnn_u(const NnParams& params, const Matrix& q, const Matrix& s,
                        const ForwardOptions& options = {});
NnCache forward(const NnParams& params, const Matrix& q, const Matrix& s,
                const ForwardOptions& options = {});

/// Gradients of a scalar loss given d loss / d logits. Q and its analysis
/// are constants. Throws if the cache does not belong to this exact
/// parameter state.
NnParams backward(const NnParams& params, const NnCache& cache, const Matrix& grad_logits);

struct CrossEntropy {
  double loss = 0.0;
  Matrix grad;  // same shape as the logits, zero outside the rows used
};

/// Mean softmax cross-entropy over `rows`.
CrossEntropy softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                                   const std::vector<Index>& rows);

double accuracy(const Matrix& logits, const std::vector<int>& labels,
                const std::vector<Index>& rows);
/// ROC AUC of the class-1 score; empty when a class is missing in `rows`.
std::optional<double> binary_auc(const Matrix& logits, const std::vector<int>& labels,
                                 const std::vector<Index>& rows);

struct TrainConfig {
  Arch arch = Arch::icgnn_u;
  Index layers = 3;
  Index hidden = 64;
  double lr = 0.003;
  int epochs = 300;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  /// Stop after this many epochs without a better validation score; 0 disables.
  int patience = 100;
  Activation activation = Activation::relu;
  double ridge = kDefaultRidge;
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;

  void validate(Index n) const;
};

struct TrainMetrics {
  std::vector<double> train_loss;
  std::vector<double> train_acc;
  std::vector<double> val_acc;
  int epochs_run = 0;
  int best_epoch = -1;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> val_auc;
  std::optional<double> test_auc;
};

nlohmann::json to_json(const TrainMetrics& metrics, bool include_curves = true);

struct TrainResult {
  NnParams params;
  TrainMetrics metrics;
};

/// Full-batch training with Adam and early stopping on validation accuracy;
/// the returned parameters are the best validation checkpoint. Never touches
/// the edge set. Labels outside the masks are ignored.
TrainResult train_node_classifier(const Matrix& q, const Matrix& s, const std::vector<int>& labels,
                                  Index num_classes, const TrainConfig& config);
TrainResult train_node_classifier(const GraphSignal& g, const Icg& icg, const TrainConfig& config,
                                  const std::vector<int>& labels, Index num_classes);

/// Features-only baseline: icgnn_u with no communities.
TrainResult train_mlp_baseline(const Matrix& s, const std::vector<int>& labels, Index num_classes,
                               const TrainConfig& config);

void save_params(const NnParams& params, const std::filesystem::path& path);
NnParams load_params(const std::filesystem::path& path);

template <typename Fn>
void NnParams::visit(Fn&& fn) const {
  for (const LayerParams& l : layers) {
    fn(l.w_self);
    fn(l.w_comm);
    fn(l.bias);
    fn(l.f);
    fn(l.t1);
    fn(l.c1);
    fn(l.t2);
    fn(l.c2);
  }
  fn(w_out);
  fn(b_out);
}

/// Calls fn(tensor_a, tensor_b) for matching tensors of two parameter sets.
template <typename Fn>
void visit_pairs(NnParams& a, const NnParams& b, Fn&& fn) {
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    LayerParams& x = a.layers[i];
    const LayerParams& y = b.layers[i];
    fn(x.w_self, y.w_self);
    fn(x.w_comm, y.w_comm);
    fn(x.bias, y.bias);
    fn(x.f, y.f);
    fn(x.t1, y.t1);
    fn(x.c1, y.c1);
    fn(x.t2, y.t2);
    fn(x.c2, y.c2);
  }
  fn(a.w_out, b.w_out);
  fn(a.b_out, b.b_out);
}

}  // namespace icg
