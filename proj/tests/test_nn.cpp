#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "icg/nn.hpp"
#include "test_util.hpp"

namespace icg {
namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng = make_rng(seed, 3);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

Matrix random_q(Index n, Index k, std::uint64_t seed) {
  Matrix q = random_matrix(n, k, seed);
  return q.unaryExpr([](double x) { return sigmoid(x); });
}

NnShape make_shape(Arch arch, Index input, Index hidden, Index layers, Index classes, Index k) {
  NnShape shape;
  shape.arch = arch;
  shape.input_dim = input;
  shape.hidden_dim = hidden;
  shape.num_layers = layers;
  shape.num_classes = classes;
  shape.k = k;
  return shape;
}

void randomize(NnParams& params, std::uint64_t seed, double scale = 0.5) {
  std::uint64_t stream = 0;
  visit_pairs(params, params, [&](auto& t, const auto&) {
    t = random_matrix(t.rows(), t.cols(), derive_seed(seed, ++stream), scale);
  });
}

double pairing(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

TEST(Nn, ZeroWeightsGiveZeroLogits) {
  for (Arch arch : {Arch::icgnn, Arch::icgnn_u}) {
    NnParams params = init_params(make_shape(arch, 3, 4, 2, 3, 2), 1);
    params = params.zeros_like();
    const NnCache cache = forward(params, random_q(10, 2, 2), random_matrix(10, 3, 3));
    EXPECT_EQ(cache.logits, Matrix::Zero(10, 3));
  }
}

TEST(Nn, IdentityCommunitiesWithZeroCommunityWeightsIsPerNodeMlp) {
  const Index n = 12;
  NnShape shape = make_shape(Arch::icgnn, 3, 5, 2, 2, n);
  shape.theta_identity = true;
  NnParams params = init_params(shape, 4);
  for (LayerParams& layer : params.layers) layer.w_comm.setZero();
  const Matrix s = random_matrix(n, 3, 5);
  const NnCache cache = forward(params, Matrix::Identity(n, n), s);
  Matrix h = s;
  for (const LayerParams& layer : params.layers) {
    h = ((h * layer.w_self).rowwise() + layer.bias.transpose()).cwiseMax(0.0);
  }
  const Matrix expected = (h * params.w_out).rowwise() + params.b_out.transpose();
  EXPECT_LE((cache.logits - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nn, SingleLayerMatchesDenseOracle) {
  const Index n = 25;
  const Index k = 3;
  const Index d = 4;
  const Matrix q = random_q(n, k, 6);
  const Matrix s = random_matrix(n, d, 7);
  const Matrix pinv = (q.transpose() * q).inverse() * q.transpose();

  NnShape shape = make_shape(Arch::icgnn, d, 6, 1, 3, k);
  shape.activation = Activation::identity;
  NnParams params = init_params(shape, 8);
  randomize(params, 9);
  const LayerParams& p = params.layers[0];
  ForwardOptions options;
  options.ridge = 0.0;
  const Matrix f = pinv * s;
  const Matrix theta = (((f * p.t1).rowwise() + p.c1.transpose()) * p.t2).rowwise() + p.c2.transpose();
  const Matrix h = (s * p.w_self + q * theta * p.w_comm).rowwise() + p.bias.transpose();
  const Matrix expected = (h * params.w_out).rowwise() + params.b_out.transpose();
  EXPECT_LE((forward(params, q, s, options).logits - expected).cwiseAbs().maxCoeff(), 1e-10);

  NnShape ushape = shape;
  ushape.arch = Arch::icgnn_u;
  NnParams uparams = init_params(ushape, 10);
  randomize(uparams, 11);
  const LayerParams& up = uparams.layers[0];
  const Matrix uh = (s * up.w_self + q * up.f * up.w_comm).rowwise() + up.bias.transpose();
  const Matrix uexpected = (uh * uparams.w_out).rowwise() + uparams.b_out.transpose();
  EXPECT_LE((forward(uparams, q, s).logits - uexpected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Nn, ZeroCommunityFeaturesGivePerNodeNetwork) {
  const Matrix q = random_q(15, 3, 12);
  const Matrix s = random_matrix(15, 2, 13);
  NnParams params = init_params(make_shape(Arch::icgnn_u, 2, 4, 2, 2, 3), 14);
  for (LayerParams& layer : params.layers) layer.f.setZero();
  const Matrix logits = forward(params, q, s).logits;
  const Matrix other = forward(params, random_q(15, 3, 15), s).logits;
  EXPECT_LE((logits - other).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Nn, ScalarCaseByHand) {
  NnShape shape = make_shape(Arch::icgnn, 1, 1, 1, 2, 1);
  shape.activation = Activation::identity;
  shape.theta_identity = true;
  NnParams params = init_params(shape, 0);
  params.layers[0].w_self(0, 0) = 2.0;
  params.layers[0].w_comm(0, 0) = 3.0;
  params.layers[0].bias(0) = 0.5;
  params.w_out << 1.0, -1.0;
  params.b_out << 0.25, 0.0;
  Matrix q(1, 1);
  q << 0.5;
  Matrix s(1, 1);
  s << 4.0;
  ForwardOptions options;
  options.ridge = 0.0;
  // F = s / q = 8, h = 2*4 + 0.5*8*3 + 0.5 = 20.5
  const Matrix logits = forward(params, q, s, options).logits;
  EXPECT_NEAR(logits(0, 0), 20.75, 1e-12);
  EXPECT_NEAR(logits(0, 1), -20.5, 1e-12);
}

TEST(Nn, ZeroUpstreamGradientGivesZeroGradients) {
  for (Arch arch : {Arch::icgnn, Arch::icgnn_u}) {
    const NnParams params = init_params(make_shape(arch, 3, 4, 3, 2, 2), 16);
    const NnCache cache = forward(params, random_q(10, 2, 17), random_matrix(10, 3, 18));
    const NnParams grads = backward(params, cache, Matrix::Zero(10, 2));
    grads.visit([](const auto& t) { EXPECT_TRUE(t.isZero(0.0)); });
  }
}

void check_finite_differences(Arch arch, Activation activation) {
  const Index n = 30;
  const Index k = 4;
  const Matrix q = random_q(n, k, 19);
  const Matrix s = random_matrix(n, 3, 20);
  const Matrix upstream = random_matrix(n, 3, 21);
  NnShape shape = make_shape(arch, 3, 5, 3, 3, k);
  shape.activation = activation;
  NnParams params = init_params(shape, 22);
  randomize(params, 23);
  const auto options = [&] {
    ForwardOptions o;
    o.analysis = std::make_shared<const Analysis>(q);
    return o;
  }();
  const NnParams grads = backward(params, forward(params, q, s, options), upstream);

  const double h = 1e-6;
  std::vector<Matrix> analytic_storage;
  grads.visit([&](const auto& t) { analytic_storage.emplace_back(t); });
  std::size_t slot = 0;
  Index checked = 0;
  visit_pairs(params, params, [&](auto& t, const auto&) {
    const Matrix& g = analytic_storage[slot++];
    for (Index i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double plus = pairing(forward(params, q, s, options).logits, upstream);
      t.data()[i] = saved - h;
      const double minus = pairing(forward(params, q, s, options).logits, upstream);
      t.data()[i] = saved;
      const double fd = (plus - minus) / (2 * h);
      const double a = g.data()[i];
      EXPECT_LE(std::abs(a - fd), 1e-4 * std::max(std::abs(a), std::abs(fd)) + 1e-7)
          << to_string(arch) << " tensor " << slot - 1 << " entry " << i << ": " << a << " vs " << fd;
      ++checked;
    }
  });
  EXPECT_EQ(checked, params.parameter_count());
}

TEST(NnBackward, FiniteDifferencesIcgnn) {
  check_finite_differences(Arch::icgnn, Activation::relu);
  check_finite_differences(Arch::icgnn, Activation::identity);
}

TEST(NnBackward, FiniteDifferencesIcgnnU) {
  check_finite_differences(Arch::icgnn_u, Activation::relu);
  check_finite_differences(Arch::icgnn_u, Activation::identity);
}

TEST(NnBackward, ZeroCommunityWeightsGiveZeroThetaGradients) {
  NnParams params = init_params(make_shape(Arch::icgnn, 3, 4, 2, 2, 3), 24);
  for (LayerParams& layer : params.layers) layer.w_comm.setZero();
  const NnCache cache = forward(params, random_q(12, 3, 25), random_matrix(12, 3, 26));
  const NnParams grads = backward(params, cache, random_matrix(12, 2, 27));
  for (const LayerParams& layer : grads.layers) {
    EXPECT_TRUE(layer.t1.isZero(0.0));
    EXPECT_TRUE(layer.t2.isZero(0.0));
    EXPECT_TRUE(layer.c1.isZero(0.0));
    EXPECT_TRUE(layer.c2.isZero(0.0));
    EXPECT_FALSE(layer.w_comm.isZero(0.0));
  }
}

TEST(NnBackward, StaleCacheThrows) {
  NnParams params = init_params(make_shape(Arch::icgnn_u, 3, 4, 2, 2, 2), 28);
  const NnCache cache = forward(params, random_q(8, 2, 29), random_matrix(8, 3, 30));
  const Matrix upstream = Matrix::Ones(8, 2);
  EXPECT_NO_THROW(backward(params, cache, upstream));
  ++params.version;
  EXPECT_THROW(backward(params, cache, upstream), std::logic_error);
  const NnParams copy = params;
  EXPECT_THROW(backward(copy, cache, upstream), std::logic_error);
}

TEST(Nn, LinearInSignalWithoutBiasOrNonlinearity) {
  NnShape shape = make_shape(Arch::icgnn, 3, 4, 3, 2, 3);
  shape.activation = Activation::identity;
  shape.use_bias = false;
  const NnParams params = init_params(shape, 31);
  const Matrix q = random_q(20, 3, 32);
  const Matrix s1 = random_matrix(20, 3, 33);
  const Matrix s2 = random_matrix(20, 3, 34);
  const Matrix combined = forward(params, q, 2.0 * s1 - 0.5 * s2).logits;
  const Matrix separate = 2.0 * forward(params, q, s1).logits - 0.5 * forward(params, q, s2).logits;
  EXPECT_LE((combined - separate).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Nn, SignalReachesNonAdjacentNodeInSameCommunity) {
  Matrix q = Matrix::Zero(6, 2);
  q(0, 0) = q(5, 0) = q(1, 0) = 1.0;
  q(2, 1) = q(3, 1) = q(4, 1) = 1.0;
  NnShape shape = make_shape(Arch::icgnn, 2, 4, 1, 2, 2);
  shape.activation = Activation::identity;
  const NnParams params = init_params(shape, 35);
  const Matrix s = random_matrix(6, 2, 36);
  Matrix moved = s;
  moved(0, 0) += 1.0;
  const Matrix before = forward(params, q, s).logits;
  const Matrix after = forward(params, q, moved).logits;
  EXPECT_GT((after.row(5) - before.row(5)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((after.row(3) - before.row(3)).cwiseAbs().maxCoeff(), 1e-12);
}

std::vector<Index> range(Index begin, Index end) {
  std::vector<Index> out;
  for (Index i = begin; i < end; ++i) out.push_back(i);
  return out;
}

TEST(NnTrain, ConstantLabelsFitPerfectly) {
  const Index n = 40;
  TrainConfig config;
  config.arch = Arch::icgnn;
  config.layers = 2;
  config.hidden = 8;
  config.lr = 0.01;
  config.epochs = 50;
  config.train = range(0, 30);
  config.val = range(30, 40);
  const std::vector<int> labels(n, 1);
  const TrainResult result = train_node_classifier(random_q(n, 3, 37), random_matrix(n, 4, 38), labels, 2, config);
  EXPECT_EQ(result.metrics.train_accuracy, 1.0);
  EXPECT_LE(result.metrics.epochs_run, 50);
  EXPECT_FALSE(result.metrics.val_auc.has_value());
}

TEST(NnTrain, NoEpochsGivesChanceAccuracy) {
  const Index n = 800;
  Rng rng = make_rng(39);
  std::uniform_int_distribution<int> pick(0, 3);
  std::vector<int> labels(n);
  for (int& l : labels) l = pick(rng);
  TrainConfig config;
  config.epochs = 0;
  config.train = range(0, n);
  const TrainResult result = train_node_classifier(random_q(n, 3, 40), random_matrix(n, 4, 41), labels, 4, config);
  EXPECT_EQ(result.metrics.epochs_run, 0);
  EXPECT_EQ(result.metrics.best_epoch, 0);
  EXPECT_NEAR(result.metrics.train_accuracy, 0.25, 0.08);
}

TEST(NnTrain, RejectsBadInputs) {
  TrainConfig config;
  config.train = range(0, 5);
  const std::vector<int> labels(10, 0);
  const Matrix q = random_q(10, 2, 42);
  const Matrix s = random_matrix(10, 2, 43);
  EXPECT_THROW(train_node_classifier(q, s, labels, 1, config), std::invalid_argument);
  config.val = {4, 6};
  EXPECT_THROW(train_node_classifier(q, s, labels, 2, config), std::invalid_argument);
  config.val = {12};
  EXPECT_THROW(train_node_classifier(q, s, labels, 2, config), std::invalid_argument);
}

TEST(NnTrain, LearnsCommunityLabelsThatFeaturesCannotExplain) {
  const Index n = 120;
  Matrix q = Matrix::Constant(n, 2, 0.05);
  std::vector<int> labels(n);
  for (Index i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 2);
    q(i, labels[i]) = 0.95;
  }
  const Matrix s = random_matrix(n, 3, 44);
  TrainConfig config;
  config.arch = Arch::icgnn_u;
  config.layers = 2;
  config.hidden = 8;
  config.lr = 0.01;
  config.epochs = 200;
  config.train = range(0, 60);
  config.val = range(60, 90);
  config.test = range(90, n);
  const TrainResult icg = train_node_classifier(q, s, labels, 2, config);
  EXPECT_GE(icg.metrics.test_accuracy, 0.95);
  ASSERT_TRUE(icg.metrics.test_auc.has_value());
  EXPECT_GE(*icg.metrics.test_auc, 0.95);
  const TrainResult mlp = train_mlp_baseline(s, labels, 2, config);
  EXPECT_LE(mlp.metrics.test_accuracy, 0.75);
}

TEST(NnMetrics, AucHandlesTies) {
  Matrix logits(4, 2);
  logits << 0, 1, 0, 1, 0, 0, 0, 2;
  const std::vector<int> labels = {1, 0, 0, 1};
  const auto auc = binary_auc(logits, labels, range(0, 4));
  ASSERT_TRUE(auc.has_value());
  EXPECT_DOUBLE_EQ(*auc, 0.875);
}

TEST(NnParamsFile, RoundTrip) {
  NnShape shape = make_shape(Arch::icgnn, 3, 4, 2, 3, 2);
  const NnParams params = init_params(shape, 45);
  const auto path = std::filesystem::temp_directory_path() / "icg_nn_params_roundtrip.bin";
  save_params(params, path);
  const NnParams loaded = load_params(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.parameter_count(), params.parameter_count());
  const Matrix q = random_q(7, 2, 46);
  const Matrix s = random_matrix(7, 3, 47);
  EXPECT_EQ(forward(loaded, q, s).logits, forward(params, q, s).logits);
}

}  // namespace
}  // namespace icg
