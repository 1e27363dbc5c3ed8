#include "icg/nn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "icg/adam.hpp"

namespace icg {
namespace {

constexpr std::array<char, 8> kParamsMagic = {'I', 'C', 'G', 'N', 'N', 'P', 'R', 'M'};
constexpr std::uint32_t kParamsVersion = 1;

Matrix glorot(Index rows, Index cols, Rng& rng) {
  Matrix w(rows, cols);
  if (w.size() == 0) return w;
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) w(i, j) = u(rng);
  }
  return w;
}

Matrix activate(const Matrix& z, Activation act) {
  if (act == Activation::identity) return z;
  return z.cwiseMax(0.0);
}

Matrix activation_grad(const Matrix& z, const Matrix& upstream, Activation act) {
  if (act == Activation::identity) return upstream;
  return (z.array() > 0.0).select(upstream, 0.0);
}

void add_bias(Matrix& m, const Vector& b) {
  if (b.size() > 0) m.rowwise() += b.transpose();
}

Vector column_sums(const Matrix& m) { return m.colwise().sum().transpose(); }

void check_inputs(const NnParams& params, const Matrix& q, const Matrix& s) {
  const NnShape& shape = params.shape;
  if (q.rows() != s.rows()) {
    throw std::invalid_argument("Q has " + std::to_string(q.rows()) + " rows but S has " +
                                std::to_string(s.rows()));
  }
  if (s.cols() != shape.input_dim) {
    throw std::invalid_argument("signal width " + std::to_string(s.cols()) +
                                " differs from the network input width " +
                                std::to_string(shape.input_dim));
  }
  if (q.cols() != shape.k) {
    throw std::invalid_argument("Q has " + std::to_string(q.cols()) + " communities, network expects " +
                                std::to_string(shape.k));
  }
}

NnCache start_cache(const NnParams& params, const Matrix& q, const Matrix& s) {
  NnCache cache;
  cache.owner = &params;
  cache.version = params.version;
  cache.q = q;
  cache.h.push_back(s);
  return cache;
}

void finish_layer(NnCache& cache, const NnParams& params, Matrix z, const ForwardOptions& options) {
  Matrix out = activate(z, params.shape.activation);
  Matrix mask;
  if (options.dropout > 0.0) {
    if (options.rng == nullptr) throw std::invalid_argument("dropout needs an RNG");
    const double keep = 1.0 - options.dropout;
    std::bernoulli_distribution coin(keep);
    mask.resize(out.rows(), out.cols());
    for (Index j = 0; j < mask.cols(); ++j) {
      for (Index i = 0; i < mask.rows(); ++i) mask(i, j) = coin(*options.rng) ? 1.0 / keep : 0.0;
    }
    out = out.cwiseProduct(mask);
  }
  cache.z.push_back(std::move(z));
  cache.mask.push_back(std::move(mask));
  cache.h.push_back(std::move(out));
}

void finish_logits(NnCache& cache, const NnParams& params) {
  cache.logits = cache.h.back() * params.w_out;
  add_bias(cache.logits, params.b_out);
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double peak = row.maxCoeff();
  return peak + std::log((row.array() - peak).exp().sum());
}

void check_rows(const std::vector<Index>& rows, const std::vector<int>& labels, Index n) {
  for (Index r : rows) {
    if (r < 0 || r >= n) throw std::invalid_argument("mask index out of range");
    if (labels[static_cast<std::size_t>(r)] < 0) {
      throw std::invalid_argument("masked node " + std::to_string(r) + " has no label");
    }
  }
}

}  // namespace

std::string to_string(Arch arch) { return arch == Arch::icgnn ? "icgnn" : "icgnn-u"; }

std::string to_string(Activation activation) {
  return activation == Activation::relu ? "relu" : "identity";
}

Arch parse_arch(const std::string& name) {
  if (name == "icgnn") return Arch::icgnn;
  if (name == "icgnn-u" || name == "icgnn_u") return Arch::icgnn_u;
  throw std::invalid_argument("unknown architecture '" + name + "' (expected icgnn or icgnn-u)");
}

NnParams NnParams::zeros_like() const {
  NnParams out = *this;
  visit_pairs(out, out, [](auto& x, const auto&) { x.setZero(); });
  out.version = 0;
  return out;
}

Index NnParams::parameter_count() const {
  Index total = 0;
  visit([&](const auto& t) { total += t.size(); });
  return total;
}

NnParams init_params(const NnShape& shape, std::uint64_t seed) {
  if (shape.input_dim < 0 || shape.hidden_dim < 1 || shape.num_layers < 0 || shape.k < 0) {
    throw std::invalid_argument("invalid network shape");
  }
  if (shape.num_classes < 2) throw std::invalid_argument("need at least two classes");
  if (shape.arch == Arch::icgnn && shape.k < 1) {
    throw std::invalid_argument("icgnn needs at least one community");
  }
  Rng rng = make_rng(seed, 11);
  NnParams params;
  params.shape = shape;
  const auto width = [&](Index l) { return l == 0 ? shape.input_dim : shape.hidden_dim; };
  const auto bias = [&](Index size) { return shape.use_bias ? Vector(Vector::Zero(size)) : Vector(0); };
  for (Index l = 0; l < shape.num_layers; ++l) {
    LayerParams p;
    const Index in = width(l);
    const Index out = shape.hidden_dim;
    p.w_self = glorot(in, out, rng);
    p.bias = bias(out);
    if (shape.arch == Arch::icgnn_u) {
      p.f = glorot(shape.k, in, rng);
      p.w_comm = glorot(in, out, rng);
    } else {
      const Index fw = width(std::max<Index>(l - 1, 0));
      if (!shape.theta_identity) {
        p.t1 = glorot(fw, fw, rng);
        p.c1 = bias(fw);
        p.t2 = glorot(fw, fw, rng);
        p.c2 = bias(fw);
      }
      p.w_comm = glorot(fw, out, rng);
    }
    params.layers.push_back(std::move(p));
  }
  params.w_out = glorot(width(shape.num_layers), shape.num_classes, rng);
  params.b_out = bias(shape.num_classes);
  return params;
}

NnCache forward_icgnn_u(const NnParams& params, const Matrix& q, const Matrix& s,
                        const ForwardOptions& options) {
  if (params.shape.arch != Arch::icgnn_u) throw std::invalid_argument("parameters are not icgnn-u");
  check_inputs(params, q, s);
  NnCache cache = start_cache(params, q, s);
  for (const LayerParams& p : params.layers) {
    Matrix z = cache.h.back() * p.w_self;
    if (q.cols() > 0) z.noalias() += q * (p.f * p.w_comm);
    add_bias(z, p.bias);
    finish_layer(cache, params, std::move(z), options);
  }
  finish_logits(cache, params);
  return cache;
}

NnCache forward_icgnn(const NnParams& params, const Matrix& q, const Matrix& s,
                      const ForwardOptions& options) {
  if (params.shape.arch != Arch::icgnn) throw std::invalid_argument("parameters are not icgnn");
  check_inputs(params, q, s);
  NnCache cache = start_cache(params, q, s);
  cache.analysis = options.analysis ? options.analysis : std::make_shared<const Analysis>(q, options.ridge);
  if (cache.analysis->q().rows() != q.rows() || cache.analysis->q().cols() != q.cols()) {
    throw std::invalid_argument("analysis was built for a different Q");
  }
  const Matrix f0 = cache.analysis->apply(s);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams& p = params.layers[l];
    Matrix f = l < 2 ? f0 : cache.analysis->apply(cache.h[l - 1]);
    Matrix theta;
    if (params.shape.theta_identity) {
      theta = f;
      cache.u.emplace_back();
      cache.v.emplace_back();
    } else {
      Matrix u = f * p.t1;
      add_bias(u, p.c1);
      Matrix v = activate(u, params.shape.activation);
      theta = v * p.t2;
      add_bias(theta, p.c2);
      cache.u.push_back(std::move(u));
      cache.v.push_back(std::move(v));
    }
    Matrix z = cache.h.back() * p.w_self;
    z.noalias() += q * (theta * p.w_comm);
    add_bias(z, p.bias);
    cache.f.push_back(std::move(f));
    cache.theta.push_back(std::move(theta));
    finish_layer(cache, params, std::move(z), options);
  }
  finish_logits(cache, params);
  return cache;
}

NnCache forward(const NnParams& params, const Matrix& q, const Matrix& s,
                const ForwardOptions& options) {
  return params.shape.arch == Arch::icgnn ? forward_icgnn(params, q, s, options)
                                          : forward_icgnn_u(params, q, s, options);
}

NnParams backward(const NnParams& params, const NnCache& cache, const Matrix& grad_logits) {
  if (cache.owner != &params || cache.version != params.version) {
    throw std::logic_error("stale cache: parameters changed since the forward pass");
  }
  if (grad_logits.rows() != cache.logits.rows() || grad_logits.cols() != cache.logits.cols()) {
    throw std::invalid_argument("gradient shape differs from the logits");
  }
  const Activation act = params.shape.activation;
  const bool icgnn = params.shape.arch == Arch::icgnn;
  const std::size_t depth = params.layers.size();
  NnParams grads = params.zeros_like();

  grads.w_out = cache.h.back().transpose() * grad_logits;
  if (grads.b_out.size() > 0) grads.b_out = column_sums(grad_logits);
  std::vector<Matrix> dh(depth + 1);
  for (std::size_t l = 0; l <= depth; ++l) dh[l] = Matrix::Zero(cache.h[l].rows(), cache.h[l].cols());
  dh[depth] = grad_logits * params.w_out.transpose();

  for (std::size_t l = depth; l-- > 0;) {
    const LayerParams& p = params.layers[l];
    LayerParams& g = grads.layers[l];
    Matrix d = dh[l + 1];
    if (cache.mask[l].size() > 0) d = d.cwiseProduct(cache.mask[l]);
    const Matrix dz = activation_grad(cache.z[l], d, act);
    g.w_self = cache.h[l].transpose() * dz;
    if (g.bias.size() > 0) g.bias = column_sums(dz);
    if (l > 0) dh[l] += dz * p.w_self.transpose();
    const Matrix dm = cache.q.transpose() * dz;
    if (!icgnn) {
      if (cache.q.cols() > 0) {
        g.w_comm = p.f.transpose() * dm;
        g.f = dm * p.w_comm.transpose();
      }
      continue;
    }
    g.w_comm = cache.theta[l].transpose() * dm;
    const Matrix dtheta = dm * p.w_comm.transpose();
    Matrix df;
    if (params.shape.theta_identity) {
      df = dtheta;
    } else {
      g.t2 = cache.v[l].transpose() * dtheta;
      if (g.c2.size() > 0) g.c2 = column_sums(dtheta);
      const Matrix du = activation_grad(cache.u[l], dtheta * p.t2.transpose(), act);
      g.t1 = cache.f[l].transpose() * du;
      if (g.c1.size() > 0) g.c1 = column_sums(du);
      df = du * p.t1.transpose();
    }
    if (l >= 2) dh[l - 1] += cache.analysis->apply_adjoint(df);
  }
  return grads;
}

CrossEntropy softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                                   const std::vector<Index>& rows) {
  CrossEntropy out;
  out.grad = Matrix::Zero(logits.rows(), logits.cols());
  if (rows.empty()) return out;
  const double scale = 1.0 / static_cast<double>(rows.size());
  for (Index r : rows) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= logits.cols()) throw std::invalid_argument("label out of range");
    const double lse = log_sum_exp(logits.row(r));
    out.loss += (lse - logits(r, label)) * scale;
    out.grad.row(r) = (logits.row(r).array() - lse).exp().matrix() * scale;
    out.grad(r, label) -= scale;
  }
  return out;
}

double accuracy(const Matrix& logits, const std::vector<int>& labels,
                const std::vector<Index>& rows) {
  if (rows.empty()) return 0.0;
  Index correct = 0;
  for (Index r : rows) {
    Index best = 0;
    logits.row(r).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

std::optional<double> binary_auc(const Matrix& logits, const std::vector<int>& labels,
                                 const std::vector<Index>& rows) {
  if (logits.cols() != 2) return std::nullopt;
  std::vector<std::pair<double, int>> scored;
  for (Index r : rows) scored.emplace_back(logits(r, 1) - logits(r, 0), labels[static_cast<std::size_t>(r)]);
  std::sort(scored.begin(), scored.end());
  double positives = 0.0;
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < scored.size()) {
    std::size_t j = i;
    while (j < scored.size() && scored[j].first == scored[i].first) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (scored[t].second == 1) {
        positives += 1.0;
        rank_sum += mid_rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scored.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) return std::nullopt;
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

void TrainConfig::validate(Index n) const {
  if (layers < 1) throw std::invalid_argument("layers must be >= 1");
  if (hidden < 1) throw std::invalid_argument("hidden must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (patience < 0) throw std::invalid_argument("patience must be >= 0");
  if (train.empty()) throw std::invalid_argument("train mask is empty");
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  int which = 0;
  for (const auto* mask : {&train, &val, &test}) {
    for (Index r : *mask) {
      if (r < 0 || r >= n) throw std::invalid_argument("mask index out of range");
      if (owner[static_cast<std::size_t>(r)] != -1) {
        throw std::invalid_argument("node " + std::to_string(r) + " appears in more than one mask");
      }
      owner[static_cast<std::size_t>(r)] = which;
    }
    ++which;
  }
}

nlohmann::json to_json(const TrainMetrics& metrics, bool include_curves) {
  nlohmann::json j{{"epochs_run", metrics.epochs_run},
                   {"best_epoch", metrics.best_epoch},
                   {"train_accuracy", metrics.train_accuracy},
                   {"val_accuracy", metrics.val_accuracy},
                   {"test_accuracy", metrics.test_accuracy}};
  j["val_auc"] = metrics.val_auc ? nlohmann::json(*metrics.val_auc) : nlohmann::json();
  j["test_auc"] = metrics.test_auc ? nlohmann::json(*metrics.test_auc) : nlohmann::json();
  if (include_curves) {
    j["train_loss"] = metrics.train_loss;
    j["train_acc"] = metrics.train_acc;
    j["val_acc"] = metrics.val_acc;
  }
  return j;
}

TrainResult train_node_classifier(const Matrix& q, const Matrix& s, const std::vector<int>& labels,
                                  Index num_classes, const TrainConfig& config) {
  const Index n = s.rows();
  config.validate(n);
  if (num_classes < 2) {
    throw std::invalid_argument("node classification needs at least two classes");
  }
  if (static_cast<Index>(labels.size()) != n) throw std::invalid_argument("one label per node required");
  for (const auto* mask : {&config.train, &config.val, &config.test}) check_rows(*mask, labels, n);
  for (Index r : config.train) {
    if (labels[static_cast<std::size_t>(r)] >= num_classes) throw std::invalid_argument("label out of range");
  }

  NnShape shape;
  shape.arch = config.arch;
  shape.input_dim = s.cols();
  shape.hidden_dim = config.hidden;
  shape.num_layers = config.layers;
  shape.num_classes = num_classes;
  shape.k = q.cols();
  shape.activation = config.activation;
  NnParams params = init_params(shape, derive_seed(config.seed, 0));

  ForwardOptions eval_options;
  eval_options.ridge = config.ridge;
  if (config.arch == Arch::icgnn) eval_options.analysis = std::make_shared<const Analysis>(q, config.ridge);
  ForwardOptions train_options = eval_options;
  Rng dropout_rng = make_rng(config.seed, 1);
  train_options.dropout = config.dropout;
  train_options.rng = &dropout_rng;

  Adam adam(AdamConfig{.lr = config.lr});
  std::vector<AdamMoments> moments;
  TrainMetrics metrics;

  const std::vector<Index>& select_rows = config.val.empty() ? config.train : config.val;
  const auto score = [&](const NnParams& p) {
    const NnCache cache = forward(p, q, s, eval_options);
    return std::pair{accuracy(cache.logits, labels, select_rows),
                     softmax_cross_entropy(cache.logits, labels, select_rows).loss};
  };
  NnParams best = params;
  auto [best_score, best_loss] = score(params);
  int best_epoch = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const NnCache cache = forward(params, q, s, train_options);
    const CrossEntropy ce = softmax_cross_entropy(cache.logits, labels, config.train);
    if (!std::isfinite(ce.loss)) throw std::runtime_error("training loss became non-finite");
    const NnParams grads = backward(params, cache, ce.grad);
    adam.begin_step();
    std::size_t slot = 0;
    visit_pairs(params, grads, [&](auto& p, const auto& g) {
      if (slot == moments.size()) moments.emplace_back();
      adam.update(p, g, moments[slot++]);
    });
    ++params.version;

    const NnCache eval = forward(params, q, s, eval_options);
    metrics.train_loss.push_back(ce.loss);
    metrics.train_acc.push_back(accuracy(eval.logits, labels, config.train));
    metrics.val_acc.push_back(config.val.empty() ? 0.0 : accuracy(eval.logits, labels, config.val));
    metrics.epochs_run = epoch;
    const double current = accuracy(eval.logits, labels, select_rows);
    const double current_loss = softmax_cross_entropy(eval.logits, labels, select_rows).loss;
    if (current > best_score || (current == best_score && current_loss < best_loss)) {
      best = params;
      best_score = current;
      best_loss = current_loss;
      best_epoch = epoch;
    } else if (config.patience > 0 && epoch - best_epoch >= config.patience) {
      break;
    }
  }

  const NnCache final_cache = forward(best, q, s, eval_options);
  metrics.best_epoch = best_epoch;
  metrics.train_accuracy = accuracy(final_cache.logits, labels, config.train);
  metrics.val_accuracy = accuracy(final_cache.logits, labels, config.val);
  metrics.test_accuracy = accuracy(final_cache.logits, labels, config.test);
  if (num_classes == 2) {
    metrics.val_auc = binary_auc(final_cache.logits, labels, config.val);
    metrics.test_auc = binary_auc(final_cache.logits, labels, config.test);
  }
  best.version = 0;
  return {std::move(best), std::move(metrics)};
}

TrainResult train_node_classifier(const GraphSignal& g, const Icg& icg, const TrainConfig& config,
                                  const std::vector<int>& labels, Index num_classes) {
  icg.check_shapes();
  if (icg.num_nodes() != g.num_nodes()) throw std::invalid_argument("ICG/graph node count mismatch");
  return train_node_classifier(materialize_q(icg), g.signal(), labels, num_classes, config);
}

TrainResult train_mlp_baseline(const Matrix& s, const std::vector<int>& labels, Index num_classes,
                               const TrainConfig& config) {
  TrainConfig mlp = config;
  mlp.arch = Arch::icgnn_u;
  return train_node_classifier(Matrix(s.rows(), 0), s, labels, num_classes, mlp);
}

void save_params(const NnParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kParamsMagic.data(), kParamsMagic.size());
  const std::uint32_t version = kParamsVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const NnShape& s = params.shape;
  const std::array<std::int64_t, 9> header = {static_cast<std::int64_t>(s.arch),
                                              s.input_dim,
                                              s.hidden_dim,
                                              s.num_layers,
                                              s.num_classes,
                                              s.k,
                                              static_cast<std::int64_t>(s.activation),
                                              s.use_bias ? 1 : 0,
                                              s.theta_identity ? 1 : 0};
  out.write(reinterpret_cast<const char*>(header.data()), sizeof(header));
  params.visit([&](const auto& t) {
    const std::array<std::int64_t, 2> dims = {t.rows(), t.cols()};
    out.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
    const Matrix values = t;
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(sizeof(double) * values.size()));
  });
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

NnParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kParamsMagic) throw std::runtime_error("not a network parameter file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kParamsVersion) throw std::runtime_error("unsupported parameter file version");
  std::array<std::int64_t, 9> header{};
  in.read(reinterpret_cast<char*>(header.data()), sizeof(header));
  if (!in) throw std::runtime_error("truncated parameter file");
  NnShape shape;
  shape.arch = static_cast<Arch>(header[0]);
  shape.input_dim = header[1];
  shape.hidden_dim = header[2];
  shape.num_layers = header[3];
  shape.num_classes = header[4];
  shape.k = header[5];
  shape.activation = static_cast<Activation>(header[6]);
  shape.use_bias = header[7] != 0;
  shape.theta_identity = header[8] != 0;
  NnParams params = init_params(shape, 0);
  visit_pairs(params, params, [&](auto& t, const auto&) {
    std::array<std::int64_t, 2> dims{};
    in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
    if (!in || dims[0] != t.rows() || dims[1] != t.cols()) {
      throw std::runtime_error("parameter file does not match its own header");
    }
    Matrix values(dims[0], dims[1]);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(sizeof(double) * values.size()));
    if (!in) throw std::runtime_error("truncated parameter file");
    t = values;
  });
  return params;
}

}  // namespace icg
