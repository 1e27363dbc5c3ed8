#include "icg/fit.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "icg/adam.hpp"
#include "icg/norms.hpp"
#include "icg/random.hpp"

namespace icg {
namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_compatible(const GraphSignal& g, const Icg& icg) {
  icg.check_shapes();
  if (icg.num_nodes() != g.num_nodes()) {
    throw std::invalid_argument("ICG has " + std::to_string(icg.num_nodes()) +
                                " nodes, graph has " + std::to_string(g.num_nodes()));
  }
  if (icg.feature_dim() != g.feature_dim()) {
    throw std::invalid_argument("ICG feature dim " + std::to_string(icg.feature_dim()) +
                                " differs from signal dim " + std::to_string(g.feature_dim()));
  }
}

double squared_entries(const CsrMatrix& a) {
  long double sum = 0.0L;
  for (Index k = 0; k < a.nonZeros(); ++k) {
    const long double v = a.valuePtr()[k];
    sum += v * v;
  }
  return static_cast<double>(sum);
}

Matrix features_for(const GraphSignal& g, const Matrix& q, double ridge) {
  if (g.feature_dim() == 0) return Matrix(q.cols(), 0);
  return analyze(q, g.signal(), ridge).values;
}

bool all_finite(const IcgGradients& grads) {
  return grads.logits.allFinite() && grads.r.allFinite() && grads.f.allFinite();
}

}  // namespace

LossParts loss_efficient(const GraphSignal& g, const Icg& icg, double lambda) {
  check_compatible(g, icg);
  const Index n = g.num_nodes();
  const Index k = icg.num_communities();
  const Index d = g.feature_dim();
  LossParts out;
  if (n == 0) return out;

  const RowMajorMatrix q = materialize_q(icg);
  const Vector& r = icg.r;

  std::vector<long double> gram(static_cast<std::size_t>(k * k), 0.0L);
  for (Index i = 0; i < n; ++i) {
    const double* qi = q.row(i).data();
    for (Index a = 0; a < k; ++a) {
      const long double qa = qi[a];
      for (Index b = a; b < k; ++b) gram[static_cast<std::size_t>(a * k + b)] += qa * qi[b];
    }
  }
  long double trace = 0.0L;
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) {
      const long double gab = a <= b ? gram[static_cast<std::size_t>(a * k + b)]
                                     : gram[static_cast<std::size_t>(b * k + a)];
      trace += static_cast<long double>(r(a)) * r(b) * gab * gab;
    }
  }

  const CsrMatrix& adj = g.adjacency();
  long double a_sq = 0.0L;
  long double edge = 0.0L;
  for (Index i = 0; i < n; ++i) {
    const double* qi = q.row(i).data();
    for (CsrMatrix::InnerIterator it(adj, i); it; ++it) {
      const double* qj = q.row(it.col()).data();
      long double c = 0.0L;
      for (Index a = 0; a < k; ++a) c += static_cast<long double>(qi[a]) * r(a) * qj[a];
      const long double w = it.value();
      a_sq += w * w;
      edge += w * c;
    }
  }
  const long double nn = static_cast<long double>(n) * static_cast<long double>(n);
  out.graph = static_cast<double>((trace + a_sq - 2.0L * edge) / nn);

  if (d > 0) {
    const Matrix& s = g.signal();
    long double sum = 0.0L;
    for (Index i = 0; i < n; ++i) {
      for (Index c = 0; c < d; ++c) {
        long double p = 0.0L;
        for (Index a = 0; a < k; ++a) p += static_cast<long double>(q(i, a)) * icg.f(a, c);
        const long double diff = s(i, c) - p;
        sum += diff * diff;
      }
    }
    out.signal = static_cast<double>(sum / static_cast<long double>(n));
  }
  out.total = out.graph + lambda * out.signal;
  return out;
}

std::pair<LossParts, IcgGradients> loss_and_grad(const GraphSignal& g, const Icg& icg,
                                                 double lambda) {
  check_compatible(g, icg);
  const Index n = g.num_nodes();
  const Index k = icg.num_communities();
  const Index d = g.feature_dim();
  LossParts loss;
  IcgGradients grads;
  grads.q = Matrix::Zero(n, k);
  grads.logits = Matrix::Zero(n, k);
  grads.r = Vector::Zero(k);
  grads.f = Matrix::Zero(k, d);
  if (n == 0) return {loss, grads};

  const double nd = static_cast<double>(n);
  const Matrix q = materialize_q(icg);
  const Vector& r = icg.r;
  const Matrix aq = g.adjacency() * q;
  const Matrix gram = q.transpose() * q;
  const Matrix gram_sq = gram.cwiseProduct(gram);
  const Vector edge_diag = q.cwiseProduct(aq).colwise().sum().transpose();

  const double trace = r.dot(gram_sq * r);
  const double edge = r.dot(edge_diag);
  loss.graph = (trace + squared_entries(g.adjacency()) - 2.0 * edge) / (nd * nd);

  // (C - A) Q without forming C.
  const Matrix residual_q = q * (r.asDiagonal() * gram) - aq;
  grads.q = (4.0 / (nd * nd)) * residual_q * r.asDiagonal();
  grads.r = (2.0 / (nd * nd)) * (gram_sq * r - edge_diag);

  if (d > 0) {
    const Matrix signal_residual = q * icg.f - g.signal();
    loss.signal = signal_residual.squaredNorm() / nd;
    if (lambda != 0.0) {
      const double scale = lambda * 2.0 / nd;
      grads.q += scale * signal_residual * icg.f.transpose();
      grads.f = scale * q.transpose() * signal_residual;
    }
  }
  loss.total = loss.graph + lambda * loss.signal;
  grads.logits = grads.q.cwiseProduct(q.cwiseProduct((1.0 - q.array()).matrix()));
  return {loss, grads};
}

IcgGradients grad_all(const GraphSignal& g, const Icg& icg, double lambda) {
  return loss_and_grad(g, icg, lambda).second;
}

std::array<SoftCommunity, 3> eigen_soft_indicators(double lambda, const Vector& phi) {
  const Vector pos = phi.cwiseMax(0.0);
  const Vector neg = (-phi).cwiseMax(0.0);
  const Vector mag = phi.cwiseAbs();
  const auto indicator = [&](const Vector& part, double factor) {
    SoftCommunity c;
    const double peak = part.size() > 0 ? part.maxCoeff() : 0.0;
    if (peak > 0.0) {
      c.q = part / peak;
      c.r = factor * lambda * peak * peak;
    } else {
      c.q = Vector::Constant(part.size(), 0.5);
      c.r = 0.0;
    }
    return c;
  };
  return {indicator(pos, 2.0), indicator(neg, 2.0), indicator(mag, -1.0)};
}

Icg init_eigen(const GraphSignal& g, Index k, std::uint64_t seed, double ridge,
               EigenInitInfo* info) {
  if (k < 1) throw std::invalid_argument("init_eigen: k must be >= 1");
  const Index n = g.num_nodes();
  const Index pairs = std::min(k / 3, n);
  Icg icg;
  icg.logits = Matrix::Zero(n, k);
  icg.r = Vector::Zero(k);

  EigenPairs eig;
  eig.converged = true;
  if (pairs > 0) eig = lanczos_topk(g.adjacency(), pairs, 500, derive_seed(seed, 0));
  for (Index p = 0; p < pairs; ++p) {
    const auto parts = eigen_soft_indicators(eig.values(p), eig.vectors.col(p));
    for (Index t = 0; t < 3; ++t) {
      const SoftCommunity& c = parts[static_cast<std::size_t>(t)];
      const Index col = 3 * p + t;
      icg.logits.col(col) = c.q.unaryExpr(
          [](double x) { return logit(std::clamp(x, kLogitClamp, 1.0 - kLogitClamp)); });
      icg.r(col) = c.r;
    }
  }
  Rng rng = make_rng(seed, 1);
  std::normal_distribution<double> small(0.0, 0.1);
  for (Index col = 3 * pairs; col < k; ++col) {
    for (Index i = 0; i < n; ++i) icg.logits(i, col) = small(rng);
  }
  icg.f = features_for(g, materialize_q(icg), ridge);
  if (info != nullptr) {
    info->eigenpairs = pairs;
    info->converged = eig.converged;
  }
  return icg;
}

Icg init_random(const GraphSignal& g, Index k, std::uint64_t seed, double ridge) {
  if (k < 1) throw std::invalid_argument("init_random: k must be >= 1");
  const Index n = g.num_nodes();
  Rng rng = make_rng(seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> magnitude(-0.1, 0.1);
  Icg icg;
  icg.logits.resize(n, k);
  for (Index col = 0; col < k; ++col) {
    for (Index i = 0; i < n; ++i) icg.logits(i, col) = normal(rng);
  }
  icg.r.resize(k);
  for (Index col = 0; col < k; ++col) icg.r(col) = magnitude(rng);
  icg.f = features_for(g, materialize_q(icg), ridge);
  return icg;
}

std::string to_string(Optimizer optimizer) {
  return optimizer == Optimizer::adam ? "adam" : "gd";
}

std::string to_string(InitMethod init) { return init == InitMethod::eigen ? "eigen" : "random"; }

void FitConfig::validate() const {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be >= 0");
  if (track_cut_norm_every && *track_cut_norm_every < 1) {
    throw std::invalid_argument("track_cut_norm_every must be >= 1");
  }
  if (cut_norm_restarts < 1) throw std::invalid_argument("cut_norm_restarts must be >= 1");
}

double frobenius_error(const LossParts& loss) { return std::sqrt(std::max(loss.total, 0.0)); }

nlohmann::json to_json(const FitReport& report, bool include_traces) {
  const auto parts = [](const LossParts& l) {
    return nlohmann::json{{"graph", l.graph}, {"signal", l.signal}, {"total", l.total}};
  };
  nlohmann::json j{{"initial_loss", parts(report.initial)},
                   {"final_loss", parts(report.final)},
                   {"final_frobenius_error", report.final_frobenius_error},
                   {"epochs_run", report.total_loss.size()},
                   {"eigen_converged", report.eigen_converged}};
  if (include_traces) {
    j["graph_loss"] = report.graph_loss;
    j["signal_loss"] = report.signal_loss;
    j["total_loss"] = report.total_loss;
  }
  if (!report.cut_norm.empty()) {
    nlohmann::json trace = nlohmann::json::array();
    for (const CutTracePoint& p : report.cut_norm) {
      trace.push_back({{"epoch", p.epoch}, {"value", p.value}});
    }
    j["cut_norm_trace"] = trace;
  }
  double total_seconds = 0.0;
  for (double s : report.epoch_seconds) total_seconds += s;
  j["timing"] = {{"total_seconds", total_seconds}};
  if (include_traces) j["timing"]["epoch_seconds"] = report.epoch_seconds;
  return j;
}

std::pair<Icg, FitReport> fit(const GraphSignal& g, const FitConfig& config) {
  config.validate();
  EigenInitInfo info;
  Icg init = config.init == InitMethod::eigen
                 ? init_eigen(g, config.k, config.seed, config.ridge, &info)
                 : init_random(g, config.k, config.seed, config.ridge);
  auto result = fit_from(g, config, std::move(init));
  result.second.eigen_converged = info.converged;
  return result;
}

std::pair<Icg, FitReport> fit_from(const GraphSignal& g, const FitConfig& config, Icg icg) {
  config.validate();
  check_compatible(g, icg);
  FitReport report;
  report.initial = loss_efficient(g, icg, config.lambda);

  Adam adam(AdamConfig{.lr = config.lr});
  AdamMoments m_logits;
  AdamMoments m_r;
  AdamMoments m_f;
  const double e = std::max<double>(static_cast<double>(g.nnz()), 1.0);
  using Clock = std::chrono::steady_clock;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = Clock::now();
    auto [loss, grads] = loss_and_grad(g, icg, config.lambda);
    if (!std::isfinite(loss.total) || !all_finite(grads)) {
      std::ostringstream msg;
      msg << "non-finite loss or gradient at epoch " << epoch << " (lr " << config.lr
          << " is probably too high)";
      throw std::runtime_error(msg.str());
    }
    report.graph_loss.push_back(loss.graph);
    report.signal_loss.push_back(loss.signal);
    report.total_loss.push_back(loss.total);
    if (config.track_cut_norm_every && epoch % *config.track_cut_norm_every == 0) {
      HeuristicOptions options;
      options.restarts = config.cut_norm_restarts;
      options.seed = derive_seed(config.seed, 100 + static_cast<std::uint64_t>(epoch));
      report.cut_norm.push_back({epoch, cut_norm_heuristic(g, icg, e, options).value});
    }
    if (config.optimizer == Optimizer::gd) {
      icg.logits -= config.lr * grads.logits;
      icg.r -= config.lr * grads.r;
      icg.f -= config.lr * grads.f;
    } else {
      adam.begin_step();
      adam.update(icg.logits, grads.logits, m_logits);
      adam.update(icg.r, grads.r, m_r);
      adam.update(icg.f, grads.f, m_f);
    }
    report.epoch_seconds.push_back(std::chrono::duration<double>(Clock::now() - start).count());
  }

  if (config.epochs > 0 && config.lambda > 0.0 && g.feature_dim() > 0) {
    icg.f = analyze(materialize_q(icg), g.signal(), config.ridge).values;
  }
  report.final = loss_efficient(g, icg, config.lambda);
  report.final_frobenius_error = frobenius_error(report.final);
  return {std::move(icg), std::move(report)};
}

}  // namespace icg
