#include "icg/sgd.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "icg/random.hpp"

namespace icg {
namespace {

Icg restrict_rows(const Icg& icg, const NodeSample& sample) {
  Icg sub;
  sub.logits.resize(sample.size(), icg.num_communities());
  for (Index pos = 0; pos < sample.size(); ++pos) {
    sub.logits.row(pos) = icg.logits.row(sample.indices[static_cast<std::size_t>(pos)]);
  }
  sub.r = icg.r;
  sub.f = icg.f;
  return sub;
}

void check_sample(const GraphSignal& g, const Icg& icg, const NodeSample& sample) {
  icg.check_shapes();
  if (icg.num_nodes() != g.num_nodes()) throw std::invalid_argument("ICG/graph node count mismatch");
  if (sample.size() < 1) throw std::invalid_argument("node sample is empty");
}

std::vector<Index> unique_rows(const NodeSample& sample) {
  std::vector<Index> rows = sample.indices;
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

double quantile(std::vector<double> values, double level) {
  std::sort(values.begin(), values.end());
  const double pos = std::ceil(level * static_cast<double>(values.size())) - 1.0;
  const auto idx = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(values.size() - 1)));
  return values[idx];
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

double log_term(double inv_p, std::initializer_list<double> sizes) {
  double sum = 2.0 * std::log(inv_p) + 2.0 * std::log(2.0);
  for (double s : sizes) sum += 2.0 * std::log(s);
  return sum;
}

}  // namespace

void SgdConfig::validate(Index n) const {
  if (m < 1) throw std::invalid_argument("sample size m must be >= 1");
  if (n < 1) throw std::invalid_argument("graph has no nodes");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be > 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
}

LossParts subgraph_loss(const GraphSignal& g, const Icg& icg, const NodeSample& sample,
                        double lambda) {
  check_sample(g, icg, sample);
  return loss_efficient(sample_subgraph(g, sample), restrict_rows(icg, sample), lambda);
}

IcgGradients subgraph_grads(const GraphSignal& g, const Icg& icg, const NodeSample& sample,
                            double lambda) {
  check_sample(g, icg, sample);
  const IcgGradients sub = grad_all(sample_subgraph(g, sample), restrict_rows(icg, sample), lambda);
  IcgGradients out;
  out.q = Matrix::Zero(g.num_nodes(), icg.num_communities());
  out.logits = Matrix::Zero(g.num_nodes(), icg.num_communities());
  for (Index pos = 0; pos < sample.size(); ++pos) {
    const Index node = sample.indices[static_cast<std::size_t>(pos)];
    out.q.row(node) += sub.q.row(pos);
    out.logits.row(node) += sub.logits.row(pos);
  }
  out.r = sub.r;
  out.f = sub.f;
  return out;
}

LossParts sgd_step(const GraphSignal& g, Icg& icg, const NodeSample& sample,
                   const SgdConfig& config, SgdState& state) {
  check_sample(g, icg, sample);
  auto [loss, sub] = loss_and_grad(sample_subgraph(g, sample), restrict_rows(icg, sample),
                                   config.lambda);
  if (!std::isfinite(loss.total) || !sub.logits.allFinite() || !sub.r.allFinite() ||
      !sub.f.allFinite()) {
    throw std::runtime_error("non-finite subgraph loss or gradient (lr too high?)");
  }
  Matrix row_grad = Matrix::Zero(icg.num_nodes(), icg.num_communities());
  for (Index pos = 0; pos < sample.size(); ++pos) {
    row_grad.row(sample.indices[static_cast<std::size_t>(pos)]) += sub.logits.row(pos);
  }
  const std::vector<Index> rows = unique_rows(sample);
  const double scale = config.scale_q_grads ? static_cast<double>(sample.size()) /
                                                  static_cast<double>(g.num_nodes())
                                            : 1.0;
  if (config.optimizer == Optimizer::gd) {
    const double step = config.lr * scale;
    for (Index row : rows) icg.logits.row(row) -= step * row_grad.row(row);
    icg.r -= config.lr * sub.r;
    icg.f -= config.lr * sub.f;
  } else {
    if (scale != 1.0) {
      for (Index row : rows) row_grad.row(row) *= scale;
    }
    state.adam.begin_step();
    state.adam.update_rows(icg.logits, row_grad, state.logits, rows);
    state.adam.update(icg.r, sub.r, state.r);
    state.adam.update(icg.f, sub.f, state.f);
  }
  return loss;
}

std::pair<Icg, FitReport> sgd_fit(const GraphSignal& g, const SgdConfig& config, Icg icg) {
  config.validate(g.num_nodes());
  icg.check_shapes();
  if (icg.num_nodes() != g.num_nodes() || icg.feature_dim() != g.feature_dim()) {
    throw std::invalid_argument("initial ICG does not match the graph");
  }
  FitReport report;
  report.initial = loss_efficient(g, icg, config.lambda);
  SgdState state{Adam(AdamConfig{.lr = config.lr}), {}, {}, {}};
  using Clock = std::chrono::steady_clock;
  auto window_start = Clock::now();

  const auto record = [&](const LossParts& loss) {
    report.graph_loss.push_back(loss.graph);
    report.signal_loss.push_back(loss.signal);
    report.total_loss.push_back(loss.total);
  };
  for (int step = 0; step < config.steps; ++step) {
    const NodeSample sample =
        draw_node_sample(g.num_nodes(), config.m, derive_seed(config.seed, static_cast<std::uint64_t>(step)));
    sgd_step(g, icg, sample, config, state);
    const bool last = step + 1 == config.steps;
    if ((step + 1) % config.eval_every == 0 || last) {
      const LossParts loss = loss_efficient(g, icg, config.lambda);
      if (!std::isfinite(loss.total)) {
        std::ostringstream msg;
        msg << "non-finite full loss after step " << step + 1;
        throw std::runtime_error(msg.str());
      }
      record(loss);
      const auto now = Clock::now();
      report.epoch_seconds.push_back(std::chrono::duration<double>(now - window_start).count());
      window_start = now;
    }
  }
  report.final = config.steps > 0 && !report.total_loss.empty()
                     ? LossParts{report.graph_loss.back(), report.signal_loss.back(),
                                 report.total_loss.back()}
                     : report.initial;
  report.final_frobenius_error = frobenius_error(report.final);
  return {std::move(icg), std::move(report)};
}

bool GradErrorReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(),
                     [](const GradErrorRow& row) { return row.r.pass && row.f.pass && row.q.pass; });
}

double grad_bound_r(Index n, Index k, Index m, double p) {
  const double p1 = p / (3.0 * static_cast<double>(k));
  return 4.0 * std::sqrt(log_term(1.0 / p1, {static_cast<double>(n), static_cast<double>(k)}) /
                         static_cast<double>(m));
}

double grad_bound_f(Index k, Index d, Index m, double p, double lambda) {
  const double p2 = p / (3.0 * static_cast<double>(k) * static_cast<double>(d));
  return 4.0 * lambda *
         std::sqrt(log_term(1.0 / p2, {static_cast<double>(k), static_cast<double>(d)}) /
                   static_cast<double>(m));
}

double grad_bound_q(Index n, Index k, Index m, double p) {
  const double p3 = p / (3.0 * static_cast<double>(k));
  return 4.0 / static_cast<double>(n) *
         std::sqrt(log_term(1.0 / p3, {static_cast<double>(n), static_cast<double>(k)}) /
                   static_cast<double>(m));
}

GradErrorReport grad_error_study(const GraphSignal& g, const Icg& icg,
                                 const std::vector<Index>& m_values, int trials, double p,
                                 std::uint64_t seed, double lambda) {
  icg.check_shapes();
  if (icg.num_nodes() != g.num_nodes() || icg.feature_dim() != g.feature_dim()) {
    throw std::invalid_argument("ICG does not match the graph");
  }
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must lie in (0, 1)");
  if (m_values.empty()) throw std::invalid_argument("m_values is empty");
  for (Index m : m_values) {
    if (m < 1) throw std::invalid_argument("every M must be >= 1");
  }
  const Index n = g.num_nodes();
  const Index k = icg.num_communities();
  const Index d = g.feature_dim();

  GradErrorReport report;
  report.n = n;
  report.k = k;
  report.d = d;
  report.lambda = lambda;
  report.p = p;
  report.trials = trials;
  report.seed = seed;

  Icg model = icg;
  const auto clamp_unit = [&](auto& values, const char* name) {
    if (values.size() == 0) return;
    if (values.minCoeff() < 0.0 || values.maxCoeff() > 1.0) {
      values = values.cwiseMax(0.0).cwiseMin(1.0);
      report.warnings.push_back(std::string(name) + " had entries outside [0,1]; clamped");
    }
  };
  clamp_unit(model.r, "r");
  clamp_unit(model.f, "F");
  if (model.r.cwiseAbs().sum() > 1.0) {
    report.warnings.push_back("sum |r| > 1: C entries may leave [0,1]");
  }
  if (d > 0) {
    const Matrix pq = materialize_q(model) * model.f;
    if (pq.maxCoeff() > 1.0) report.warnings.push_back("QF entries exceed 1");
  }

  const IcgGradients full = grad_all(g, model, lambda);
  for (std::size_t row_idx = 0; row_idx < m_values.size(); ++row_idx) {
    const Index m = m_values[row_idx];
    std::vector<double> err_r;
    std::vector<double> err_f;
    std::vector<double> err_q;
    for (int t = 0; t < trials; ++t) {
      const std::uint64_t stream = (static_cast<std::uint64_t>(row_idx) << 32) |
                                   static_cast<std::uint64_t>(t);
      const NodeSample sample = draw_node_sample(n, m, derive_seed(seed, stream));
      const IcgGradients sub =
          grad_all(sample_subgraph(g, sample), restrict_rows(model, sample), lambda);
      err_r.push_back(k > 0 ? (full.r - sub.r).cwiseAbs().maxCoeff() : 0.0);
      err_f.push_back(k > 0 && d > 0 ? (full.f - sub.f).cwiseAbs().maxCoeff() : 0.0);
      const double scale = static_cast<double>(m) / static_cast<double>(n);
      double worst_q = 0.0;
      for (Index pos = 0; pos < m; ++pos) {
        const Index node = sample.indices[static_cast<std::size_t>(pos)];
        for (Index c = 0; c < k; ++c) {
          worst_q = std::max(worst_q, std::abs(full.q(node, c) - scale * sub.q(pos, c)));
        }
      }
      err_q.push_back(worst_q);
    }
    GradErrorRow row;
    row.m = m;
    const auto summarise = [&](const std::vector<double>& errs, double bound) {
      GradErrorClass c;
      c.quantile = quantile(errs, 1.0 - p);
      c.median = median(errs);
      c.bound = bound;
      c.pass = c.quantile <= bound;
      return c;
    };
    row.r = summarise(err_r, grad_bound_r(n, k, m, p));
    row.f = summarise(err_f, d > 0 ? grad_bound_f(k, d, m, p, lambda) : 0.0);
    row.q = summarise(err_q, grad_bound_q(n, k, m, p));
    report.rows.push_back(row);
  }

  std::vector<double> xs;
  std::vector<double> ys;
  for (const GradErrorRow& row : report.rows) {
    if (row.r.median > 0.0) {
      xs.push_back(std::log(static_cast<double>(row.m)));
      ys.push_back(std::log(row.r.median));
    }
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx > 0.0) {
      report.slope_r = sxy / sxx;
      report.slope_defined = true;
    }
  }
  return report;
}

nlohmann::json to_json(const GradErrorReport& report) {
  const auto cls = [](const GradErrorClass& c) {
    return nlohmann::json{{"quantile", c.quantile}, {"median", c.median}, {"bound", c.bound},
                          {"pass", c.pass}};
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const GradErrorRow& row : report.rows) {
    rows.push_back({{"m", row.m}, {"r", cls(row.r)}, {"f", cls(row.f)}, {"q", cls(row.q)}});
  }
  nlohmann::json j{{"n", report.n},       {"k", report.k},           {"d", report.d},
                   {"lambda", report.lambda}, {"p", report.p},       {"trials", report.trials},
                   {"seed", report.seed}, {"rows", rows},            {"warnings", report.warnings},
                   {"all_pass", report.all_pass()}};
  j["slope_r_median"] = report.slope_defined ? nlohmann::json(report.slope_r) : nlohmann::json();
  return j;
}

}  // namespace icg
