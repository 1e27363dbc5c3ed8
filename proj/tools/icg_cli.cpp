#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "icg/experiments.hpp"
#include "icg/fit.hpp"
#include "icg/graph.hpp"
#include "icg/model.hpp"
#include "icg/nn.hpp"
#include "icg/norms.hpp"
#include "icg/sgd.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GraphInput {
  std::string path;
  std::string features;
  bool normalize = false;
};

void add_graph_options(CLI::App* cmd, GraphInput& in, bool required = true) {
  auto* opt = cmd->add_option("--graph", in.path,
                              "graph snapshot (.bin) or edge list with `i j [w]` lines");
  if (required) opt->required();
  cmd->add_option("--features", in.features, "CSV feature file for an edge-list graph");
  cmd->add_flag("--normalize", in.normalize, "min-max rescale feature columns into [0,1]");
}

icg::GraphSignal read_graph(const GraphInput& in) {
  if (fs::path(in.path).extension() == ".bin") {
    icg::GraphSignal g = icg::load_snapshot(in.path);
    if (!in.features.empty()) g = g.with_signal(icg::load_features_csv(in.features));
    return g;
  }
  icg::LoadOptions options;
  options.normalize_features = in.normalize;
  std::optional<fs::path> features;
  if (!in.features.empty()) features = in.features;
  return icg::load_graph_signal(in.path, features, options);
}

std::vector<int> read_labels(const std::string& path, icg::Index n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<int> labels;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::string field = line.substr(line.find_last_of(',') + 1);
    const auto b = field.find_first_not_of(" \t");
    const auto e = field.find_last_not_of(" \t");
    field = b == std::string::npos ? std::string() : field.substr(b, e - b + 1);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      if (first) {
        first = false;
        continue;
      }
      throw std::runtime_error(path + ": bad label line '" + line + "'");
    }
    first = false;
    labels.push_back(value);
  }
  if (static_cast<icg::Index>(labels.size()) != n) {
    throw std::runtime_error(path + " has " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(n) + " nodes");
  }
  return labels;
}

// A JSON file {"train": [...], "val": [...], "test": [...]} or "train_frac,val_frac".
icg::Split read_split(const std::string& spec, icg::Index n, std::uint64_t seed, json& echo) {
  if (fs::exists(spec)) {
    std::ifstream in(spec);
    const json j = json::parse(in);
    icg::Split s;
    s.train = j.at("train").get<std::vector<icg::Index>>();
    s.val = j.value("val", std::vector<icg::Index>{});
    s.test = j.value("test", std::vector<icg::Index>{});
    echo = spec;
    return s;
  }
  const auto comma = spec.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("--split: no such file and not 'a,b': " + spec);
  const double train = std::stod(spec.substr(0, comma));
  const double val = std::stod(spec.substr(comma + 1));
  echo = {train, val};
  return icg::random_split(n, seed, train, val);
}

void write_labels(const std::vector<int>& labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (int l : labels) out << l << '\n';
}

icg::Index infer_classes(const std::vector<int>& labels) {
  int top = -1;
  for (int l : labels) top = std::max(top, l);
  return top + 1;
}

void emit(const json& report, const std::string& path) {
  if (path.empty()) {
    std::cout << report.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << report.dump(2) << '\n';
}

void write_csv_rows(std::ostream& out, const json& rows, const std::vector<std::string>& columns) {
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (const json& row : rows) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out << ',';
      const json v = row.value(json::json_pointer("/" + columns[c]), json());
      if (!v.is_null()) out << v.dump();
    }
    out << '\n';
  }
}

json zip_series(const json& source, const std::vector<std::string>& keys) {
  json rows = json::array();
  for (std::size_t i = 0; i < source.at(keys.front()).size(); ++i) {
    json row = {{"epoch", i}};
    for (const std::string& key : keys) row[key] = source.at(key).at(i);
    rows.push_back(row);
  }
  return rows;
}

// One row per curve point; nested columns are addressed as a/b.
void write_curve_csv(const json& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::string command = report.at("command");
  if (command == "fit") {
    write_csv_rows(out, zip_series(report["runs"][0], {"graph_loss", "signal_loss", "total_loss"}),
                   {"epoch", "graph_loss", "signal_loss", "total_loss"});
  } else if (command == "nn-train") {
    write_csv_rows(out, zip_series(report["runs"][0], {"train_loss", "train_acc", "val_acc"}),
                   {"epoch", "train_loss", "train_acc", "val_acc"});
  } else if (command == "grad-study") {
    write_csv_rows(out, report["runs"][0]["rows"],
                   {"m", "r/quantile", "r/bound", "q/quantile", "q/bound", "f/quantile", "f/bound"});
  } else if (command == "bound-check") {
    write_csv_rows(out, report["runs"],
                   {"k", "frobenius_error", "delta", "cut_norm_estimate", "cs_bound", "cs_bound_unrestricted",
                    "theorem_bound"});
  } else if (command == "bench") {
    write_csv_rows(out, report["timing"]["runs"], {"n", "icg_u_seconds", "message_passing_seconds"});
  } else if (command == "robustness") {
    write_csv_rows(out, report["aggregate"]["curve"],
                   {"drop_fraction", "test_accuracy/mean", "test_accuracy/std", "test_accuracy/count"});
  } else if (command == "ablate-k") {
    write_csv_rows(out, report["aggregate"]["curve"],
                   {"k", "test_accuracy/mean", "test_accuracy/std", "test_accuracy/count"});
  }
}

std::string join_argv(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i > 0) out += ' ';
    out += argv[i];
  }
  return out;
}

struct PipelineOptions {
  icg::Index k = 8;
  double lambda = 0.1;
  double fit_lr = 0.05;
  int fit_epochs = 500;
  icg::Index layers = 2;
  icg::Index hidden = 32;
  double lr = 0.01;
  int epochs = 200;
  int patience = 50;
};

void add_pipeline_options(CLI::App* cmd, PipelineOptions& o) {
  cmd->add_option("--k", o.k, "communities");
  cmd->add_option("--lambda", o.lambda, "signal weight of the fit");
  cmd->add_option("--fit-lr", o.fit_lr, "fit learning rate");
  cmd->add_option("--fit-epochs", o.fit_epochs, "fit epochs (SGD steps when nodes are dropped)");
  cmd->add_option("--layers", o.layers, "network layers");
  cmd->add_option("--hidden", o.hidden, "hidden width");
  cmd->add_option("--lr", o.lr, "network learning rate");
  cmd->add_option("--epochs", o.epochs, "network epochs");
  cmd->add_option("--patience", o.patience, "early-stopping patience (0 disables)");
}

icg::PipelineConfig to_pipeline(const PipelineOptions& o) {
  icg::PipelineConfig c;
  c.fit.k = o.k;
  c.fit.lambda = o.lambda;
  c.fit.lr = o.fit_lr;
  c.fit.epochs = o.fit_epochs;
  c.train.layers = o.layers;
  c.train.hidden = o.hidden;
  c.train.lr = o.lr;
  c.train.epochs = o.epochs;
  c.train.patience = o.patience;
  return c;
}

struct DataOptions {
  GraphInput graph;
  std::string labels;
  icg::Index n = 600;
  double p_in = 0.9;
  double p_out = 0.05;
  icg::Index features = 16;
  std::uint64_t seed = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  add_graph_options(cmd, o.graph, false);
  cmd->add_option("--labels", o.labels, "one integer label per line (with --graph)");
  cmd->add_option("--n", o.n, "planted SBM size when no graph is given");
  cmd->add_option("--p-in", o.p_in, "planted SBM within-block edge probability");
  cmd->add_option("--p-out", o.p_out, "planted SBM cross-block edge probability");
  cmd->add_option("--noise-features", o.features, "planted SBM noise feature count");
  cmd->add_option("--data-seed", o.seed, "planted SBM seed");
}

icg::LabeledGraph load_data(const DataOptions& o, json& source) {
  if (o.graph.path.empty()) {
    source = {{"kind", "planted_sbm"}, {"n", o.n}, {"p_in", o.p_in}, {"p_out", o.p_out},
              {"noise_features", o.features}, {"seed", o.seed}};
    return icg::planted_sbm(o.n, o.p_in, o.p_out, o.features, o.seed);
  }
  if (o.labels.empty()) throw std::runtime_error("--labels is required with --graph");
  icg::LabeledGraph data;
  data.graph = read_graph(o.graph);
  data.labels = read_labels(o.labels, data.graph.num_nodes());
  data.num_classes = infer_classes(data.labels);
  source = {{"kind", "file"}, {"graph", o.graph.path}, {"labels", o.labels}};
  return data;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intersecting community graphs: fitting, cut norms and ICG neural networks"};
  app.require_subcommand(1);
  std::string out_path;
  std::string csv_path;
  const std::string argv_echo = join_argv(argc, argv);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic graph-signal");
  std::string gen_model = "er";
  icg::Index gen_n = 500;
  double gen_p = 0.5;
  double gen_p_in = 0.9;
  double gen_p_out = 0.05;
  icg::Index gen_blocks = 2;
  icg::Index gen_features = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_graph_out;
  std::string gen_edges_out;
  std::string gen_features_out;
  std::string gen_labels_out;
  gen->add_option("--model", gen_model, "er or sbm")->check(CLI::IsMember({"er", "sbm"}));
  gen->add_option("--n", gen_n, "nodes");
  gen->add_option("--p", gen_p, "ER edge probability");
  gen->add_option("--p-in", gen_p_in, "SBM within-block probability");
  gen->add_option("--p-out", gen_p_out, "SBM cross-block probability");
  gen->add_option("--blocks", gen_blocks, "SBM blocks of (almost) equal size");
  gen->add_option("--features", gen_features, "uniform [0,1) feature columns");
  gen->add_option("--seed", gen_seed, "seed");
  gen->add_option("--graph-out", gen_graph_out, "binary snapshot (.bin)");
  gen->add_option("--edges-out", gen_edges_out, "edge list");
  gen->add_option("--features-out", gen_features_out, "feature CSV");
  gen->add_option("--labels-out", gen_labels_out, "SBM block labels");
  gen->add_option("--out", out_path, "report JSON (stdout when omitted)");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit an ICG to a graph-signal");
  GraphInput fit_graph;
  add_graph_options(fit_cmd, fit_graph);
  icg::FitConfig fit_config;
  std::string fit_init = "eigen";
  std::string fit_optimizer = "adam";
  std::string fit_icg_out;
  bool fit_sgd = false;
  icg::SgdConfig sgd_config;
  int cut_every = 0;
  fit_cmd->add_option("--k", fit_config.k, "communities");
  fit_cmd->add_option("--lambda", fit_config.lambda, "signal weight");
  fit_cmd->add_option("--lr", fit_config.lr, "learning rate");
  fit_cmd->add_option("--epochs", fit_config.epochs, "full-graph epochs");
  fit_cmd->add_option("--init", fit_init, "eigen or random")->check(CLI::IsMember({"eigen", "random"}));
  fit_cmd->add_option("--optimizer", fit_optimizer, "adam or gd")->check(CLI::IsMember({"adam", "gd"}));
  fit_cmd->add_option("--seed", fit_config.seed, "seed");
  fit_cmd->add_option("--cut-every", cut_every, "record the residual cut norm every N epochs");
  fit_cmd->add_flag("--sgd", fit_sgd, "subgraph SGD instead of full-graph descent");
  fit_cmd->add_option("--m", sgd_config.m, "SGD sample size");
  fit_cmd->add_option("--steps", sgd_config.steps, "SGD steps");
  fit_cmd->add_option("--eval-every", sgd_config.eval_every, "SGD full-loss evaluation period");
  fit_cmd->add_option("--out,--icg-out", fit_icg_out, "fitted ICG file");
  fit_cmd->add_option("--report", out_path, "report JSON (stdout when omitted)");
  fit_cmd->add_option("--csv", csv_path, "loss curve CSV");

  // cutnorm
  auto* cut_cmd = app.add_subcommand("cutnorm", "cut norm of A - Q diag(r) Q^T and S - QF");
  GraphInput cut_graph;
  add_graph_options(cut_cmd, cut_graph);
  std::string cut_icg;
  int cut_restarts = 16;
  std::uint64_t cut_seed = 0;
  bool cut_exact = false;
  cut_cmd->add_option("--icg", cut_icg, "fitted ICG (the residual is A itself when omitted)");
  cut_cmd->add_option("--restarts", cut_restarts, "heuristic restarts");
  cut_cmd->add_option("--seed", cut_seed, "seed");
  cut_cmd->add_flag("--exact", cut_exact, "also enumerate exactly (N <= 24)");
  cut_cmd->add_option("--out", out_path, "report JSON (stdout when omitted)");

  // grad-study
  auto* grad_cmd = app.add_subcommand("grad-study", "subgraph gradient deviation against its bound");
  GraphInput grad_graph;
  add_graph_options(grad_cmd, grad_graph);
  std::string grad_icg;
  icg::Index grad_k = 6;
  std::vector<icg::Index> grad_m = {25, 50, 100, 200, 400};
  int grad_trials = 200;
  double grad_p = 0.1;
  double grad_lambda = 1.0;
  std::uint64_t grad_seed = 0;
  grad_cmd->add_option("--icg", grad_icg, "ICG to differentiate at (random init when omitted)");
  grad_cmd->add_option("--k", grad_k, "communities of the random ICG");
  grad_cmd->add_option("--m-list", grad_m, "sample sizes")->delimiter(',');
  grad_cmd->add_option("--trials", grad_trials, "samples per size");
  grad_cmd->add_option("--p", grad_p, "failure probability of the bound");
  grad_cmd->add_option("--lambda", grad_lambda, "signal weight");
  grad_cmd->add_option("--seed", grad_seed, "seed");
  grad_cmd->add_option("--out", out_path, "report JSON (stdout when omitted)");
  grad_cmd->add_option("--csv", csv_path, "curve CSV");

  // nn-train
  auto* nn_cmd = app.add_subcommand("nn-train", "train ICG-NN / ICG_u-NN or the MLP baseline");
  GraphInput nn_graph;
  add_graph_options(nn_cmd, nn_graph);
  std::string nn_model;
  std::string nn_arch = "icgnn-u";
  std::string nn_labels;
  std::string nn_split = "0.5,0.25";
  std::string nn_params_out;
  std::string nn_metrics;
  icg::Index nn_classes = 0;
  icg::TrainConfig train_config;
  nn_cmd->add_option("--model", nn_model, "fitted ICG file (not needed for mlp)");
  nn_cmd->add_option("--arch", nn_arch, "icgnn, icgnn-u or mlp")
      ->check(CLI::IsMember({"icgnn", "icgnn-u", "mlp"}));
  nn_cmd->add_option("--labels", nn_labels, "one label per line (last CSV column; a header is skipped)")
      ->required();
  nn_cmd->add_option("--classes", nn_classes, "class count (max label + 1 when omitted)");
  nn_cmd->add_option("--split", nn_split, "split JSON file or train,val fractions (the rest is test)");
  nn_cmd->add_option("--layers", train_config.layers, "layers");
  nn_cmd->add_option("--hidden", train_config.hidden, "hidden width");
  nn_cmd->add_option("--lr", train_config.lr, "learning rate");
  nn_cmd->add_option("--epochs", train_config.epochs, "epochs");
  nn_cmd->add_option("--dropout", train_config.dropout, "dropout rate");
  nn_cmd->add_option("--patience", train_config.patience, "early-stopping patience (0 disables)");
  nn_cmd->add_option("--seed", train_config.seed, "seed");
  nn_cmd->add_option("--out", nn_params_out, "trained parameter file");
  nn_cmd->add_option("--metrics", out_path, "metrics JSON (stdout when omitted)");
  nn_cmd->add_option("--csv", csv_path, "training curve CSV");

  // bound-check
  auto* bound_cmd = app.add_subcommand("bound-check", "residual cut norm against the regularity bound");
  icg::BoundCheckConfig bound_config;
  bound_cmd->add_option("--n", bound_config.n, "ER nodes");
  bound_cmd->add_option("--p", bound_config.p, "ER edge probability");
  bound_cmd->add_option("--k-list", bound_config.k_list, "community counts")->delimiter(',');
  bound_cmd->add_option("--restarts", bound_config.restarts, "fit restarts per K");
  bound_cmd->add_option("--epochs", bound_config.epochs, "fit epochs");
  bound_cmd->add_option("--lr", bound_config.lr, "fit learning rate");
  bound_cmd->add_option("--cut-restarts", bound_config.cut_restarts, "cut-norm heuristic restarts");
  bound_cmd->add_option("--seed", bound_config.seed, "seed");
  bound_cmd->add_option("--out", out_path, "report JSON (stdout when omitted)");
  bound_cmd->add_option("--csv", csv_path, "curve CSV");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "forward-pass runtime: ICG_u-NN against message passing");
  icg::BenchConfig bench_config;
  std::string bench_mode = "dense";
  bench_cmd->add_option("--n-list", bench_config.n_list, "graph sizes")->delimiter(',');
  bench_cmd->add_option("--mode", bench_mode, "dense (p = 0.5) or sparse (p = 50/n)")
      ->check(CLI::IsMember({"dense", "sparse"}));
  bench_cmd->add_option("--k", bench_config.k, "communities");
  bench_cmd->add_option("--reps", bench_config.reps, "repetitions (the minimum is reported)");
  bench_cmd->add_option("--seed", bench_config.seed, "seed");
  bench_cmd->add_option("--out", out_path, "report JSON (stdout when omitted)");
  bench_cmd->add_option("--csv", csv_path, "curve CSV");

  // robustness
  auto* robust_cmd = app.add_subcommand("robustness", "accuracy when the ICG is fitted on subgraphs");
  DataOptions robust_data;
  PipelineOptions robust_pipeline;
  icg::RobustnessConfig robust_config;
  add_data_options(robust_cmd, robust_data);
  add_pipeline_options(robust_cmd, robust_pipeline);
  robust_cmd->add_option("--drops", robust_config.drop_fractions, "drop fractions in [0,1)")->delimiter(',');
  robust_cmd->add_option("--seeds", robust_config.seeds, "run seeds")->delimiter(',');
  robust_cmd->add_option("--out", out_path, "report JSON (stdout when omitted)");
  robust_cmd->add_option("--csv", csv_path, "curve CSV");

  // ablate-k
  auto* ablate_cmd = app.add_subcommand("ablate-k", "accuracy against the number of communities");
  DataOptions ablate_data;
  PipelineOptions ablate_pipeline;
  icg::AblateConfig ablate_config;
  add_data_options(ablate_cmd, ablate_data);
  add_pipeline_options(ablate_cmd, ablate_pipeline);
  ablate_cmd->add_option("--k-list", ablate_config.k_list, "community counts")->delimiter(',');
  ablate_cmd->add_option("--seeds", ablate_config.seeds, "run seeds")->delimiter(',');
  ablate_cmd->add_option("--out", out_path, "report JSON (stdout when omitted)");
  ablate_cmd->add_option("--csv", csv_path, "curve CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    json report;
    if (gen->parsed()) {
      icg::GraphSignal g;
      std::vector<int> labels;
      json config = {{"model", gen_model}, {"n", gen_n}, {"features", gen_features}};
      if (gen_model == "er") {
        g = icg::gen_erdos_renyi(gen_n, gen_p, icg::derive_seed(gen_seed, 0));
        config["p"] = gen_p;
      } else {
        if (gen_blocks < 1 || gen_blocks > gen_n) throw std::invalid_argument("blocks must lie in [1, n]");
        std::vector<icg::Index> sizes;
        for (icg::Index b = 0; b < gen_blocks; ++b) {
          sizes.push_back(gen_n / gen_blocks + (b < gen_n % gen_blocks ? 1 : 0));
        }
        icg::Matrix p = icg::Matrix::Constant(gen_blocks, gen_blocks, gen_p_out);
        p.diagonal().setConstant(gen_p_in);
        g = icg::gen_sbm(sizes, p, icg::derive_seed(gen_seed, 0));
        labels = icg::sbm_labels(sizes);
        config["p_in"] = gen_p_in;
        config["p_out"] = gen_p_out;
        config["blocks"] = gen_blocks;
      }
      g = g.with_signal(icg::random_features(gen_n, gen_features, icg::derive_seed(gen_seed, 1)));
      report = icg::new_report("gen", config);
      report["seeds"] = {{"graph", icg::derive_seed(gen_seed, 0)}, {"features", icg::derive_seed(gen_seed, 1)}};
      if (!gen_graph_out.empty()) icg::save_snapshot(g, gen_graph_out);
      if (!gen_edges_out.empty()) icg::save_edge_list(g, gen_edges_out);
      if (!gen_features_out.empty()) icg::save_features_csv(g.signal(), gen_features_out);
      if (!gen_labels_out.empty()) {
        if (labels.empty()) throw std::invalid_argument("--labels-out needs --model sbm");
        write_labels(labels, gen_labels_out);
      }
      report["runs"].push_back({{"nodes", g.num_nodes()}, {"stored_entries", g.nnz()},
                                {"feature_dim", g.feature_dim()}, {"degree", icg::degree(g)}});
      icg::add_assertion(report, "graph_valid", true);
    } else if (fit_cmd->parsed()) {
      const icg::GraphSignal g = read_graph(fit_graph);
      fit_config.init = fit_init == "eigen" ? icg::InitMethod::eigen : icg::InitMethod::random;
      fit_config.optimizer = fit_optimizer == "adam" ? icg::Optimizer::adam : icg::Optimizer::gd;
      if (cut_every > 0) fit_config.track_cut_norm_every = cut_every;
      json config = {{"k", fit_config.k},     {"lambda", fit_config.lambda}, {"lr", fit_config.lr},
                     {"init", fit_init},       {"optimizer", fit_optimizer},   {"sgd", fit_sgd}};
      icg::Icg fitted;
      icg::FitReport fr;
      if (fit_sgd) {
        sgd_config.lr = fit_config.lr;
        sgd_config.lambda = fit_config.lambda;
        sgd_config.seed = fit_config.seed;
        sgd_config.optimizer = fit_config.optimizer;
        config["m"] = sgd_config.m;
        config["steps"] = sgd_config.steps;
        const icg::Icg init = fit_config.init == icg::InitMethod::eigen
                                  ? icg::init_eigen(g, fit_config.k, fit_config.seed, fit_config.ridge)
                                  : icg::init_random(g, fit_config.k, fit_config.seed, fit_config.ridge);
        std::tie(fitted, fr) = icg::sgd_fit(g, sgd_config, init);
      } else {
        config["epochs"] = fit_config.epochs;
        std::tie(fitted, fr) = icg::fit(g, fit_config);
      }
      report = icg::new_report("fit", config);
      report["seeds"] = {{"fit", fit_config.seed}};
      report["runs"].push_back(icg::to_json(fr));
      report["aggregate"] = {{"icg", icg::icg_summary_json(fitted)}};
      if (!fit_icg_out.empty()) icg::save_icg(fitted, fit_icg_out);
      icg::add_assertion(report, "finite_final_loss", std::isfinite(fr.final.total));
      icg::add_assertion(report, "final_loss_not_above_initial", fr.final.total <= fr.initial.total,
                         std::to_string(fr.final.total) + " vs " + std::to_string(fr.initial.total));
    } else if (cut_cmd->parsed()) {
      const icg::GraphSignal g = read_graph(cut_graph);
      icg::Icg model;
      if (!cut_icg.empty()) {
        model = icg::load_icg(cut_icg);
      } else {
        model.logits.resize(g.num_nodes(), 0);
        model.r.resize(0);
        model.f.resize(0, g.feature_dim());
      }
      const double e = static_cast<double>(std::max<icg::Index>(g.nnz(), 1));
      icg::HeuristicOptions ho;
      ho.restarts = cut_restarts;
      ho.seed = cut_seed;
      const icg::CutNormEstimate heuristic = icg::cut_norm_heuristic(g, model, e, ho);
      report = icg::new_report("cutnorm", {{"restarts", cut_restarts}, {"exact", cut_exact},
                                           {"icg", cut_icg.empty() ? json() : json(cut_icg)}});
      report["seeds"] = {{"heuristic", cut_seed}};
      json run = {{"heuristic", heuristic.value}, {"e", e}};
      const icg::Matrix q = icg::materialize_q(model);
      if (g.feature_dim() > 0) run["signal"] = icg::cut_norm_signal(g.signal() - q * model.f);
      if (cut_exact) {
        const icg::Matrix residual = icg::Matrix(g.adjacency()) - q * model.r.asDiagonal() * q.transpose();
        const icg::CutNormEstimate exact = icg::cut_norm_exact(residual, e);
        run["exact"] = exact.value;
        icg::add_assertion(report, "heuristic_not_above_exact", heuristic.value <= exact.value * (1 + 1e-12) + 1e-15,
                           std::to_string(heuristic.value) + " vs " + std::to_string(exact.value));
      }
      report["runs"].push_back(run);
    } else if (grad_cmd->parsed()) {
      const icg::GraphSignal g = read_graph(grad_graph);
      const icg::Icg model = grad_icg.empty() ? icg::init_random(g, grad_k, icg::derive_seed(grad_seed, 1))
                                              : icg::load_icg(grad_icg);
      const icg::GradErrorReport gr =
          icg::grad_error_study(g, model, grad_m, grad_trials, grad_p, grad_seed, grad_lambda);
      report = icg::new_report("grad-study", {{"m_list", grad_m}, {"trials", grad_trials}, {"p", grad_p},
                                              {"lambda", grad_lambda}, {"k", model.num_communities()}});
      report["seeds"] = {{"study", grad_seed}, {"icg", grad_icg.empty() ? json(icg::derive_seed(grad_seed, 1)) : json()}};
      report["runs"].push_back(icg::to_json(gr));
      for (const icg::GradErrorRow& row : gr.rows) {
        const std::string m = std::to_string(row.m);
        icg::add_assertion(report, "r_bound_m" + m, row.r.pass);
        icg::add_assertion(report, "q_bound_m" + m, row.q.pass);
        if (gr.d > 0) icg::add_assertion(report, "f_bound_m" + m, row.f.pass);
      }
      if (gr.slope_defined) {
        icg::add_assertion(report, "error_slope_in_range", gr.slope_r >= -0.65 && gr.slope_r <= -0.35,
                           std::to_string(gr.slope_r) + " in [-0.65, -0.35]");
      }
    } else if (nn_cmd->parsed()) {
      const icg::GraphSignal g = read_graph(nn_graph);
      const std::vector<int> labels = read_labels(nn_labels, g.num_nodes());
      const icg::Index classes = nn_classes > 0 ? nn_classes : infer_classes(labels);
      json split_echo;
      const icg::Split split =
          read_split(nn_split, g.num_nodes(), icg::derive_seed(train_config.seed, 1), split_echo);
      train_config.train = split.train;
      train_config.val = split.val;
      train_config.test = split.test;
      icg::TrainResult result;
      if (nn_arch == "mlp") {
        result = icg::train_mlp_baseline(g.signal(), labels, classes, train_config);
      } else {
        if (nn_model.empty()) throw std::invalid_argument("--model (a fitted ICG) is required for " + nn_arch);
        train_config.arch = icg::parse_arch(nn_arch);
        result = icg::train_node_classifier(g, icg::load_icg(nn_model), train_config, labels, classes);
      }
      if (!nn_params_out.empty()) icg::save_params(result.params, nn_params_out);
      report = icg::new_report("nn-train", {{"arch", nn_arch}, {"layers", train_config.layers},
                                            {"hidden", train_config.hidden}, {"lr", train_config.lr},
                                            {"epochs", train_config.epochs}, {"dropout", train_config.dropout},
                                            {"patience", train_config.patience}, {"split", split_echo},
                                            {"classes", classes}});
      report["seeds"] = {{"train", train_config.seed}, {"split", icg::derive_seed(train_config.seed, 1)}};
      report["runs"].push_back(icg::to_json(result.metrics));
      icg::add_assertion(report, "finite_training_loss",
                         std::all_of(result.metrics.train_loss.begin(), result.metrics.train_loss.end(),
                                     [](double x) { return std::isfinite(x); }));
    } else if (bound_cmd->parsed()) {
      report = icg::cmd_bound_check(bound_config);
    } else if (bench_cmd->parsed()) {
      bench_config.dense = bench_mode == "dense";
      report = icg::cmd_runtime_bench(bench_config);
    } else if (robust_cmd->parsed()) {
      json source;
      const icg::LabeledGraph data = load_data(robust_data, source);
      robust_config.pipeline = to_pipeline(robust_pipeline);
      report = icg::cmd_subgraph_robustness(data, robust_config);
      report["config"]["data"] = source;
    } else if (ablate_cmd->parsed()) {
      json source;
      const icg::LabeledGraph data = load_data(ablate_data, source);
      ablate_config.pipeline = to_pipeline(ablate_pipeline);
      report = icg::cmd_ablate_k(data, ablate_config);
      report["config"]["data"] = source;
    }
    report["argv"] = argv_echo;
    icg::finalize_report(report);
    emit(report, out_path);
    if (!csv_path.empty()) write_curve_csv(report, csv_path);
    return icg::report_passed(report) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
