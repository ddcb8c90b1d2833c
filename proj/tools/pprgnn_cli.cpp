// pprgnn command-line front end.
//
//   pprgnn train       --config C --dataset D --out DIR
//   pprgnn crossval    --config C --dataset D --out DIR
//   pprgnn eval        --checkpoint F --dataset D [--out FILE]
//   pprgnn depth-probe --checkpoint F --dataset D [--out FILE]
//   pprgnn inspect     --dataset D [--out FILE]
//
// Exit codes: 0 ok, 1 usage, 2 config, 3 dataset, 4 numerical failure,
// 5 checkpoint or output I/O.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pprgnn/pprgnn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pprgnn;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kNumeric = 4, kIo = 5 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Args {
  std::string config;
  std::string dataset;
  std::string out;
  std::string checkpoint;
  std::string precision = "f64";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t folds = 0;
  double epsilon = 0.0;
  double tol = 0.0;
  std::size_t n_terms = 0;
  bool self_loops = true;
  double lr = 0.0;
  std::size_t epochs = 0;
};

struct Overrides {
  std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> items;

  void apply(ExperimentConfig& cfg) const {
    for (const auto& [opt, fn] : items)
      if (opt->count() > 0) fn(cfg);
  }
};

Overrides add_overrides(CLI::App* sub, Args& a) {
  Overrides o;
  o.items.emplace_back(sub->add_option("--seed", a.seed, "Master seed"),
                       [&a](ExperimentConfig& c) { c.train.seed = a.seed; });
  o.items.emplace_back(sub->add_option("--jobs", a.jobs, "Parallel fold workers"),
                       [&a](ExperimentConfig& c) { c.jobs = a.jobs; });
  o.items.emplace_back(sub->add_option("--folds", a.folds, "Cross-validation folds"),
                       [&a](ExperimentConfig& c) { c.train.folds = a.folds; });
  o.items.emplace_back(sub->add_option("--epsilon", a.epsilon, "Decay constant"),
                       [&a](ExperimentConfig& c) { c.train.epsilon = a.epsilon; });
  o.items.emplace_back(sub->add_option("--tol", a.tol, "Convergence threshold"),
                       [&a](ExperimentConfig& c) { c.train.tol = a.tol; });
  o.items.emplace_back(sub->add_option("--n-terms", a.n_terms, "Backward truncation"),
                       [&a](ExperimentConfig& c) { c.train.n_terms = a.n_terms; });
  o.items.emplace_back(sub->add_option("--self-loops", a.self_loops, "Add self-loops (true/false)"),
                       [&a](ExperimentConfig& c) { c.train.self_loops = a.self_loops; });
  o.items.emplace_back(sub->add_option("--lr", a.lr, "Initial learning rate"),
                       [&a](ExperimentConfig& c) { c.train.lr = a.lr; });
  o.items.emplace_back(sub->add_option("--epochs", a.epochs, "Epochs per fold"),
                       [&a](ExperimentConfig& c) { c.train.epochs = a.epochs; });
  return o;
}

void add_precision(CLI::App* sub, Args& a) {
  sub->add_option("--precision", a.precision, "f64 (default) or f32")
      ->check(CLI::IsMember({"f64", "f32"}));
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void emit(const Args& a, const json& report) {
  std::cout << report.dump(2) << '\n';
  if (!a.out.empty()) write_json(a.out, report);
}

void table_row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i)
    std::fprintf(stderr, i == 0 ? "%-22s" : "%14s", cells[i].c_str());
  std::fputc('\n', stderr);
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

json meta_json(const DatasetMeta& m) {
  return {{"name", m.name},
          {"n_graphs", m.n_graphs},
          {"avg_nodes", m.avg_nodes},
          {"n_classes", m.n_classes},
          {"feature_kind", std::string(to_string(m.feature_kind))},
          {"feature_dim", m.feature_dim}};
}

ExperimentConfig resolve_config(const Args& a, const Overrides& o) {
  ExperimentConfig cfg = load_config(a.config);
  o.apply(cfg);
  validate_config(cfg);
  return cfg;
}

template <typename T>
Dataset<T> load_data(const Args& a, std::size_t degree_cap) {
  return load_tudataset<T>(a.dataset, degree_cap);
}

/// Cross-validation shared by `train` and `crossval`. The metrics stream is
/// appended live and rewritten in (fold, epoch) order at the end so the file
/// contents do not depend on worker scheduling.
template <typename T>
int run_crossval(const Args& a, const Overrides& o, bool fit_final) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = resolve_config(a, o);
  const auto ds = load_data<T>(a, cfg.degree_cap);
  const auto spec = cfg.model_for(ds.meta);

  const fs::path out_dir = a.out;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());
  const fs::path metrics_path = out_dir / "metrics.jsonl";
  std::ofstream live(metrics_path, std::ios::trunc);
  if (!live) throw IoError("cannot write " + metrics_path.string());
  std::mutex mu;
  std::vector<EpochRecord> records;
  const MetricsSink sink = [&](const EpochRecord& r) {
    std::lock_guard lock(mu);
    records.push_back(r);
    live << to_json(r).dump() << '\n' << std::flush;
  };

  const auto report = run_cross_validation<T>(ds.graphs, spec, cfg.train, cfg.jobs, sink);
  live.close();
  std::sort(records.begin(), records.end(), [](const EpochRecord& x, const EpochRecord& y) {
    return std::tie(x.fold, x.epoch) < std::tie(y.fold, y.epoch);
  });
  {
    std::ofstream sorted(metrics_path, std::ios::trunc);
    for (const auto& r : records) sorted << to_json(r).dump() << '\n';
    if (!sorted) throw IoError("cannot write " + metrics_path.string());
  }

  json summary = to_json(report);
  summary["command"] = fit_final ? "train" : "crossval";
  summary["dataset"] = meta_json(ds.meta);
  summary["config"] = to_config_text(cfg);
  summary["precision"] = a.precision;
  summary["metrics"] = metrics_path.string();

  if (fit_final) {
    std::vector<std::size_t> all(ds.graphs.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto final_model = train_model<T>(ds.graphs, all, {}, spec, cfg.train, cfg.train.folds,
                                            detail::derive_seed(cfg.train.seed, cfg.train.folds));
    const fs::path ck = out_dir / "model.ckpt";
    try {
      save_checkpoint(ck, spec, final_model.state,
                      {{"dataset", ds.meta.name},
                       {"degree_cap", cfg.degree_cap},
                       {"feature_kind", std::string(to_string(ds.meta.feature_kind))},
                       {"tol", cfg.train.tol},
                       {"n_terms", cfg.train.n_terms},
                       {"max_iter", cfg.train.max_iter}});
    } catch (const std::runtime_error& e) {
      throw IoError(e.what());
    }
    summary["checkpoint"] = ck.string();
    summary["final_train_acc"] = final_model.result.final_train_acc;
  }
  summary["total_wall_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(out_dir / "summary.json", summary);
  std::cout << summary.dump(2) << '\n';

  table_row({"fold", "best_val_acc", "best_epoch", "train_acc", "mean_k'"});
  for (const auto& f : report.folds)
    table_row({std::to_string(f.fold), fmt(f.best_val_acc), std::to_string(f.best_epoch),
               fmt(f.final_train_acc), fmt(f.mean_effective_depth, 2)});
  table_row({"mean +- std", fmt(report.mean_accuracy) + " +- " + fmt(report.std_accuracy), "", "",
             fmt(report.mean_effective_depth, 2)});
  return kOk;
}

template <typename T>
struct LoadedModel {
  Checkpoint<T> ck;
  Dataset<T> ds;
  SolverOptions<T> solver;
};

template <typename T>
LoadedModel<T> load_model(const Args& a) {
  LoadedModel<T> m;
  try {
    m.ck = load_checkpoint<T>(a.checkpoint);
  } catch (const ValueError& e) {
    throw IoError(std::string("invalid checkpoint: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid checkpoint header: ") + e.what());
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  const auto& extra = m.ck.extra;
  m.ds = load_data<T>(a, extra.value("degree_cap", kDegreeCap));
  if (m.ds.meta.feature_dim != m.ck.spec.input_dim)
    throw DatasetError("dataset feature width " + std::to_string(m.ds.meta.feature_dim) +
                       " does not match checkpoint input_dim " +
                       std::to_string(m.ck.spec.input_dim));
  if (m.ds.meta.n_classes > m.ck.spec.n_classes)
    throw DatasetError("dataset has more classes than the checkpoint head");
  m.solver.tol = static_cast<T>(extra.value("tol", static_cast<double>(default_tol<T>())));
  m.solver.n_backward = extra.value("n_terms", kDefaultBackwardTerms);
  m.solver.max_iter = extra.value("max_iter", kDefaultMaxIter);
  return m;
}

template <typename T>
int cmd_eval(const Args& a) {
  auto m = load_model<T>(a);
  std::vector<std::size_t> all(m.ds.graphs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto ev = evaluate(m.ck.spec, m.ck.state, m.ds.graphs, all, m.solver);
  const json report = {{"command", "eval"},
                       {"dataset", meta_json(m.ds.meta)},
                       {"checkpoint", a.checkpoint},
                       {"accuracy", ev.accuracy},
                       {"loss", ev.loss},
                       {"count", ev.count},
                       {"mean_effective_depth", ev.mean_effective_depth}};
  emit(a, report);
  table_row({"graphs", "accuracy", "loss", "mean_k'"});
  table_row({std::to_string(ev.count), fmt(ev.accuracy), fmt(ev.loss), fmt(ev.mean_effective_depth, 2)});
  return kOk;
}

template <typename T>
int cmd_depth_probe(const Args& a, CLI::Option* eps_opt, CLI::Option* tol_opt) {
  auto m = load_model<T>(a);
  if (m.ck.spec.layer_kind != LayerKind::pprgnn)
    throw ValueError("depth-probe needs a pprgnn checkpoint");
  if (eps_opt->count() > 0) {
    detail::require(a.epsilon > 0.0, "--epsilon must be positive");
    m.ck.spec.epsilon = a.epsilon;
    for (auto& l : m.ck.state.layers) l.epsilon = static_cast<T>(a.epsilon);
  }
  if (tol_opt->count() > 0) {
    detail::require(a.tol > 0.0, "--tol must be positive");
    m.solver.tol = static_cast<T>(a.tol);
  }
  const auto depths = per_graph_depths(m.ck.spec, m.ck.state, m.ds.graphs, m.solver);

  json layers = json::array();
  table_row({"layer", "min k'", "mean k'", "max k'"});
  for (std::size_t l = 0; l < m.ck.spec.n_layers; ++l) {
    std::vector<std::size_t> ks;
    for (const auto& g : depths) ks.push_back(g[l]);
    const auto [lo, hi] = std::minmax_element(ks.begin(), ks.end());
    const double mean = detail::mean_of(ks);
    layers.push_back({{"layer", l}, {"min", *lo}, {"mean", mean}, {"max", *hi}, {"per_graph", ks}});
    table_row({std::to_string(l), std::to_string(*lo), fmt(mean, 2), std::to_string(*hi)});
  }
  emit(a, {{"command", "depth-probe"},
           {"dataset", meta_json(m.ds.meta)},
           {"checkpoint", a.checkpoint},
           {"epsilon", m.ck.spec.epsilon},
           {"tol", static_cast<double>(m.solver.tol)},
           {"layers", layers}});
  return kOk;
}

int cmd_inspect(const Args& a, std::size_t degree_cap) {
  const auto ds = load_tudataset<double>(a.dataset, degree_cap);
  std::map<int, std::size_t> per_class;
  std::size_t edges = 0;
  for (const auto& g : ds.graphs) {
    ++per_class[g.label];
    edges += g.adjacency.nnz();
  }
  json counts = json::object();
  for (const auto& [c, n] : per_class)
    counts[std::to_string(ds.meta.class_values[static_cast<std::size_t>(c)])] = n;
  json report = meta_json(ds.meta);
  report["command"] = "inspect";
  report["avg_edges"] = static_cast<double>(edges) / 2.0 / static_cast<double>(ds.graphs.size());
  report["class_counts"] = counts;
  emit(a, report);
  table_row({"dataset", "graphs", "avg nodes", "classes"});
  table_row({ds.meta.name, std::to_string(ds.meta.n_graphs), fmt(ds.meta.avg_nodes, 1),
             std::to_string(ds.meta.n_classes)});
  return kOk;
}

template <typename F>
int by_precision(const Args& a, F&& f) {
  if (a.precision == "f32") return f(float{});
  return f(double{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized PageRank graph neural network toolkit"};
  app.require_subcommand(1);
  Args a;
  std::size_t degree_cap = kDegreeCap;

  auto* train = app.add_subcommand("train", "Cross-validate, then fit and checkpoint a final model");
  auto* crossval = app.add_subcommand("crossval", "k-fold cross-validation");
  for (auto* sub : {train, crossval}) {
    sub->add_option("--config", a.config, "Flat key = value config file")->required();
    sub->add_option("--dataset", a.dataset, "TUDataset directory")->required();
    sub->add_option("--out", a.out, "Output directory")->required();
    add_precision(sub, a);
  }
  const auto train_over = add_overrides(train, a);
  const auto cv_over = add_overrides(crossval, a);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  auto* probe = app.add_subcommand("depth-probe", "Per-graph effective depth of each layer");
  for (auto* sub : {eval, probe}) {
    sub->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
    sub->add_option("--dataset", a.dataset, "TUDataset directory")->required();
    sub->add_option("--out", a.out, "Also write the JSON report here");
    add_precision(sub, a);
  }
  auto* probe_eps = probe->add_option("--epsilon", a.epsilon, "Override the decay constant");
  auto* probe_tol = probe->add_option("--tol", a.tol, "Override the convergence threshold");

  auto* inspect = app.add_subcommand("inspect", "Dataset statistics");
  inspect->add_option("--dataset", a.dataset, "TUDataset directory")->required();
  inspect->add_option("--out", a.out, "Also write the JSON report here");
  inspect->add_option("--degree-cap", degree_cap, "Degree one-hot cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (train->parsed())
      return by_precision(a, [&](auto t) { return run_crossval<decltype(t)>(a, train_over, true); });
    if (crossval->parsed())
      return by_precision(a, [&](auto t) { return run_crossval<decltype(t)>(a, cv_over, false); });
    if (eval->parsed()) return by_precision(a, [&](auto t) { return cmd_eval<decltype(t)>(a); });
    if (probe->parsed())
      return by_precision(
          a, [&](auto t) { return cmd_depth_probe<decltype(t)>(a, probe_eps, probe_tol); });
    if (inspect->parsed()) return cmd_inspect(a, degree_cap);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const DimensionError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kData;
  } catch (const ValueError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  }
  return kUsage;
}
