#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <future>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pprgnn/error.hpp"
#include "pprgnn/graph.hpp"
#include "pprgnn/layer.hpp"
#include "pprgnn/model.hpp"
#include "pprgnn/optim.hpp"

namespace pprgnn {

/// Optimisation and solver hyperparameters. `epsilon` and `self_loops`
/// override the matching ModelSpec fields.
struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 1e-6;
  std::optional<double> grad_clip = 25.0;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::size_t folds = 10;
  std::size_t plateau_patience = 10;
  double plateau_factor = 0.5;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  std::size_t n_terms = kDefaultBackwardTerms;
  double epsilon = 1.0;
  bool self_loops = true;
  std::size_t max_iter = kDefaultMaxIter;
  bool checkpointing = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    detail::require(lr > 0.0, "TrainConfig: lr must be positive");
    detail::require(weight_decay >= 0.0, "TrainConfig: weight_decay must be non-negative");
    detail::require(!grad_clip || *grad_clip > 0.0, "TrainConfig: grad_clip must be positive");
    detail::require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    detail::require(plateau_factor > 0.0 && plateau_factor < 1.0,
                    "TrainConfig: plateau_factor must be in (0, 1)");
    detail::require(tol > 0.0, "TrainConfig: tol must be positive");
    detail::require(n_terms >= 1, "TrainConfig: n_terms must be >= 1");
    detail::require(epsilon > 0.0, "TrainConfig: epsilon must be positive");
  }

  template <typename T>
  SolverOptions<T> solver() const {
    SolverOptions<T> s;
    s.tol = static_cast<T>(tol);
    s.n_backward = n_terms;
    s.max_iter = max_iter;
    s.checkpointing = checkpointing;
    return s;
  }

  AdamConfig adam(double current_lr) const {
    return {current_lr, adam_beta1, adam_beta2, adam_eps, weight_decay};
  }

  ModelSpec apply(ModelSpec spec) const {
    spec.epsilon = epsilon;
    spec.self_loops = self_loops;
    return spec;
  }
};

/// One line of the metrics stream.
struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t fold = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
  double mean_effective_depth = 0.0;
  double wall_ms = 0.0;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},         {"fold", r.fold},   {"train_loss", r.train_loss},
          {"train_acc", r.train_acc}, {"val_acc", r.val_acc}, {"lr", r.lr},
          {"mean_effective_depth", r.mean_effective_depth}, {"wall_ms", r.wall_ms}};
}

using MetricsSink = std::function<void(const EpochRecord&)>;

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
  double final_train_acc = 0.0;
  double final_train_loss = 0.0;
  double mean_effective_depth = 0.0;
  std::vector<EpochRecord> history;
};

inline nlohmann::json to_json(const FoldResult& f) {
  return {{"fold", f.fold},
          {"n_train", f.n_train},
          {"n_val", f.n_val},
          {"best_val_acc", f.best_val_acc},
          {"best_epoch", f.best_epoch},
          {"final_train_acc", f.final_train_acc},
          {"final_train_loss", f.final_train_loss},
          {"mean_effective_depth", f.mean_effective_depth}};
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
  double mean_effective_depth = 0.0;
  std::size_t count = 0;
};

namespace detail {

template <typename T>
std::vector<int> batch_targets(const ModelSpec& spec, const GraphBatch<T>& batch) {
  if (spec.readout == Readout::sum_pool_then_linear) return batch.graph_labels;
  if (!batch.node_labels) throw ValueError("node readout requires node labels");
  return *batch.node_labels;
}

inline double mean_of(const std::vector<std::size_t>& xs) {
  if (xs.empty()) return 0.0;
  return static_cast<double>(std::accumulate(xs.begin(), xs.end(), std::size_t{0})) /
         static_cast<double>(xs.size());
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace detail

/// Accuracy and mean loss over `indices`, evaluated in chunks of `batch_size`.
template <typename T>
Evaluation evaluate(const ModelSpec& spec, const ModelState<T>& state,
                    const std::vector<Graph<T>>& graphs, std::span<const std::size_t> indices,
                    const SolverOptions<T>& solver, std::size_t batch_size = 64) {
  Evaluation ev;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  std::vector<std::size_t> depths;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const auto batch = batch_graphs(graphs, chunk);
    const auto fwd = model_forward(spec, state, batch, solver);
    const auto targets = detail::batch_targets(spec, batch);
    const auto pred = predict(fwd.logits);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == targets[i];
    loss_sum += static_cast<double>(cross_entropy_loss(fwd.logits, targets).loss) *
                static_cast<double>(pred.size());
    ev.count += pred.size();
    for (auto k : fwd.trace.effective_depths()) depths.push_back(k);
  }
  if (ev.count > 0) {
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.count);
    ev.loss = loss_sum / static_cast<double>(ev.count);
  }
  ev.mean_effective_depth = detail::mean_of(depths);
  return ev;
}

/// Effective depth k' of every pprgnn layer for each graph on its own,
/// indexed [graph][layer]. A batched forward would report one k' per batch.
template <typename T>
std::vector<std::vector<std::size_t>> per_graph_depths(const ModelSpec& spec,
                                                       const ModelState<T>& state,
                                                       const std::vector<Graph<T>>& graphs,
                                                       const SolverOptions<T>& solver) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(graphs.size());
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const std::size_t one[] = {g};
    const auto batch = batch_graphs(graphs, std::span<const std::size_t>(one));
    out.push_back(model_forward(spec, state, batch, solver).trace.effective_depths());
  }
  return out;
}

template <typename T>
struct TrainOutcome {
  ModelState<T> state;
  FoldResult result;
};

/// Trains one model on `train_idx`, scoring `val_idx` after every epoch
/// (skipped when empty). The learning rate follows PlateauScheduler on the
/// training loss.
template <typename T>
TrainOutcome<T> train_model(const std::vector<Graph<T>>& graphs,
                            std::span<const std::size_t> train_idx,
                            std::span<const std::size_t> val_idx, const ModelSpec& base_spec,
                            const TrainConfig& cfg, std::size_t fold, std::uint64_t seed,
                            const MetricsSink& sink = {}) {
  cfg.validate();
  const ModelSpec spec = cfg.apply(base_spec);
  spec.validate();
  const auto solver = cfg.solver<T>();
  std::mt19937_64 rng(seed);

  TrainOutcome<T> out;
  out.state = init_model_state<T>(spec, rng());
  auto& res = out.result;
  res.fold = fold;
  res.n_train = train_idx.size();
  res.n_val = val_idx.size();

  AdamState<T> adam;
  PlateauScheduler sched(cfg.lr, cfg.plateau_patience, cfg.plateau_factor);
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  std::vector<std::size_t> all_depths;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t correct = 0;
    std::vector<std::size_t> depths;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> chunk(order.data() + start,
                                               std::min(cfg.batch_size, order.size() - start));
      const auto batch = batch_graphs(graphs, chunk);
      const auto targets = detail::batch_targets(spec, batch);
      const auto fwd = model_forward(spec, out.state, batch, solver);
      const auto loss = cross_entropy_loss(fwd.logits, targets);
      auto grads = model_backward(spec, out.state, fwd.trace, loss.d_logits, cfg.n_terms);
      if (cfg.grad_clip) clip_gradients<T>(grads, static_cast<T>(*cfg.grad_clip));
      adam_step<T>(out.state, grads, adam, cfg.adam(sched.lr()));

      const auto pred = predict(fwd.logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == targets[i];
      loss_sum += static_cast<double>(loss.loss) * static_cast<double>(pred.size());
      seen += pred.size();
      for (auto k : fwd.trace.effective_depths()) depths.push_back(k);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.fold = fold;
    rec.lr = sched.lr();
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    if (!std::isfinite(rec.train_loss)) throw NumericalError("training loss became non-finite");
    sched.step(rec.train_loss);
    if (!val_idx.empty()) {
      const auto ev = evaluate(spec, out.state, graphs, val_idx, solver);
      rec.val_acc = ev.accuracy;
      if (ev.accuracy > res.best_val_acc || res.best_epoch == 0) {
        res.best_val_acc = ev.accuracy;
        res.best_epoch = epoch;
      }
    }
    rec.mean_effective_depth = detail::mean_of(depths);
    all_depths.insert(all_depths.end(), depths.begin(), depths.end());
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    res.final_train_acc = rec.train_acc;
    res.final_train_loss = rec.train_loss;
    res.history.push_back(rec);
    if (sink) sink(rec);
  }
  res.mean_effective_depth = detail::mean_of(all_depths);
  return out;
}

/// Stratified assignment of samples to `folds` folds. Each class is shuffled
/// with `seed` and dealt round-robin, continuing the fold cursor across
/// classes so fold sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels,
                                                              std::size_t folds,
                                                              std::uint64_t seed) {
  detail::require(folds >= 2, "stratified_folds: folds must be >= 2");
  detail::require(folds <= labels.size(), "stratified_folds: more folds than samples");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t cursor = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) out[cursor++ % folds].push_back(i);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

struct FoldReport {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_effective_depth = 0.0;
};

inline nlohmann::json to_json(const FoldReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) folds.push_back(to_json(f));
  return {{"folds", folds},
          {"mean_accuracy", r.mean_accuracy},
          {"std_accuracy", r.std_accuracy},
          {"mean_effective_depth", r.mean_effective_depth}};
}

/// Stratified k-fold cross-validation; one independently seeded model per
/// fold. Fails when a training split would miss a class. Folds run on up to
/// `jobs` threads; results are reported in fold order.
template <typename T>
FoldReport run_cross_validation(const std::vector<Graph<T>>& graphs, const ModelSpec& spec,
                                const TrainConfig& cfg, std::size_t jobs = 1,
                                const MetricsSink& sink = {}) {
  cfg.validate();
  detail::require(cfg.folds >= 2, "run_cross_validation: folds must be >= 2");
  std::vector<int> labels;
  labels.reserve(graphs.size());
  for (const auto& g : graphs) labels.push_back(g.label);
  const auto folds = stratified_folds(labels, cfg.folds, cfg.seed);
  const std::set<int> all_classes(labels.begin(), labels.end());

  std::vector<std::vector<std::size_t>> train_sets(cfg.folds);
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    std::set<int> present;
    for (std::size_t g = 0; g < cfg.folds; ++g) {
      if (g == f) continue;
      train_sets[f].insert(train_sets[f].end(), folds[g].begin(), folds[g].end());
      for (auto i : folds[g]) present.insert(labels[i]);
    }
    std::sort(train_sets[f].begin(), train_sets[f].end());
    if (present != all_classes)
      throw ValueError("run_cross_validation: a class is absent from the training split of fold " +
                       std::to_string(f));
  }

  std::mutex sink_mutex;
  const MetricsSink guarded = [&](const EpochRecord& r) {
    if (!sink) return;
    std::lock_guard lock(sink_mutex);
    sink(r);
  };
  auto run_fold = [&](std::size_t f) {
    return train_model<T>(graphs, train_sets[f], folds[f], spec, cfg, f,
                          detail::derive_seed(cfg.seed, f), guarded)
        .result;
  };

  FoldReport report;
  report.folds.resize(cfg.folds);
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, cfg.folds));
  if (workers == 1) {
    for (std::size_t f = 0; f < cfg.folds; ++f) report.folds[f] = run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.push_back(std::async(std::launch::async, [&] {
        for (std::size_t f = next++; f < cfg.folds; f = next++) report.folds[f] = run_fold(f);
      }));
    for (auto& p : pool) p.get();
  }

  double sum = 0.0;
  double depth = 0.0;
  for (const auto& f : report.folds) {
    sum += f.best_val_acc;
    depth += f.mean_effective_depth;
  }
  const double n = static_cast<double>(report.folds.size());
  report.mean_accuracy = sum / n;
  report.mean_effective_depth = depth / n;
  double var = 0.0;
  for (const auto& f : report.folds) var += (f.best_val_acc - report.mean_accuracy) *
                                            (f.best_val_acc - report.mean_accuracy);
  report.std_accuracy = std::sqrt(var / n);
  return report;
}

/// Seeded shuffle split; the first `train_fraction` of the permutation trains.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_test_split(
    std::size_t n, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto cut = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(n)));
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

}  // namespace pprgnn
