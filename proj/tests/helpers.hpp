#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pprgnn/oracle.hpp"
#include "pprgnn/pprgnn.hpp"

namespace testutil {

using pprgnn::CsrMatrix;
using pprgnn::DenseMatrix;
using pprgnn::Index;
using pprgnn::PprgnnParams;

inline DenseMatrix<double> random_dense(std::size_t r, std::size_t c, std::mt19937_64& rng,
                                        double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  DenseMatrix<double> m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// Random undirected graph on n nodes; each pair is an edge with prob p.
/// A path through all nodes is added so no node is isolated.
inline CsrMatrix<double> random_graph(std::size_t n, double p, std::mt19937_64& rng,
                                      bool with_path = true) {
  std::bernoulli_distribution coin(p);
  std::vector<std::pair<Index, Index>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((with_path && j == i + 1) || coin(rng))
        edges.emplace_back(static_cast<Index>(i), static_cast<Index>(j));
  return pprgnn::adjacency_from_edges<double>(n, edges);
}

inline Eigen::MatrixXd to_eigen(const DenseMatrix<double>& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
  return e;
}

inline double spectral_norm(const DenseMatrix<double>& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  return svd.singularValues()(0);
}

/// Rescales `m` in place so its largest singular value equals `target`.
inline void scale_to_spectral_norm(DenseMatrix<double>& m, double target) {
  const double s = spectral_norm(m);
  if (s > 0.0) m *= target / s;
}

inline pprgnn::oracle::Mat to_oracle(const DenseMatrix<double>& m) {
  pprgnn::oracle::Mat out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline pprgnn::oracle::Mat to_oracle(const CsrMatrix<double>& a) {
  pprgnn::oracle::Mat out(a.n_rows(), std::vector<double>(a.n_cols(), 0.0));
  for (std::size_t i = 0; i < a.n_rows(); ++i)
    for (Index p = a.row_offsets()[i]; p < a.row_offsets()[i + 1]; ++p)
      out[i][a.col_indices()[p]] = a.values()[p];
  return out;
}

inline pprgnn::oracle::Params to_oracle(const PprgnnParams<double>& p) {
  return {to_oracle(p.w), to_oracle(p.encoder_w), p.encoder_b, p.epsilon};
}

inline DenseMatrix<double> from_oracle(const pprgnn::oracle::Mat& m) {
  DenseMatrix<double> out(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = m[i][j];
  return out;
}

/// One random layer instance: normalized adjacency, features and params.
struct Instance {
  CsrMatrix<double> a_norm;
  DenseMatrix<double> u;
  PprgnnParams<double> params;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t n, std::size_t f, std::size_t d,
                                double w_norm, double epsilon, bool self_loops = true) {
  Instance inst;
  inst.a_norm = pprgnn::normalize_adjacency(random_graph(n, 0.35, rng), self_loops);
  inst.u = random_dense(n, f, rng);
  inst.params.w = random_dense(d, d, rng);
  scale_to_spectral_norm(inst.params.w, w_norm);
  inst.params.encoder_w = random_dense(f, d, rng);
  std::uniform_real_distribution<double> bias(-0.5, 0.5);
  inst.params.encoder_b.resize(d);
  for (auto& b : inst.params.encoder_b) b = bias(rng);
  inst.params.epsilon = epsilon;
  return inst;
}

/// Outcome of checking one layer's backward against central differences.
struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  /// ||g_N - g_full|| / ||g_full|| over (w, encoder_w, encoder_b) for N = `truncated_terms`.
  double truncation_rel = 0.0;
  std::size_t depth = 0;
};

inline std::vector<double> flat_grads(const pprgnn::BackwardResult<double>& r) {
  std::vector<double> out(r.grads.d_w.data(), r.grads.d_w.data() + r.grads.d_w.size());
  out.insert(out.end(), r.grads.d_encoder_w.data(),
             r.grads.d_encoder_w.data() + r.grads.d_encoder_w.size());
  out.insert(out.end(), r.grads.d_encoder_b.begin(), r.grads.d_encoder_b.end());
  return out;
}

/// Loss sum(C * G(0)) at a depth fixed to the tolerance-driven solve. The
/// analytic side is the library backward over every term; the reference is
/// central differences of the forward-order oracle in long double.
/// Coordinates whose +-h perturbation flips any pre-activation sign are
/// excluded.
inline GradCheck check_layer_gradients(const Instance& inst, std::mt19937_64& rng,
                                       std::size_t truncated_terms = 5, double h = 1e-6) {
  namespace oracle = pprgnn::oracle;
  const auto probe = pprgnn::forward(inst.a_norm, inst.u, inst.params, 1e-6, 5);
  pprgnn::SolverOptions<double> opts;
  opts.fixed_depth = probe.effective_depth;
  opts.n_backward = 5;
  opts.cache_all = true;
  const auto trace = pprgnn::forward(inst.a_norm, inst.u, inst.params, opts);
  const std::size_t k = trace.total_iterations;
  const auto c = random_dense(inst.u.rows(), inst.params.w.cols(), rng);

  const auto full = pprgnn::backward(trace, inst.a_norm, inst.params, c, k);
  const auto cut = pprgnn::backward(trace, inst.a_norm, inst.params, c, truncated_terms);

  const auto a = to_oracle(inst.a_norm);
  auto u = to_oracle(inst.u);
  auto p = to_oracle(inst.params);
  const auto cm = to_oracle(c);
  auto loss = [&] { return oracle::forward_order_weighted_sum(a, u, p, k, cm); };
  auto pattern = [&] {
    std::vector<oracle::Mat> pre;
    oracle::dense_forward_order(a, u, p, k, &pre);
    return oracle::sign_pattern(pre);
  };

  std::vector<double*> coords = oracle::entries(p.w);
  for (auto* x : oracle::entries(p.encoder_w)) coords.push_back(x);
  for (auto& x : p.encoder_b) coords.push_back(&x);
  for (auto* x : oracle::entries(u)) coords.push_back(x);

  std::vector<double> analytic = flat_grads(full);
  analytic.insert(analytic.end(), full.d_input.data(), full.d_input.data() + full.d_input.size());

  const auto fd = oracle::finite_diff_grad(loss, coords, h);
  const auto base = pattern();
  GradCheck out;
  out.depth = k;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double orig = *coords[i];
    *coords[i] = orig + h;
    const bool up_same = pattern() == base;
    *coords[i] = orig - h;
    const bool down_same = pattern() == base;
    *coords[i] = orig;
    if (!up_same || !down_same) {
      ++out.excluded;
      continue;
    }
    ++out.checked;
    out.max_rel_err = std::max(out.max_rel_err, oracle::relative_error(analytic[i], fd[i]));
  }

  const auto gf = flat_grads(full);
  const auto gc = flat_grads(cut);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < gf.size(); ++i) {
    num += (gc[i] - gf[i]) * (gc[i] - gf[i]);
    den += gf[i] * gf[i];
  }
  out.truncation_rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  return out;
}

}  // namespace testutil
