#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "pprgnn/csr.hpp"
#include "pprgnn/dense.hpp"
#include "pprgnn/error.hpp"

namespace pprgnn {

/// Convergence threshold used when the caller does not pick one.
template <typename T>
constexpr T default_tol() {
  return std::is_same_v<T, float> ? T(1e-4) : T(1e-6);
}

inline constexpr std::size_t kDefaultMaxIter = 300;
inline constexpr std::size_t kDefaultBackwardTerms = 5;

/// Learnable state of one layer: shared propagation weight `w` and the
/// affine encoder producing the teleport state B = U * encoder_w + encoder_b.
/// `w` carries no norm constraint.
template <typename T>
struct PprgnnParams {
  DenseMatrix<T> w;
  DenseMatrix<T> encoder_w;
  std::vector<T> encoder_b;
  T epsilon = T(1);

  std::size_t input_dim() const noexcept { return encoder_w.rows(); }
  std::size_t hidden_dim() const noexcept { return w.rows(); }

  void validate() const {
    detail::require_dims(w.rows() == w.cols(), "PprgnnParams: w must be square");
    detail::require_dims(encoder_w.cols() == w.rows(),
                         "PprgnnParams: encoder output width must equal w dimension");
    detail::require_dims(encoder_b.size() == w.rows(),
                         "PprgnnParams: encoder bias width must equal w dimension");
    detail::require(epsilon > T(0), "PprgnnParams: epsilon must be positive");
  }
};

/// Expansion chance 1 / (1 + n * epsilon) at distance n from the root.
template <typename T>
T decay(T epsilon, std::size_t n) {
  return T(1) / (T(1) + static_cast<T>(n) * epsilon);
}

/// f(U) = U * encoder_w + encoder_b.
template <typename T>
DenseMatrix<T> encode(const DenseMatrix<T>& u, const PprgnnParams<T>& params) {
  detail::require_dims(u.cols() == params.encoder_w.rows(),
                       "encode: feature width does not match encoder");
  auto b = matmul(u, params.encoder_w);
  add_row_vector(b, std::span<const T>(params.encoder_b));
  return b;
}

/// Smallest l such that the influence iterate E(l) has max-abs below `tol`,
/// where E(0) = b and E(l+1) = relu(alpha_{l+1} * A * E(l) * W).
/// A zero `b` returns 1. Throws NumericalError past `max_iter`.
template <typename T>
std::size_t estimate_depth(const CsrMatrix<T>& a_norm, const DenseMatrix<T>& b,
                           const PprgnnParams<T>& params, T tol,
                           std::size_t max_iter = kDefaultMaxIter) {
  detail::require_dims(a_norm.is_square() && a_norm.n_rows() == b.rows(),
                       "estimate_depth: adjacency/state size mismatch");
  detail::require_dims(b.cols() == params.w.rows(), "estimate_depth: state width != w dim");
  detail::require(tol > T(0), "estimate_depth: tol must be positive");
  DenseMatrix<T> e = b;
  std::size_t l = 0;
  while (!(max_abs(e) < tol)) {
    if (l >= max_iter)
      throw NumericalError("estimate_depth: influence did not fall below tol within " +
                           std::to_string(max_iter) + " iterations");
    ++l;
    e = matmul(spmm(a_norm, e), params.w);
    e *= decay(params.epsilon, l);
    e = relu(std::move(e));
  }
  return std::max<std::size_t>(l, 1);
}

/// One flipped step: relu(beta_n * A * next * W + B).
template <typename T>
DenseMatrix<T> flipped_step(const CsrMatrix<T>& a_norm, const DenseMatrix<T>& next,
                            const DenseMatrix<T>& w, const DenseMatrix<T>& b, T beta) {
  auto z = matmul(spmm(a_norm, next), w);
  z *= beta;
  z += b;
  return relu(std::move(z));
}

/// States kept from a flipped solve. `states[i]` is G(i); states[0] is the
/// layer output. Only the most recent window is ever resident.
template <typename T>
struct FixedPointTrace {
  std::vector<DenseMatrix<T>> states;
  std::size_t total_iterations = 0;
  std::size_t effective_depth = 0;
  DenseMatrix<T> input_b;
  DenseMatrix<T> input_u;
  /// Largest number of states held at once while solving.
  std::size_t peak_resident_states = 0;
  /// True when only the output was kept and backward must recompute.
  bool checkpointed = false;

  const DenseMatrix<T>& output() const { return states.front(); }
};

/// Runs G(n) = relu(beta_n A G(n+1) W + B) for n = k-1 .. 0 starting from
/// G(k) = `start` (zero when absent), keeping the last `keep` states.
template <typename T>
FixedPointTrace<T> solve_flipped(const CsrMatrix<T>& a_norm, const DenseMatrix<T>& b,
                                 const PprgnnParams<T>& params, std::size_t k,
                                 std::size_t keep,
                                 const DenseMatrix<T>* start = nullptr) {
  detail::require(keep >= 1, "solve_flipped: must keep at least one state");
  detail::require_dims(a_norm.n_rows() == b.rows() && b.cols() == params.w.rows(),
                       "solve_flipped: shape mismatch");
  std::deque<DenseMatrix<T>> window;
  if (start) {
    detail::require_dims(start->same_shape(b), "solve_flipped: start state shape mismatch");
    window.push_front(*start);
  } else {
    window.emplace_front(b.rows(), b.cols());
  }
  std::size_t peak = window.size();
  for (std::size_t n = k; n-- > 0;) {
    auto g = flipped_step(a_norm, window.front(), params.w, b, decay(params.epsilon, n));
    if (window.size() == keep) window.pop_back();
    window.push_front(std::move(g));
    peak = std::max(peak, window.size());
  }
  FixedPointTrace<T> trace;
  trace.states.assign(std::make_move_iterator(window.begin()),
                      std::make_move_iterator(window.end()));
  trace.total_iterations = k;
  trace.input_b = b;
  trace.peak_resident_states = peak;
  return trace;
}

/// Solver settings shared by forward passes.
template <typename T>
struct SolverOptions {
  T tol = default_tol<T>();
  /// Extra iterations past the estimated depth; also the backward window.
  std::size_t n_backward = kDefaultBackwardTerms;
  std::size_t max_iter = kDefaultMaxIter;
  /// Overrides the estimated depth when set.
  std::optional<std::size_t> fixed_depth;
  /// Keep only the output and recompute states during backward.
  bool checkpointing = false;
  /// Keep every state (untruncated backward, tests).
  bool cache_all = false;
};

/// Full layer forward: encode, estimate depth k', solve the flipped iteration
/// with k = k' + n_backward and cache the trailing window for backward.
template <typename T>
FixedPointTrace<T> forward(const CsrMatrix<T>& a_norm, const DenseMatrix<T>& u,
                           const PprgnnParams<T>& params, const SolverOptions<T>& opts) {
  params.validate();
  detail::require(opts.tol > T(0), "forward: tol must be positive");
  detail::require_dims(a_norm.is_square() && a_norm.n_rows() == u.rows(),
                       "forward: adjacency/feature size mismatch");
  auto b = encode(u, params);
  const std::size_t depth =
      opts.fixed_depth ? *opts.fixed_depth : estimate_depth(a_norm, b, params, opts.tol,
                                                            opts.max_iter);
  const std::size_t k = depth + opts.n_backward;
  std::size_t keep = std::min(opts.n_backward + 2, k + 1);
  if (opts.cache_all) keep = k + 1;
  if (opts.checkpointing) keep = 1;
  auto trace = solve_flipped(a_norm, b, params, k, keep);
  trace.effective_depth = depth;
  trace.input_u = u;
  trace.checkpointed = opts.checkpointing;
  return trace;
}

template <typename T>
FixedPointTrace<T> forward(const CsrMatrix<T>& a_norm, const DenseMatrix<T>& u,
                           const PprgnnParams<T>& params, T tol, std::size_t n_backward,
                           std::size_t max_iter = kDefaultMaxIter) {
  SolverOptions<T> opts;
  opts.tol = tol;
  opts.n_backward = n_backward;
  opts.max_iter = max_iter;
  return forward(a_norm, u, params, opts);
}

/// Max-abs residual of every cached state against the step that produced it.
template <typename T>
T trace_residual(const FixedPointTrace<T>& trace, const CsrMatrix<T>& a_norm,
                 const PprgnnParams<T>& params) {
  T worst = T(0);
  for (std::size_t i = 0; i + 1 < trace.states.size(); ++i) {
    auto g = flipped_step(a_norm, trace.states[i + 1], params.w, trace.input_b,
                          decay(params.epsilon, i));
    worst = std::max(worst, max_abs_diff(g, trace.states[i]));
  }
  return worst;
}

/// relu(A * H * W).
template <typename T>
DenseMatrix<T> gcn_layer(const CsrMatrix<T>& a_norm, const DenseMatrix<T>& h,
                         const DenseMatrix<T>& w) {
  detail::require_dims(a_norm.n_cols() == h.rows(), "gcn_layer: adjacency/state mismatch");
  detail::require_dims(h.cols() == w.rows(), "gcn_layer: state width != w rows");
  return relu(matmul(spmm(a_norm, h), w));
}

/// H(l+1) = (1 - alpha) A H(l) + alpha H(0), repeated k times.
template <typename T>
DenseMatrix<T> appnp_propagate(const CsrMatrix<T>& a_norm, const DenseMatrix<T>& h0, T alpha,
                               std::size_t k) {
  detail::require(alpha > T(0) && alpha <= T(1), "appnp_propagate: alpha must be in (0, 1]");
  detail::require_dims(a_norm.is_square() && a_norm.n_rows() == h0.rows(),
                       "appnp_propagate: adjacency/state mismatch");
  DenseMatrix<T> h = h0;
  for (std::size_t l = 0; l < k; ++l) {
    auto next = spmm(a_norm, h);
    next *= (T(1) - alpha);
    for (std::size_t i = 0; i < next.size(); ++i) next.data()[i] += alpha * h0.data()[i];
    h = std::move(next);
  }
  return h;
}

/// Power iteration r <- A r with unit 1-norm renormalisation. Columns of `a`
/// are rescaled to sum to one unless already stochastic.
template <typename T>
std::vector<T> pagerank_power(const CsrMatrix<T>& a, std::vector<T> r, std::size_t k) {
  detail::require_dims(a.is_square() && a.n_rows() == r.size(),
                       "pagerank_power: matrix/vector size mismatch");
  auto normalize_l1 = [](std::vector<T>& v) {
    T s = T(0);
    for (T x : v) s += std::abs(x);
    if (!(s > T(0))) throw ValueError("pagerank_power: zero vector");
    for (T& x : v) x /= s;
  };
  normalize_l1(r);

  std::vector<T> col_sum(a.n_cols(), T(0));
  for (std::size_t p = 0; p < a.nnz(); ++p) col_sum[a.col_indices()[p]] += a.values()[p];
  std::vector<T> vals(a.values());
  for (std::size_t p = 0; p < a.nnz(); ++p) {
    const T s = col_sum[a.col_indices()[p]];
    if (s > T(0)) vals[p] /= s;
  }
  const CsrMatrix<T> stochastic(a.n_rows(), a.n_cols(), a.row_offsets(), a.col_indices(),
                                std::move(vals));

  for (std::size_t step = 0; step < k; ++step) {
    DenseMatrix<T> col(r.size(), 1, r);
    auto next = spmm(stochastic, col);
    r.assign(next.data(), next.data() + next.size());
    normalize_l1(r);
  }
  return r;
}

}  // namespace pprgnn
