#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "pprgnn/csr.hpp"
#include "pprgnn/dense.hpp"
#include "pprgnn/error.hpp"
#include "pprgnn/layer.hpp"

namespace pprgnn {

/// Gradients of one layer. Shapes mirror PprgnnParams; d_b is dL/dB (n x d).
template <typename T>
struct LayerGrads {
  DenseMatrix<T> d_w;
  DenseMatrix<T> d_b;
  DenseMatrix<T> d_encoder_w;
  std::vector<T> d_encoder_b;
};

template <typename T>
struct BackwardResult {
  LayerGrads<T> grads;
  /// dL/dU, the gradient handed to whatever produced the layer input.
  DenseMatrix<T> d_input;
  std::size_t terms_used = 0;
  /// Most cached states held at once during the backward pass.
  std::size_t peak_resident_states = 0;
};

/// Regenerates G(0..upto) by re-running the flipped iteration of depth `k`.
/// Arithmetic is identical to the forward solve, so results match bitwise.
template <typename T>
std::vector<DenseMatrix<T>> recompute_states(const CsrMatrix<T>& a_norm,
                                             const DenseMatrix<T>& b,
                                             const PprgnnParams<T>& params, std::size_t k,
                                             std::size_t upto,
                                             std::size_t* peak_resident = nullptr) {
  detail::require(k >= upto, "recompute_states: k must be >= upto");
  auto trace = solve_flipped(a_norm, b, params, k, upto + 1);
  if (peak_resident) *peak_resident = trace.peak_resident_states;
  return std::move(trace.states);
}

/// Truncated reverse pass over the first `n_terms` summands:
///   dZ(n)   = 1[G(n) > 0] * dG(n)
///   dW     += beta_n (A G(n+1))^T dZ(n)
///   dB     += dZ(n)
///   dG(n+1) = beta_n A^T dZ(n) W^T
/// starting from dG(0) = d_output. `n_terms` is clamped to the solve depth.
template <typename T>
BackwardResult<T> backward(const FixedPointTrace<T>& trace, const CsrMatrix<T>& a_norm,
                           const PprgnnParams<T>& params, const DenseMatrix<T>& d_output,
                           std::size_t n_terms = kDefaultBackwardTerms) {
  detail::require(n_terms >= 1, "backward: n_terms must be at least 1");
  detail::require_dims(d_output.same_shape(trace.output()),
                       "backward: d_output shape must match layer output");
  const std::size_t terms = std::min(n_terms, trace.total_iterations);

  BackwardResult<T> result;
  result.terms_used = terms;

  std::vector<DenseMatrix<T>> recomputed;
  const std::vector<DenseMatrix<T>>* states = &trace.states;
  result.peak_resident_states = trace.states.size();
  if (trace.checkpointed || trace.states.size() < terms + 1) {
    if (!trace.checkpointed)
      throw ValueError("backward: trace holds fewer than n_terms + 1 states");
    std::size_t peak = 0;
    recomputed = recompute_states(a_norm, trace.input_b, params, trace.total_iterations, terms,
                                  &peak);
    states = &recomputed;
    result.peak_resident_states = std::max(peak, recomputed.size() + 1);
  }

  const std::size_t n = d_output.rows();
  const std::size_t d = d_output.cols();
  auto& g = result.grads;
  g.d_w = DenseMatrix<T>(d, d);
  g.d_b = DenseMatrix<T>(n, d);

  DenseMatrix<T> d_state = d_output;
  for (std::size_t step = 0; step < terms; ++step) {
    const auto& current = (*states)[step];
    const auto& next = (*states)[step + 1];
    const T beta = decay(params.epsilon, step);

    DenseMatrix<T> d_pre = d_state;
    for (std::size_t i = 0; i < d_pre.size(); ++i)
      if (!(current.data()[i] > T(0))) d_pre.data()[i] = T(0);

    auto contrib = matmul_tn(spmm(a_norm, next), d_pre);
    contrib *= beta;
    g.d_w += contrib;
    g.d_b += d_pre;

    if (step + 1 < terms) {
      d_state = spmm_transpose(a_norm, matmul_nt(d_pre, params.w));
      d_state *= beta;
    }
  }

  g.d_encoder_w = matmul_tn(trace.input_u, g.d_b);
  g.d_encoder_b = column_sums(g.d_b);
  result.d_input = matmul_nt(g.d_b, params.encoder_w);

  const bool finite = all_finite(g.d_w) && all_finite(g.d_b) && all_finite(g.d_encoder_w) &&
                      all_finite(result.d_input) &&
                      std::all_of(g.d_encoder_b.begin(), g.d_encoder_b.end(),
                                  [](T v) { return std::isfinite(v); });
  if (!finite) throw NumericalError("backward: non-finite gradient");
  return result;
}

}  // namespace pprgnn
