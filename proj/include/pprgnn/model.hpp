#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pprgnn/backward.hpp"
#include "pprgnn/csr.hpp"
#include "pprgnn/dense.hpp"
#include "pprgnn/error.hpp"
#include "pprgnn/graph.hpp"
#include "pprgnn/layer.hpp"

namespace pprgnn {

enum class LayerKind { pprgnn, gcn, appnp };
enum class Readout { sum_pool_then_linear, node_linear };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::pprgnn: return "pprgnn";
    case LayerKind::gcn: return "gcn";
    case LayerKind::appnp: return "appnp";
  }
  return "?";
}

inline std::string_view to_string(Readout r) {
  return r == Readout::sum_pool_then_linear ? "sum_pool_then_linear" : "node_linear";
}

inline LayerKind parse_layer_kind(std::string_view s) {
  if (s == "pprgnn") return LayerKind::pprgnn;
  if (s == "gcn") return LayerKind::gcn;
  if (s == "appnp") return LayerKind::appnp;
  throw ValueError("unknown layer kind: " + std::string(s));
}

inline Readout parse_readout(std::string_view s) {
  if (s == "sum_pool_then_linear") return Readout::sum_pool_then_linear;
  if (s == "node_linear") return Readout::node_linear;
  throw ValueError("unknown readout: " + std::string(s));
}

/// Architecture description. appnp_alpha / appnp_k are set iff layer_kind is appnp.
struct ModelSpec {
  LayerKind layer_kind = LayerKind::pprgnn;
  std::size_t n_layers = 3;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 32;
  double epsilon = 1.0;
  std::optional<double> appnp_alpha;
  std::optional<std::size_t> appnp_k;
  bool self_loops = true;
  Readout readout = Readout::sum_pool_then_linear;
  std::size_t n_classes = 2;
  /// Multiplier on the uniform init range of each pprgnn layer's W.
  double w_init_scale = 1.0;

  void validate() const {
    detail::require(n_layers >= 1, "ModelSpec: n_layers must be >= 1");
    detail::require(input_dim >= 1 && hidden_dim >= 1 && n_classes >= 1,
                    "ModelSpec: dimensions must be positive");
    detail::require(epsilon > 0.0, "ModelSpec: epsilon must be positive");
    detail::require(w_init_scale > 0.0, "ModelSpec: w_init_scale must be positive");
    const bool appnp = layer_kind == LayerKind::appnp;
    detail::require(appnp == appnp_alpha.has_value() && appnp == appnp_k.has_value(),
                    "ModelSpec: appnp_alpha/appnp_k must be set iff layer_kind is appnp");
    if (appnp)
      detail::require(*appnp_alpha > 0.0 && *appnp_alpha <= 1.0,
                      "ModelSpec: appnp_alpha must be in (0, 1]");
  }

  std::size_t layer_input_dim(std::size_t layer) const {
    return layer == 0 ? input_dim : hidden_dim;
  }
};

/// Every learnable tensor of a model. Gradients and optimizer moments use
/// the same type. For gcn layers only `w` is used (input x hidden); for
/// appnp layers only the encoder.
template <typename T>
struct ModelState {
  std::vector<PprgnnParams<T>> layers;
  DenseMatrix<T> head_w;
  std::vector<T> head_b;

  /// Calls f(name, rows, cols, span) for each learnable tensor in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  /// Same shapes, all zeros.
  ModelState zeros_like() const {
    ModelState z = *this;
    z.visit([](std::string_view, std::size_t, std::size_t, std::span<T> v) {
      std::fill(v.begin(), v.end(), T(0));
    });
    return z;
  }

  bool all_finite() const {
    bool ok = true;
    visit([&](std::string_view, std::size_t, std::size_t, std::span<const T> v) {
      for (T x : v) ok = ok && std::isfinite(x);
    });
    return ok;
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    using Elem = std::conditional_t<std::is_const_v<Self>, const T, T>;
    auto mat = [&](const std::string& name, auto& m) {
      if (m.size() > 0) f(name, m.rows(), m.cols(), std::span<Elem>(m.data(), m.size()));
    };
    auto vec = [&](const std::string& name, auto& v) {
      if (!v.empty()) f(name, std::size_t{1}, v.size(), std::span<Elem>(v.data(), v.size()));
    };
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      const std::string p = "layer" + std::to_string(i) + ".";
      mat(p + "w", self.layers[i].w);
      mat(p + "encoder_w", self.layers[i].encoder_w);
      vec(p + "encoder_b", self.layers[i].encoder_b);
    }
    mat("head.w", self.head_w);
    vec("head.b", self.head_b);
  }
};

namespace detail {

template <typename T, typename Rng>
DenseMatrix<T> uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const T s = T(1) / std::sqrt(static_cast<T>(rows));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DenseMatrix<T> m(rows, cols);
  for (auto& v : m.flat()) v = static_cast<T>(dist(rng)) * s;
  return m;
}

}  // namespace detail

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
template <typename T>
ModelState<T> init_model_state(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ModelState<T> state;
  const std::size_t d = spec.hidden_dim;
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    PprgnnParams<T> p;
    p.epsilon = static_cast<T>(spec.epsilon);
    const std::size_t in = spec.layer_input_dim(l);
    switch (spec.layer_kind) {
      case LayerKind::pprgnn:
        p.encoder_w = detail::uniform_matrix<T>(in, d, rng);
        p.encoder_b.assign(d, T(0));
        p.w = detail::uniform_matrix<T>(d, d, rng);
        p.w *= static_cast<T>(spec.w_init_scale);
        break;
      case LayerKind::gcn:
        p.w = detail::uniform_matrix<T>(in, d, rng);
        break;
      case LayerKind::appnp:
        p.encoder_w = detail::uniform_matrix<T>(in, d, rng);
        p.encoder_b.assign(d, T(0));
        break;
    }
    state.layers.push_back(std::move(p));
  }
  state.head_w = detail::uniform_matrix<T>(d, spec.n_classes, rng);
  state.head_b.assign(spec.n_classes, T(0));
  return state;
}

/// Everything model_backward needs from a forward pass.
template <typename T>
struct ModelTrace {
  CsrMatrix<T> a_norm;
  /// layer_inputs[i] feeds layer i; layer_inputs.back() feeds the readout.
  std::vector<DenseMatrix<T>> layer_inputs;
  std::vector<FixedPointTrace<T>> layer_traces;
  std::vector<std::size_t> graph_offsets;
  DenseMatrix<T> pooled;

  /// Effective depth k' per pprgnn layer (empty for baselines).
  std::vector<std::size_t> effective_depths() const {
    std::vector<std::size_t> out;
    for (const auto& t : layer_traces) out.push_back(t.effective_depth);
    return out;
  }
};

template <typename T>
struct ForwardResult {
  DenseMatrix<T> logits;
  ModelTrace<T> trace;
};

namespace detail {

template <typename T>
DenseMatrix<T> sum_pool(const DenseMatrix<T>& h, const std::vector<std::size_t>& offsets) {
  const std::size_t n_graphs = offsets.size() - 1;
  DenseMatrix<T> pooled(n_graphs, h.cols());
  for (std::size_t g = 0; g < n_graphs; ++g) {
    auto out = pooled.row(g);
    for (std::size_t i = offsets[g]; i < offsets[g + 1]; ++i) {
      auto r = h.row(i);
      for (std::size_t j = 0; j < h.cols(); ++j) out[j] += r[j];
    }
  }
  return pooled;
}

template <typename T>
DenseMatrix<T> affine(const DenseMatrix<T>& x, const DenseMatrix<T>& w, const std::vector<T>& b) {
  auto y = matmul(x, w);
  add_row_vector(y, std::span<const T>(b));
  return y;
}

/// Adjoint of appnp_propagate with respect to h0.
template <typename T>
DenseMatrix<T> appnp_adjoint(const CsrMatrix<T>& a_norm, const DenseMatrix<T>& d_out, T alpha,
                             std::size_t k) {
  DenseMatrix<T> d_h0(d_out.rows(), d_out.cols());
  DenseMatrix<T> d_h = d_out;
  for (std::size_t l = k; l-- > 0;) {
    for (std::size_t i = 0; i < d_h.size(); ++i) d_h0.data()[i] += alpha * d_h.data()[i];
    d_h = spmm_transpose(a_norm, d_h);
    d_h *= (T(1) - alpha);
  }
  d_h0 += d_h;
  return d_h0;
}

template <typename T>
void mask_by_positive(DenseMatrix<T>& grad, const DenseMatrix<T>& activated) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activated.data()[i] > T(0))) grad.data()[i] = T(0);
}

}  // namespace detail

/// Runs the layer stack and readout. Graph readouts yield one logit row per
/// member graph, node readouts one per node.
template <typename T>
ForwardResult<T> model_forward(const ModelSpec& spec, const ModelState<T>& state,
                               const GraphBatch<T>& batch, const SolverOptions<T>& solver = {}) {
  detail::require_dims(batch.features.cols() == spec.input_dim,
                       "model_forward: feature width does not match model input_dim");
  detail::require_dims(state.layers.size() == spec.n_layers,
                       "model_forward: state layer count does not match spec");
  ForwardResult<T> out;
  auto& tr = out.trace;
  tr.a_norm = normalize_adjacency(batch.adjacency, spec.self_loops);
  tr.graph_offsets = batch.graph_offsets();
  tr.layer_inputs.push_back(batch.features);

  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    const auto& p = state.layers[l];
    const auto& h = tr.layer_inputs.back();
    switch (spec.layer_kind) {
      case LayerKind::pprgnn: {
        auto trace = forward(tr.a_norm, h, p, solver);
        tr.layer_inputs.push_back(trace.output());
        tr.layer_traces.push_back(std::move(trace));
        break;
      }
      case LayerKind::gcn:
        tr.layer_inputs.push_back(gcn_layer(tr.a_norm, h, p.w));
        break;
      case LayerKind::appnp: {
        auto h0 = detail::affine(h, p.encoder_w, p.encoder_b);
        tr.layer_inputs.push_back(relu(appnp_propagate(
            tr.a_norm, h0, static_cast<T>(*spec.appnp_alpha), *spec.appnp_k)));
        break;
      }
    }
  }

  const auto& last = tr.layer_inputs.back();
  if (spec.readout == Readout::sum_pool_then_linear) {
    tr.pooled = detail::sum_pool(last, tr.graph_offsets);
    out.logits = detail::affine(tr.pooled, state.head_w, state.head_b);
  } else {
    out.logits = detail::affine(last, state.head_w, state.head_b);
  }
  return out;
}

/// Reverse pass through the readout and then each layer in reverse order.
template <typename T>
ModelState<T> model_backward(const ModelSpec& spec, const ModelState<T>& state,
                             const ModelTrace<T>& trace, const DenseMatrix<T>& d_logits,
                             std::size_t n_terms = kDefaultBackwardTerms) {
  ModelState<T> grads = state.zeros_like();
  const auto& last = trace.layer_inputs.back();

  DenseMatrix<T> d_h;
  if (spec.readout == Readout::sum_pool_then_linear) {
    detail::require_dims(d_logits.rows() == trace.pooled.rows(),
                         "model_backward: d_logits rows must equal graph count");
    grads.head_w = matmul_tn(trace.pooled, d_logits);
    grads.head_b = column_sums(d_logits);
    auto d_pooled = matmul_nt(d_logits, state.head_w);
    d_h = DenseMatrix<T>(last.rows(), last.cols());
    for (std::size_t g = 0; g + 1 < trace.graph_offsets.size(); ++g) {
      auto src = d_pooled.row(g);
      for (std::size_t i = trace.graph_offsets[g]; i < trace.graph_offsets[g + 1]; ++i) {
        auto dst = d_h.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
  } else {
    detail::require_dims(d_logits.rows() == last.rows(),
                         "model_backward: d_logits rows must equal node count");
    grads.head_w = matmul_tn(last, d_logits);
    grads.head_b = column_sums(d_logits);
    d_h = matmul_nt(d_logits, state.head_w);
  }

  for (std::size_t l = spec.n_layers; l-- > 0;) {
    const auto& p = state.layers[l];
    auto& g = grads.layers[l];
    const auto& input = trace.layer_inputs[l];
    const auto& output = trace.layer_inputs[l + 1];
    switch (spec.layer_kind) {
      case LayerKind::pprgnn: {
        auto r = backward(trace.layer_traces[l], trace.a_norm, p, d_h, n_terms);
        g.w = std::move(r.grads.d_w);
        g.encoder_w = std::move(r.grads.d_encoder_w);
        g.encoder_b = std::move(r.grads.d_encoder_b);
        d_h = std::move(r.d_input);
        break;
      }
      case LayerKind::gcn: {
        detail::mask_by_positive(d_h, output);
        g.w = matmul_tn(spmm(trace.a_norm, input), d_h);
        d_h = spmm_transpose(trace.a_norm, matmul_nt(d_h, p.w));
        break;
      }
      case LayerKind::appnp: {
        detail::mask_by_positive(d_h, output);
        auto d_h0 = detail::appnp_adjoint(trace.a_norm, d_h, static_cast<T>(*spec.appnp_alpha),
                                          *spec.appnp_k);
        g.encoder_w = matmul_tn(input, d_h0);
        g.encoder_b = column_sums(d_h0);
        d_h = matmul_nt(d_h0, p.encoder_w);
        break;
      }
    }
  }
  if (!grads.all_finite()) throw NumericalError("model_backward: non-finite gradient");
  return grads;
}

template <typename T>
struct LossResult {
  T loss;
  DenseMatrix<T> d_logits;
};

/// Mean softmax cross-entropy over rows; gradient (softmax - onehot) / rows.
template <typename T>
LossResult<T> cross_entropy_loss(const DenseMatrix<T>& logits, std::span<const int> labels) {
  detail::require_dims(labels.size() == logits.rows(), "cross_entropy_loss: label count mismatch");
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  LossResult<T> out{T(0), DenseMatrix<T>(n, c)};
  if (n == 0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    detail::require(y >= 0 && static_cast<std::size_t>(y) < c,
                    "cross_entropy_loss: label out of range");
    auto row = logits.row(i);
    const T m = *std::max_element(row.begin(), row.end());
    T z = T(0);
    for (T v : row) z += std::exp(v - m);
    const T log_z = m + std::log(z);
    out.loss += log_z - row[static_cast<std::size_t>(y)];
    auto d = out.d_logits.row(i);
    for (std::size_t j = 0; j < c; ++j) d[j] = std::exp(row[j] - log_z);
    d[static_cast<std::size_t>(y)] -= T(1);
  }
  const T inv = T(1) / static_cast<T>(n);
  out.loss *= inv;
  out.d_logits *= inv;
  return out;
}

template <typename T>
LossResult<T> cross_entropy_loss(const DenseMatrix<T>& logits, const std::vector<int>& labels) {
  return cross_entropy_loss(logits, std::span<const int>(labels));
}

/// Multi-label head: mean sigmoid binary cross-entropy over all entries.
template <typename T>
LossResult<T> sigmoid_bce_loss(const DenseMatrix<T>& logits, const DenseMatrix<T>& targets) {
  detail::require_dims(logits.same_shape(targets), "sigmoid_bce_loss: shape mismatch");
  LossResult<T> out{T(0), DenseMatrix<T>(logits.rows(), logits.cols())};
  if (logits.size() == 0) return out;
  const T inv = T(1) / static_cast<T>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T x = logits.data()[i];
    const T y = targets.data()[i];
    detail::require(y >= T(0) && y <= T(1), "sigmoid_bce_loss: targets must be in [0, 1]");
    // log(1 + exp(-|x|)) + max(x, 0) - x*y
    out.loss += std::log1p(std::exp(-std::abs(x))) + std::max(x, T(0)) - x * y;
    const T sig = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
    out.d_logits.data()[i] = (sig - y) * inv;
  }
  out.loss *= inv;
  return out;
}

template <typename T>
std::vector<T> softmax_row(std::span<const T> row) {
  std::vector<T> p(row.begin(), row.end());
  const T m = *std::max_element(p.begin(), p.end());
  T z = T(0);
  for (T& v : p) z += (v = std::exp(v - m));
  for (T& v : p) v /= z;
  return p;
}

/// Index of the largest logit per row; ties resolve to the lowest index.
template <typename T>
std::vector<int> predict(const DenseMatrix<T>& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

}  // namespace pprgnn
