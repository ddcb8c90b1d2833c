#pragma once

// Brute-force references for tests and acceptance. Everything here works on
// nested std::vector<double> with plain loops and deliberately avoids the
// library's dense/sparse kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pprgnn::oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat mul(const Mat& a, const Mat& b) {
  const std::size_t n = a.size();
  const std::size_t inner = b.size();
  const std::size_t m = inner ? b[0].size() : 0;
  Mat c = zeros(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].size() != inner) throw std::invalid_argument("oracle::mul: inner dims differ");
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < inner; ++p) s += a[i][p] * b[p][j];
      c[i][j] = s;
    }
  }
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t = zeros(a.empty() ? 0 : a[0].size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

inline double max_abs(const Mat& a) {
  double m = 0.0;
  for (const auto& r : a)
    for (double v : r) m = std::max(m, std::abs(v));
  return m;
}

/// Layer parameters in oracle form.
struct Params {
  Mat w;
  Mat encoder_w;
  std::vector<double> encoder_b;
  double epsilon = 1.0;
};

inline Mat teleport(const Mat& u, const Params& p) {
  Mat b = mul(u, p.encoder_w);
  for (auto& row : b)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += p.encoder_b[j];
  return b;
}

/// relu(alpha * A * H * W + B) computed entry by entry.
inline Mat step(const Mat& a, const Mat& h, const Mat& w, const Mat& b, double alpha,
                Mat* pre = nullptr) {
  const Mat ah = mul(a, h);
  const Mat ahw = mul(ah, w);
  Mat out = zeros(b.size(), b.empty() ? 0 : b[0].size());
  if (pre) *pre = out;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) {
      const double z = alpha * ahw[i][j] + b[i][j];
      if (pre) (*pre)[i][j] = z;
      out[i][j] = relu(z);
    }
  return out;
}

/// Forward-order recursion H(l+1) = relu(alpha_l A H(l) W + B), H(0) = 0,
/// alpha_l = 1 / (1 + (k - l - 1) epsilon). Returns H(k). When `pre` is given
/// it receives every pre-activation.
inline Mat dense_forward_order(const Mat& a, const Mat& u, const Params& p, std::size_t k,
                               std::vector<Mat>* pre = nullptr) {
  const Mat b = teleport(u, p);
  Mat h = zeros(b.size(), p.w.size());
  for (std::size_t l = 0; l < k; ++l) {
    const double alpha = 1.0 / (1.0 + static_cast<double>(k - l - 1) * p.epsilon);
    Mat z;
    h = step(a, h, p.w, b, alpha, pre ? &z : nullptr);
    if (pre) pre->push_back(std::move(z));
  }
  return h;
}

/// sum(C * H(k)) for the dense_forward_order recursion, carried out in long
/// double throughout.
inline long double forward_order_weighted_sum(const Mat& a, const Mat& u, const Params& p,
                                              std::size_t k, const Mat& c) {
  using X = std::vector<std::vector<long double>>;
  const std::size_t n = u.size(), d = p.w.size();
  X b(n, std::vector<long double>(d, 0.0L));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      long double s = p.encoder_b[j];
      for (std::size_t q = 0; q < u[i].size(); ++q)
        s += static_cast<long double>(u[i][q]) * p.encoder_w[q][j];
      b[i][j] = s;
    }
  X h(n, std::vector<long double>(d, 0.0L)), ah = h;
  for (std::size_t l = 0; l < k; ++l) {
    const long double alpha = 1.0L / (1.0L + static_cast<long double>(k - l - 1) * p.epsilon);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        long double s = 0.0L;
        for (std::size_t q = 0; q < n; ++q) s += static_cast<long double>(a[i][q]) * h[q][j];
        ah[i][j] = s;
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        long double s = 0.0L;
        for (std::size_t q = 0; q < d; ++q) s += ah[i][q] * p.w[q][j];
        const long double z = alpha * s + b[i][j];
        h[i][j] = z > 0.0L ? z : 0.0L;
      }
  }
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) total += static_cast<long double>(c[i][j]) * h[i][j];
  return total;
}

/// Flipped recursion G(n) = relu(beta_n A G(n+1) W + B) from G(k) = start.
inline Mat dense_flipped(const Mat& a, const Mat& b, const Params& p, std::size_t k,
                         const Mat& start) {
  Mat g = start;
  for (std::size_t n = k; n-- > 0;)
    g = step(a, g, p.w, b, 1.0 / (1.0 + static_cast<double>(n) * p.epsilon));
  return g;
}

/// Influence iteration E(l+1) = relu(schedule[l] A E(l) W) from E(0) = e0.
inline Mat dense_influence(const Mat& a, const Mat& e0, const Mat& w,
                           const std::vector<double>& schedule) {
  Mat e = e0;
  const Mat none = zeros(e0.size(), e0.empty() ? 0 : e0[0].size());
  for (double s : schedule) e = step(a, e, w, none, s);
  return e;
}

/// Replays the depth probe: alpha_{l+1} = 1/(1+(l+1) eps) applied at step l,
/// returning the first l with max|E(l)| < tol (at least 1).
inline std::size_t dense_depth(const Mat& a, const Mat& b, const Params& p, double tol,
                               std::size_t cap) {
  Mat e = b;
  const Mat none = zeros(b.size(), p.w.size());
  std::size_t l = 0;
  while (!(max_abs(e) < tol)) {
    if (l >= cap) throw std::runtime_error("oracle depth probe exceeded cap");
    ++l;
    e = step(a, e, p.w, none, 1.0 / (1.0 + static_cast<double>(l) * p.epsilon));
  }
  return std::max<std::size_t>(l, 1);
}

/// Direct stopping rule: recompute the full k-step solution for k = 1, 2, ...
/// until successive solutions differ by less than `tol` in max-norm.
inline std::pair<Mat, std::size_t> dense_fixed_point(const Mat& a, const Mat& u,
                                                     const Params& p, double tol,
                                                     std::size_t cap) {
  Mat prev = dense_forward_order(a, u, p, 1);
  for (std::size_t k = 1; k <= cap; ++k) {
    Mat next = dense_forward_order(a, u, p, k + 1);
    if (max_abs_diff(prev, next) < tol) return {prev, k};
    prev = std::move(next);
  }
  throw std::runtime_error("oracle fixed point exceeded cap");
}

/// relu(A H W).
inline Mat dense_gcn(const Mat& a, const Mat& h, const Mat& w) {
  Mat out = mul(mul(a, h), w);
  for (auto& r : out)
    for (double& v : r) v = relu(v);
  return out;
}

/// k steps of H <- (1 - alpha) A H + alpha H0.
inline Mat dense_appnp(const Mat& a, const Mat& h0, double alpha, std::size_t k) {
  Mat h = h0;
  for (std::size_t l = 0; l < k; ++l) {
    Mat ah = mul(a, h);
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = 0; j < h[i].size(); ++j)
        h[i][j] = (1.0 - alpha) * ah[i][j] + alpha * h0[i][j];
  }
  return h;
}

/// Central differences (L(x + h e_i) - L(x - h e_i)) / 2h for every entry of
/// `x`, taken in the precision `loss` returns. `x` is restored before
/// returning.
template <typename Loss>
std::vector<double> finite_diff_grad(const Loss& loss, std::vector<double*> x, double h = 1e-6) {
  using R = decltype(loss());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = *x[i];
    *x[i] = orig + h;
    const R up = loss();
    *x[i] = orig - h;
    const R down = loss();
    *x[i] = orig;
    g[i] = static_cast<double>((up - down) / (R(2) * static_cast<R>(h)));
  }
  return g;
}

/// Pointers to every entry of a matrix, row-major.
inline std::vector<double*> entries(Mat& m) {
  std::vector<double*> out;
  for (auto& r : m)
    for (double& v : r) out.push_back(&v);
  return out;
}

/// Relative error metric |a - f| / (|f| + 1e-8).
inline double relative_error(double analytic, double fd) {
  return std::abs(analytic - fd) / (std::abs(fd) + 1e-8);
}

/// Sign pattern of pre-activations, used to drop finite-difference
/// coordinates whose perturbation crosses a ReLU kink.
inline std::vector<bool> sign_pattern(const std::vector<Mat>& pre) {
  std::vector<bool> s;
  for (const auto& m : pre)
    for (const auto& r : m)
      for (double v : r) s.push_back(v > 0.0);
  return s;
}

/// Smallest |z| over all pre-activations.
inline double min_abs_preactivation(const std::vector<Mat>& pre) {
  double m = INFINITY;
  for (const auto& mat : pre)
    for (const auto& r : mat)
      for (double v : r) m = std::min(m, std::abs(v));
  return m;
}

}  // namespace pprgnn::oracle
