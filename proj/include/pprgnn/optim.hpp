#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "pprgnn/error.hpp"

namespace pprgnn {

/// Flat views over every tensor of a parameter set exposing `visit`.
template <typename T, typename Params>
std::vector<std::span<T>> tensor_views(Params& params) {
  std::vector<std::span<T>> views;
  params.visit([&](std::string_view, std::size_t, std::size_t, std::span<T> v) {
    views.push_back(v);
  });
  return views;
}

template <typename T, typename Params>
std::vector<std::span<const T>> tensor_views(const Params& params) {
  std::vector<std::span<const T>> views;
  params.visit([&](std::string_view, std::size_t, std::size_t, std::span<const T> v) {
    views.push_back(v);
  });
  return views;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// First and second moments plus the step count.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t step = 0;
};

/// Adam with L2 decay folded into the gradient before the moment update.
template <typename T, typename Params>
void adam_step(Params& params, const Params& grads, AdamState<T>& state, const AdamConfig& cfg) {
  auto p = tensor_views<T>(params);
  auto g = tensor_views<T>(grads);
  detail::require_dims(p.size() == g.size(), "adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& t : p) {
      state.m.emplace_back(t.size(), T(0));
      state.v.emplace_back(t.size(), T(0));
    }
  }
  detail::require_dims(state.m.size() == p.size(), "adam_step: optimizer state mismatch");
  for (std::size_t t = 0; t < p.size(); ++t) {
    detail::require_dims(p[t].size() == g[t].size() && p[t].size() == state.m[t].size(),
                         "adam_step: tensor shape mismatch");
    for (T x : g[t])
      if (!std::isfinite(x)) throw NumericalError("adam_step: non-finite gradient");
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto& m = state.m[t];
    auto& v = state.v[t];
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      const T grad = g[t][i] + static_cast<T>(cfg.weight_decay) * p[t][i];
      m[i] = b1 * m[i] + (T(1) - b1) * grad;
      v[i] = b2 * v[i] + (T(1) - b2) * grad * grad;
      const T m_hat = m[i] / static_cast<T>(bc1);
      const T v_hat = v[i] / static_cast<T>(bc2);
      p[t][i] -= static_cast<T>(cfg.lr) * m_hat / (std::sqrt(v_hat) + static_cast<T>(cfg.eps));
    }
  }
}

template <typename T, typename Params>
T global_norm(const Params& grads) {
  T acc = T(0);
  for (auto view : tensor_views<T>(grads))
    for (T x : view) acc += x * x;
  return std::sqrt(acc);
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T, typename Params>
T clip_gradients(Params& grads, T max_norm) {
  detail::require(max_norm > T(0), "clip_gradients: max_norm must be positive");
  const T norm = global_norm<T>(grads);
  if (norm > max_norm) {
    const T scale = max_norm / norm;
    for (auto view : tensor_views<T>(grads))
      for (T& x : view) x *= scale;
  }
  return norm;
}

/// Multiplies the learning rate by `factor` once the loss has not improved
/// by a relative 1e-4 for more than `patience` epochs, then waits
/// `patience` epochs before counting again.
class PlateauScheduler {
 public:
  static constexpr double kRelativeThreshold = 1e-4;

  PlateauScheduler(double lr, std::size_t patience, double factor)
      : lr_(lr), patience_(patience), factor_(factor) {
    detail::require(factor > 0.0 && factor < 1.0, "PlateauScheduler: factor must be in (0, 1)");
  }

  double step(double loss) {
    if (loss < best_ * (1.0 - kRelativeThreshold)) {
      best_ = loss;
      bad_epochs_ = 0;
    } else {
      ++bad_epochs_;
    }
    if (cooldown_ > 0) {
      --cooldown_;
      bad_epochs_ = 0;
    }
    if (bad_epochs_ > patience_) {
      lr_ *= factor_;
      ++reductions_;
      cooldown_ = patience_;
      bad_epochs_ = 0;
    }
    return lr_;
  }

  double lr() const noexcept { return lr_; }
  std::size_t reductions() const noexcept { return reductions_; }

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
  std::size_t cooldown_ = 0;
  std::size_t reductions_ = 0;
};

/// Learning rate after replaying `history` through a PlateauScheduler.
inline double reduce_on_plateau(std::span<const double> history, std::size_t patience,
                                double factor, double lr) {
  PlateauScheduler sched(lr, patience, factor);
  for (double loss : history) sched.step(loss);
  return sched.lr();
}

}  // namespace pprgnn
