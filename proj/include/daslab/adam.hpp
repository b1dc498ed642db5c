#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace daslab {

inline constexpr double kDefaultLearningRate = 1e-4;

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = kDefaultLearningRate;

  static AdamState fresh(std::size_t size, double learning_rate = kDefaultLearningRate) {
    AdamState s;
    s.m.assign(size, T(0));
    s.v.assign(size, T(0));
    s.learning_rate = learning_rate;
    return s;
  }
};

/// One bias-corrected Adam update, in place:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,  t <- t+1
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// Throws DivergenceError naming the step when any gradient is non-finite;
/// params and state are left untouched in that case.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state);

}  // namespace daslab
