#include "daslab/adam.hpp"

#include <cmath>
#include <string>

#include "daslab/errors.hpp"

namespace daslab {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw StructuralError("Adam: parameter, gradient and moment lengths differ");
  }
  const std::uint64_t step = state.t + 1;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(static_cast<double>(grads[i]))) {
      throw DivergenceError("non-finite gradient at optimizer step " + std::to_string(step) +
                            " (coordinate " + std::to_string(i) + ")");
    }
  }
  state.t = step;
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(state.beta1, static_cast<double>(step)));
  const T correction2 = static_cast<T>(1.0 - std::pow(state.beta2, static_cast<double>(step)));
  const T lr = static_cast<T>(state.learning_rate);
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    const T m_hat = state.m[i] / correction1;
    const T v_hat = state.v[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&);

}  // namespace daslab
