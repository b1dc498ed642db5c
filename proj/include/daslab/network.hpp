#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "daslab/data.hpp"
#include "daslab/model_spec.hpp"

namespace daslab {

enum class Mode { train, eval };

/// Where one layer's weights and biases live in the flat parameter vector.
/// Weights come first (row-major, out-major), then biases.
struct LayerSlot {
  std::size_t offset = 0;
  std::size_t weights = 0;
  std::size_t biases = 0;
};

std::vector<LayerSlot> parameter_layout(const ModelSpec& spec);

template <typename T>
struct Params {
  std::vector<T> values;
  std::vector<LayerSlot> layout;

  std::size_t size() const noexcept { return values.size(); }
};

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
template <typename T>
Params<T> init_params(const ModelSpec& spec, std::uint64_t seed);

/// Cached state of a training-mode pass, consumed by backward.
template <typename T>
struct ForwardTrace {
  std::size_t batch = 0;
  /// activations[i] is the input of layer i; activations.back() holds the logits.
  std::vector<std::vector<T>> activations;
  /// Dropout keep flags per layer (empty for non-dropout layers).
  std::vector<std::vector<std::uint8_t>> masks;

  std::span<const T> logits() const { return activations.back(); }
};

template <typename T>
struct ForwardResult {
  std::vector<T> logits;  // batch x num_classes, row-major
  std::optional<ForwardTrace<T>> trace;
};

/// `batch` holds `batch_size` channel-major samples back to back. Train mode
/// draws inverted-dropout masks from `rng` and returns a trace; eval mode is
/// deterministic and leaves `rng` untouched.
template <typename T>
ForwardResult<T> forward(const Params<T>& params, const ModelSpec& spec, std::span<const T> batch,
                         std::size_t batch_size, Mode mode, Rng& rng);

template <typename T>
std::vector<T> forward_eval(const Params<T>& params, const ModelSpec& spec, std::span<const T> batch,
                            std::size_t batch_size);

/// Training-mode pass that reuses the dropout masks of an earlier trace.
template <typename T>
ForwardTrace<T> forward_with_masks(const Params<T>& params, const ModelSpec& spec,
                                   std::span<const T> batch, std::size_t batch_size,
                                   const std::vector<std::vector<std::uint8_t>>& masks);

/// Eval-mode activations entering the final dense layer (batch x width).
template <typename T>
std::vector<T> embed(const Params<T>& params, const ModelSpec& spec, std::span<const T> batch,
                     std::size_t batch_size);

/// Max-subtracted softmax of one logit vector.
template <typename T>
std::vector<T> softmax(std::span<const T> logits);

/// Row-wise softmax of a batch x classes matrix.
template <typename T>
std::vector<T> softmax_rows(std::span<const T> logits, std::size_t classes);

/// Mean of -log(max(p[label], 1e-12)) over the batch.
template <typename T>
T cross_entropy_loss(std::span<const T> probs, std::span<const int> labels, std::size_t classes);

/// Gradient of mean softmax cross-entropy with respect to every parameter.
template <typename T>
std::vector<T> backward(const Params<T>& params, const ModelSpec& spec, const ForwardTrace<T>& trace,
                        std::span<const int> labels);

/// Central finite differences against backward. Every coordinate is checked
/// when the model has at most 2000 parameters, otherwise a seeded sample of
/// 400. Dropout masks are frozen from one seeded training pass. Returns the
/// max of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename T>
double grad_check(const ModelSpec& spec, std::span<const T> batch, std::span<const int> labels,
                  std::uint64_t seed, double eps);

/// Single-precision backward checked against double-precision central
/// differences taken at the same (float-representable) weights. Float finite
/// differences are dominated by round-off long before 1e-3 relative accuracy.
double grad_check_single(const ModelSpec& spec, std::span<const double> batch, std::span<const int> labels,
                         std::uint64_t seed, double eps);

}  // namespace daslab
