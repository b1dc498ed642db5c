#include "daslab/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <variant>

#include "daslab/errors.hpp"

namespace daslab {

std::vector<LayerSlot> parameter_layout(const ModelSpec& spec) {
  std::vector<LayerSlot> layout;
  layout.reserve(spec.layers.size());
  std::size_t offset = 0;
  for (const auto& layer : spec.layers) {
    LayerSlot slot{offset, weight_count(layer), bias_count(layer)};
    offset += slot.weights + slot.biases;
    layout.push_back(slot);
  }
  return layout;
}

template <typename T>
Params<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Params<T> params;
  params.layout = parameter_layout(spec);
  params.values.assign(parameter_count(spec), T(0));
  Rng rng(seed);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& slot = params.layout[i];
    if (slot.weights == 0) continue;
    std::size_t fan_in = 0;
    if (const auto* d = std::get_if<DenseLayer>(&spec.layers[i])) fan_in = d->in;
    if (const auto* c = std::get_if<ConvLayer>(&spec.layers[i])) fan_in = c->in_channels * c->kernel * c->kernel;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1))));
    for (std::size_t w = 0; w < slot.weights; ++w) params.values[slot.offset + w] = static_cast<T>(dist(rng));
  }
  return params;
}

namespace {

using Masks = std::vector<std::vector<std::uint8_t>>;

enum class DropoutSource { identity, draw, reuse };

struct ConvGeometry {
  ImageShape in;
  ImageShape out;
  ConvLayer conv;

  std::size_t rows() const { return conv.in_channels * conv.kernel * conv.kernel; }
  std::size_t positions() const { return out.height * out.width; }
};

template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols) {
  const std::size_t k = g.conv.kernel;
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.in.channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * positions;
        for (std::size_t oy = 0; oy < g.out.height; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.conv.stride + ky) - static_cast<std::ptrdiff_t>(g.conv.pad);
          for (std::size_t ox = 0; ox < g.out.width; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.conv.stride + kx) - static_cast<std::ptrdiff_t>(g.conv.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.in.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.in.width);
            row[oy * g.out.width + ox] =
                inside ? input[(c * g.in.height + static_cast<std::size_t>(iy)) * g.in.width + static_cast<std::size_t>(ix)]
                       : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* grad_input) {
  const std::size_t k = g.conv.kernel;
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.in.channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * positions;
        for (std::size_t oy = 0; oy < g.out.height; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.conv.stride + ky) - static_cast<std::ptrdiff_t>(g.conv.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in.height)) continue;
          for (std::size_t ox = 0; ox < g.out.width; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.conv.stride + kx) - static_cast<std::ptrdiff_t>(g.conv.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in.width)) continue;
            grad_input[(c * g.in.height + static_cast<std::size_t>(iy)) * g.in.width + static_cast<std::size_t>(ix)] +=
                row[oy * g.out.width + ox];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T> conv_forward(const T* weights, const T* biases, const ConvGeometry& g,
                            std::span<const T> input, std::size_t batch) {
  const std::size_t rows = g.rows();
  const std::size_t positions = g.positions();
  const std::size_t oc_count = g.conv.out_channels;
  std::vector<T> out(batch * oc_count * positions);
  std::vector<T> cols(rows * positions);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(input.data() + b * g.in.size(), g, cols.data());
    T* dst = out.data() + b * oc_count * positions;
    for (std::size_t oc = 0; oc < oc_count; ++oc) {
      T* o = dst + oc * positions;
      std::fill(o, o + positions, biases[oc]);
      const T* w = weights + oc * rows;
      for (std::size_t r = 0; r < rows; ++r) {
        const T wr = w[r];
        const T* col = cols.data() + r * positions;
        for (std::size_t p = 0; p < positions; ++p) o[p] += wr * col[p];
      }
    }
  }
  return out;
}

template <typename T>
std::vector<T> dense_forward(const T* weights, const T* biases, const DenseLayer& d,
                             std::span<const T> input, std::size_t batch) {
  std::vector<T> out(batch * d.out);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* x = input.data() + b * d.in;
    for (std::size_t o = 0; o < d.out; ++o) {
      const T* w = weights + o * d.in;
      T acc = biases[o];
      for (std::size_t i = 0; i < d.in; ++i) acc += w[i] * x[i];
      out[b * d.out + o] = acc;
    }
  }
  return out;
}

template <typename T>
ForwardTrace<T> run_layers(const Params<T>& params, const ModelSpec& spec, std::span<const T> batch,
                           std::size_t batch_size, std::size_t stop, DropoutSource dropout,
                           Rng* rng, const Masks* reuse, bool keep) {
  const auto shapes = layer_shapes(spec);
  if (batch.size() != batch_size * spec.input.size()) {
    throw StructuralError("batch holds " + std::to_string(batch.size()) + " values, expected " +
                          std::to_string(batch_size) + " x " + std::to_string(spec.input.size()));
  }
  if (params.values.size() != parameter_count(spec) || params.layout.size() != spec.layers.size()) {
    throw StructuralError("parameter vector does not match model spec");
  }
  if (dropout == DropoutSource::reuse && (reuse == nullptr || reuse->size() != spec.layers.size())) {
    throw StructuralError("dropout masks do not match model spec");
  }

  ForwardTrace<T> trace;
  trace.batch = batch_size;
  trace.masks.resize(spec.layers.size());
  std::vector<T> current(batch.begin(), batch.end());
  for (std::size_t i = 0; i < stop; ++i) {
    const auto& layer = spec.layers[i];
    const auto& slot = params.layout[i];
    const T* weights = params.values.data() + slot.offset;
    const T* biases = weights + slot.weights;
    std::vector<T> next;
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      next = dense_forward<T>(weights, biases, *d, current, batch_size);
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      next = conv_forward<T>(weights, biases, ConvGeometry{shapes[i], shapes[i + 1], *c}, current, batch_size);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      next = current;
      for (auto& v : next) v = v > T(0) ? v : T(0);
    } else if (const auto* drop = std::get_if<DropoutLayer>(&layer)) {
      next = current;
      if (dropout != DropoutSource::identity) {
        auto& mask = trace.masks[i];
        if (dropout == DropoutSource::draw) {
          std::bernoulli_distribution keep_unit(1.0 - drop->rate);
          mask.resize(current.size());
          for (auto& m : mask) m = keep_unit(*rng) ? 1 : 0;
        } else {
          mask = (*reuse)[i];
          if (mask.size() != current.size()) throw StructuralError("dropout mask size mismatch");
        }
        const T scale = T(1) / static_cast<T>(1.0 - drop->rate);
        for (std::size_t j = 0; j < next.size(); ++j) next[j] = mask[j] ? next[j] * scale : T(0);
      }
    } else {
      next = current;  // flatten: channel-major storage is already flat
    }
    if (keep) trace.activations.push_back(std::move(current));
    current = std::move(next);
  }
  trace.activations.push_back(std::move(current));
  return trace;
}

// Sum of per-example losses in double, for finite differences.
template <typename T>
double loss_sum(std::span<const T> logits, std::span<const int> labels, std::size_t classes) {
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto row = softmax<T>(logits.subspan(b * classes, classes));
    total -= std::log(std::max(static_cast<double>(row[static_cast<std::size_t>(labels[b])]), 1e-12));
  }
  return total;
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const Params<T>& params, const ModelSpec& spec, std::span<const T> batch,
                         std::size_t batch_size, Mode mode, Rng& rng) {
  ForwardResult<T> result;
  if (mode == Mode::eval) {
    auto trace = run_layers(params, spec, batch, batch_size, spec.layers.size(), DropoutSource::identity,
                            nullptr, nullptr, false);
    result.logits = std::move(trace.activations.back());
    return result;
  }
  auto trace = run_layers(params, spec, batch, batch_size, spec.layers.size(), DropoutSource::draw, &rng,
                          nullptr, true);
  result.logits = trace.activations.back();
  result.trace = std::move(trace);
  return result;
}

template <typename T>
std::vector<T> forward_eval(const Params<T>& params, const ModelSpec& spec, std::span<const T> batch,
                            std::size_t batch_size) {
  auto trace = run_layers(params, spec, batch, batch_size, spec.layers.size(), DropoutSource::identity,
                          nullptr, nullptr, false);
  return std::move(trace.activations.back());
}

template <typename T>
ForwardTrace<T> forward_with_masks(const Params<T>& params, const ModelSpec& spec,
                                   std::span<const T> batch, std::size_t batch_size, const Masks& masks) {
  return run_layers(params, spec, batch, batch_size, spec.layers.size(), DropoutSource::reuse, nullptr,
                    &masks, true);
}

template <typename T>
std::vector<T> embed(const Params<T>& params, const ModelSpec& spec, std::span<const T> batch,
                     std::size_t batch_size) {
  const std::size_t stop = final_dense_index(spec);
  auto trace = run_layers(params, spec, batch, batch_size, stop, DropoutSource::identity, nullptr, nullptr, false);
  return std::move(trace.activations.back());
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> out(logits.size());
  if (logits.empty()) return out;
  const T top = *std::max_element(logits.begin(), logits.end());
  T sum = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

template <typename T>
std::vector<T> softmax_rows(std::span<const T> logits, std::size_t classes) {
  std::vector<T> out;
  out.reserve(logits.size());
  for (std::size_t start = 0; start + classes <= logits.size(); start += classes) {
    const auto row = softmax<T>(logits.subspan(start, classes));
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

template <typename T>
T cross_entropy_loss(std::span<const T> probs, std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) throw StructuralError("cross-entropy over an empty batch");
  if (probs.size() != labels.size() * classes) throw StructuralError("probability matrix does not match labels");
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw StructuralError("label " + std::to_string(y) + " out of range for " + std::to_string(classes) + " classes");
    }
    total -= std::log(std::max(static_cast<double>(probs[b * classes + static_cast<std::size_t>(y)]), 1e-12));
  }
  return static_cast<T>(total / static_cast<double>(labels.size()));
}

template <typename T>
std::vector<T> backward(const Params<T>& params, const ModelSpec& spec, const ForwardTrace<T>& trace,
                        std::span<const int> labels) {
  const std::size_t layers = spec.layers.size();
  if (trace.activations.size() != layers + 1 || trace.masks.size() != layers) {
    throw StructuralError("trace does not come from a training pass of this model spec");
  }
  const auto shapes = layer_shapes(spec);
  const std::size_t batch = trace.batch;
  const std::size_t classes = spec.num_classes;
  if (labels.size() != batch) throw StructuralError("label count does not match batch size");
  if (params.values.size() != parameter_count(spec)) throw StructuralError("parameter vector does not match model spec");

  // d(mean CE)/d(logits) = (softmax - onehot) / batch
  std::vector<T> delta = softmax_rows<T>(trace.logits(), classes);
  if (delta.size() != batch * classes) throw StructuralError("trace logits do not match model spec");
  const T inv_batch = T(1) / static_cast<T>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw StructuralError("label " + std::to_string(y) + " out of range for " + std::to_string(classes) + " classes");
    }
    delta[b * classes + static_cast<std::size_t>(y)] -= T(1);
  }
  for (auto& v : delta) v *= inv_batch;

  std::vector<T> grad(params.values.size(), T(0));
  for (std::size_t i = layers; i-- > 0;) {
    const auto& layer = spec.layers[i];
    const auto& slot = params.layout[i];
    const auto& input = trace.activations[i];
    const bool need_input_grad = i > 0;
    std::vector<T> grad_input;

    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      const T* w = params.values.data() + slot.offset;
      T* gw = grad.data() + slot.offset;
      T* gb = gw + slot.weights;
      if (need_input_grad) grad_input.assign(batch * d->in, T(0));
      for (std::size_t b = 0; b < batch; ++b) {
        const T* x = input.data() + b * d->in;
        for (std::size_t o = 0; o < d->out; ++o) {
          const T g = delta[b * d->out + o];
          gb[o] += g;
          T* gw_row = gw + o * d->in;
          for (std::size_t k = 0; k < d->in; ++k) gw_row[k] += g * x[k];
          if (need_input_grad) {
            const T* w_row = w + o * d->in;
            T* gx = grad_input.data() + b * d->in;
            for (std::size_t k = 0; k < d->in; ++k) gx[k] += g * w_row[k];
          }
        }
      }
    } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      const ConvGeometry geo{shapes[i], shapes[i + 1], *c};
      const std::size_t rows = geo.rows();
      const std::size_t positions = geo.positions();
      const T* w = params.values.data() + slot.offset;
      T* gw = grad.data() + slot.offset;
      T* gb = gw + slot.weights;
      std::vector<T> cols(rows * positions);
      std::vector<T> grad_cols(rows * positions);
      if (need_input_grad) grad_input.assign(batch * geo.in.size(), T(0));
      for (std::size_t b = 0; b < batch; ++b) {
        im2col(input.data() + b * geo.in.size(), geo, cols.data());
        const T* dout = delta.data() + b * c->out_channels * positions;
        if (need_input_grad) std::fill(grad_cols.begin(), grad_cols.end(), T(0));
        for (std::size_t oc = 0; oc < c->out_channels; ++oc) {
          const T* g = dout + oc * positions;
          T bias_acc = T(0);
          for (std::size_t p = 0; p < positions; ++p) bias_acc += g[p];
          gb[oc] += bias_acc;
          for (std::size_t r = 0; r < rows; ++r) {
            const T* col = cols.data() + r * positions;
            T acc = T(0);
            for (std::size_t p = 0; p < positions; ++p) acc += g[p] * col[p];
            gw[oc * rows + r] += acc;
            if (need_input_grad) {
              const T wr = w[oc * rows + r];
              T* gc = grad_cols.data() + r * positions;
              for (std::size_t p = 0; p < positions; ++p) gc[p] += wr * g[p];
            }
          }
        }
        if (need_input_grad) col2im_add(grad_cols.data(), geo, grad_input.data() + b * geo.in.size());
      }
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      grad_input = std::move(delta);
      for (std::size_t j = 0; j < grad_input.size(); ++j) {
        if (!(input[j] > T(0))) grad_input[j] = T(0);
      }
    } else if (const auto* drop = std::get_if<DropoutLayer>(&layer)) {
      grad_input = std::move(delta);
      const auto& mask = trace.masks[i];
      if (!mask.empty()) {
        if (mask.size() != grad_input.size()) throw StructuralError("dropout mask size mismatch");
        const T scale = T(1) / static_cast<T>(1.0 - drop->rate);
        for (std::size_t j = 0; j < grad_input.size(); ++j) grad_input[j] = mask[j] ? grad_input[j] * scale : T(0);
      }
    } else {
      grad_input = std::move(delta);
    }
    delta = std::move(grad_input);
  }
  return grad;
}

namespace {

// Analytic gradient of the A-precision network against central differences
// of the same weights evaluated in N precision.
template <typename A, typename N>
double compare_gradients(const ModelSpec& spec, std::span<const N> batch, std::span<const int> labels,
                         std::uint64_t seed, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("finite-difference step must be positive");
  validate(spec);
  const std::size_t n = labels.size();
  if (n == 0 || batch.size() != n * spec.input.size()) {
    throw StructuralError("gradient check batch does not match labels and model input");
  }
  const auto params_a = init_params<A>(spec, seed);
  const std::vector<A> batch_a(batch.begin(), batch.end());
  Rng mask_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const auto pass = forward(params_a, spec, std::span<const A>(batch_a), n, Mode::train, mask_rng);
  const auto& masks = pass.trace->masks;
  const auto analytic = backward(params_a, spec, *pass.trace, labels);

  Params<N> params{std::vector<N>(params_a.values.begin(), params_a.values.end()), params_a.layout};
  std::vector<std::size_t> coords(params.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  constexpr std::size_t kExhaustiveLimit = 2000;
  constexpr std::size_t kSampleSize = 400;
  if (coords.size() > kExhaustiveLimit) {
    Rng pick(seed + 1);
    std::shuffle(coords.begin(), coords.end(), pick);
    coords.resize(kSampleSize);
    std::sort(coords.begin(), coords.end());
  }

  const std::size_t classes = spec.num_classes;
  auto mean_loss = [&] {
    const auto trace = forward_with_masks(params, spec, batch, n, masks);
    return loss_sum<N>(trace.logits(), labels, classes) / static_cast<double>(n);
  };

  double worst = 0.0;
  for (std::size_t j : coords) {
    const N original = params.values[j];
    const N up = original + static_cast<N>(eps);
    const N down = original - static_cast<N>(eps);
    params.values[j] = up;
    const double loss_up = mean_loss();
    params.values[j] = down;
    const double loss_down = mean_loss();
    params.values[j] = original;
    // Divide by the step actually taken after rounding to N.
    const double numeric = (loss_up - loss_down) / (static_cast<double>(up) - static_cast<double>(down));
    const double a = static_cast<double>(analytic[j]);
    const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

template <typename T>
double grad_check(const ModelSpec& spec, std::span<const T> batch, std::span<const int> labels,
                  std::uint64_t seed, double eps) {
  return compare_gradients<T, T>(spec, batch, labels, seed, eps);
}

double grad_check_single(const ModelSpec& spec, std::span<const double> batch, std::span<const int> labels,
                         std::uint64_t seed, double eps) {
  return compare_gradients<float, double>(spec, batch, labels, seed, eps);
}

#define DASLAB_INSTANTIATE(T)                                                                            \
  template Params<T> init_params<T>(const ModelSpec&, std::uint64_t);                                    \
  template ForwardResult<T> forward<T>(const Params<T>&, const ModelSpec&, std::span<const T>,           \
                                       std::size_t, Mode, Rng&);                                         \
  template std::vector<T> forward_eval<T>(const Params<T>&, const ModelSpec&, std::span<const T>,        \
                                          std::size_t);                                                  \
  template ForwardTrace<T> forward_with_masks<T>(const Params<T>&, const ModelSpec&, std::span<const T>, \
                                                 std::size_t, const Masks&);                             \
  template std::vector<T> embed<T>(const Params<T>&, const ModelSpec&, std::span<const T>, std::size_t); \
  template std::vector<T> softmax<T>(std::span<const T>);                                                \
  template std::vector<T> softmax_rows<T>(std::span<const T>, std::size_t);                              \
  template T cross_entropy_loss<T>(std::span<const T>, std::span<const int>, std::size_t);               \
  template std::vector<T> backward<T>(const Params<T>&, const ModelSpec&, const ForwardTrace<T>&,        \
                                      std::span<const int>);                                             \
  template double grad_check<T>(const ModelSpec&, std::span<const T>, std::span<const int>,              \
                                std::uint64_t, double);

DASLAB_INSTANTIATE(float)
DASLAB_INSTANTIATE(double)

#undef DASLAB_INSTANTIATE

}  // namespace daslab
