#pragma once

#include <skywatch/core/error.hpp>
#include <skywatch/net/ops.hpp>
#include <skywatch/net/tensor.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace skywatch::net {

enum class LayerKind { conv, relu, batchnorm, maxpool, sigmoid };
enum class Mode { train, eval };

inline std::string_view to_string(LayerKind kind)
{
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::sigmoid: return "sigmoid";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(std::string_view s)
{
  for (auto k : {LayerKind::conv, LayerKind::relu, LayerKind::batchnorm, LayerKind::maxpool,
                 LayerKind::sigmoid})
    if (to_string(k) == s)
      return k;
  fail(ErrorCode::format, "unknown layer kind '" + std::string(s) + "'");
}

inline std::string_view to_string(Padding p) { return p == Padding::same_zero ? "same-zero" : "valid"; }

inline Padding padding_from_string(std::string_view s)
{
  if (s == "same-zero")
    return Padding::same_zero;
  if (s == "valid")
    return Padding::valid;
  fail(ErrorCode::format, "unknown padding mode '" + std::string(s) + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int kernel = 0;        // conv / maxpool only
  int in_channels = 0;
  int out_channels = 0;
  Padding padding = Padding::same_zero;
  bool has_bias = false;

  bool operator==(const LayerSpec&) const = default;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;

/// Learnable weights and batchnorm running statistics of one layer. Vectors are
/// empty for layer kinds that do not use them.
template <typename T>
struct LayerState {
  std::vector<T> weight;        // conv: (out, in, k, k)
  std::vector<T> bias;          // conv with bias: out
  std::vector<T> running_mean;  // batchnorm
  std::vector<T> running_var;   // batchnorm

  bool operator==(const LayerState&) const = default;
};

template <typename T>
struct FcnModel {
  std::vector<LayerSpec> layers;
  std::vector<LayerState<T>> state;
  std::uint64_t rng_seed = 0;

  bool operator==(const FcnModel&) const = default;

  template <typename U>
  FcnModel<U> cast() const
  {
    FcnModel<U> out;
    out.layers = layers;
    out.rng_seed = rng_seed;
    for (const auto& s : state) {
      LayerState<U> t;
      t.weight.assign(s.weight.begin(), s.weight.end());
      t.bias.assign(s.bias.begin(), s.bias.end());
      t.running_mean.assign(s.running_mean.begin(), s.running_mean.end());
      t.running_var.assign(s.running_var.begin(), s.running_var.end());
      out.state.push_back(std::move(t));
    }
    return out;
  }
};

inline void validate_layers(const std::vector<LayerSpec>& layers)
{
  require(!layers.empty(), ErrorCode::invalid_argument, "model has no layers");
  int channels = -1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    require(l.in_channels > 0, ErrorCode::invalid_argument, where + "in_channels must be positive");
    require(channels < 0 || channels == l.in_channels, ErrorCode::shape,
            where + "input channels do not match previous layer output");
    switch (l.kind) {
      case LayerKind::conv:
        require(l.kernel > 0 && l.kernel % 2 == 1 && l.out_channels > 0, ErrorCode::invalid_argument,
                where + "conv needs an odd kernel and positive out_channels");
        channels = l.out_channels;
        break;
      case LayerKind::maxpool:
        require(l.kernel > 0 && l.kernel % 2 == 1, ErrorCode::invalid_argument,
                where + "maxpool needs an odd kernel");
        [[fallthrough]];
      default:
        require(l.out_channels == l.in_channels, ErrorCode::invalid_argument,
                where + "non-conv layers preserve channel count");
        require(!l.has_bias, ErrorCode::invalid_argument, where + "only conv layers carry a bias");
        channels = l.in_channels;
    }
  }
}

/// Zero-initialized state with the shapes implied by `layers`.
template <typename T>
FcnModel<T> make_model(std::vector<LayerSpec> layers)
{
  validate_layers(layers);
  FcnModel<T> model;
  model.layers = std::move(layers);
  for (const auto& l : model.layers) {
    LayerState<T> s;
    if (l.kind == LayerKind::conv) {
      s.weight.assign(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel, T{0});
      if (l.has_bias)
        s.bias.assign(l.out_channels, T{0});
    } else if (l.kind == LayerKind::batchnorm) {
      s.running_mean.assign(l.in_channels, T{0});
      s.running_var.assign(l.in_channels, T{1});
    }
    model.state.push_back(std::move(s));
  }
  return model;
}

/// Glorot-uniform conv weights, zero biases.
template <typename T>
void initialize_weights(FcnModel<T>& model, std::uint64_t seed)
{
  model.rng_seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    if (l.kind != LayerKind::conv)
      continue;
    const double area = static_cast<double>(l.kernel) * l.kernel;
    const double limit = std::sqrt(6.0 / (l.in_channels * area + l.out_channels * area));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : model.state[i].weight)
      w = static_cast<T>(dist(rng));
    std::fill(model.state[i].bias.begin(), model.state[i].bias.end(), T{0});
  }
}

/// Conv weights plus biases; non-affine batchnorm has no learnable parameters.
inline std::size_t param_count(const std::vector<LayerSpec>& layers)
{
  std::size_t total = 0;
  for (const auto& l : layers)
    if (l.kind == LayerKind::conv)
      total += static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel +
               (l.has_bias ? l.out_channels : 0);
  return total;
}

template <typename T>
std::size_t param_count(const FcnModel<T>& model)
{
  return param_count(model.layers);
}

/// Side length of the input region that influences one output pixel.
inline int receptive_field(const std::vector<LayerSpec>& layers)
{
  int rf = 1;
  for (const auto& l : layers)
    if (l.kind == LayerKind::conv || l.kind == LayerKind::maxpool)
      rf += l.kernel - 1;
  return rf;
}

// ---- forward / backward ----------------------------------------------------

/// Per-layer intermediates recorded by a training-mode forward pass.
template <typename T>
struct ForwardCache {
  Tensor<T> input;                 // input of layer 0; layer i > 0 reads outputs[i - 1]
  std::vector<Tensor<T>> outputs;  // output of each layer
  std::vector<std::vector<std::int32_t>> argmax;
  std::vector<BatchStats<T>> batch_stats;
  std::vector<Padding> paddings;

  const Tensor<T>& input_of(std::size_t layer) const { return layer == 0 ? input : outputs[layer - 1]; }
};

template <typename T>
Tensor<T> forward(const FcnModel<T>& model, const Tensor<T>& input, Mode mode,
                  std::optional<Padding> padding = std::nullopt, ForwardCache<T>* cache = nullptr)
{
  require(!model.layers.empty(), ErrorCode::invalid_argument, "empty model");
  require(input.rank() >= 3 && input.c() == model.layers.front().in_channels, ErrorCode::shape,
          "model expects " + std::to_string(model.layers.front().in_channels) +
              " input channels, got " + shape_string(input.dims()));
  const std::size_t n_layers = model.layers.size();
  if (cache) {
    *cache = ForwardCache<T>{};
    cache->input = input;
    cache->outputs.resize(n_layers);
    cache->argmax.resize(n_layers);
    cache->batch_stats.resize(n_layers);
    cache->paddings.resize(n_layers);
  }

  Tensor<T> x = input;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& l = model.layers[i];
    const auto& s = model.state[i];
    const Padding pad = padding.value_or(l.padding);
    if (cache)
      cache->paddings[i] = pad;
    switch (l.kind) {
      case LayerKind::conv:
        x = conv2d_forward<T>(x, s.weight, s.bias, l.out_channels, l.in_channels, l.kernel, pad);
        break;
      case LayerKind::relu:
        x = relu_forward(std::move(x));
        break;
      case LayerKind::batchnorm:
        if (mode == Mode::train)
          x = batchnorm_forward_train(std::move(x), kBatchNormEps, cache ? &cache->batch_stats[i] : nullptr);
        else
          x = batchnorm_forward_eval<T>(std::move(x), s.running_mean, s.running_var, kBatchNormEps);
        break;
      case LayerKind::maxpool:
        x = maxpool_forward(x, l.kernel, pad, cache ? &cache->argmax[i] : nullptr);
        break;
      case LayerKind::sigmoid:
        x = sigmoid_forward(std::move(x));
        break;
    }
    if (cache)
      cache->outputs[i] = x;
  }
  return x;
}

template <typename T>
struct Gradients {
  std::vector<std::vector<T>> weight;
  std::vector<std::vector<T>> bias;

  static Gradients zeros_like(const FcnModel<T>& model)
  {
    Gradients g;
    for (const auto& s : model.state) {
      g.weight.emplace_back(s.weight.size(), T{0});
      g.bias.emplace_back(s.bias.size(), T{0});
    }
    return g;
  }
};

enum class OutputGradient {
  probability,  // grad w.r.t. the final sigmoid output
  logit,        // grad w.r.t. the pre-sigmoid input (sigmoid derivative already applied)
};

/// Backpropagates `grad_output` through the cached forward pass.
template <typename T>
Gradients<T> backward(const FcnModel<T>& model, const ForwardCache<T>& cache, Tensor<T> grad_output,
                      OutputGradient kind = OutputGradient::probability)
{
  require(cache.outputs.size() == model.layers.size(), ErrorCode::invalid_argument,
          "forward cache does not belong to this model");
  Gradients<T> grads = Gradients<T>::zeros_like(model);
  Tensor<T> g = std::move(grad_output);
  for (std::size_t idx = model.layers.size(); idx-- > 0;) {
    const auto& l = model.layers[idx];
    const auto& s = model.state[idx];
    const Padding pad = cache.paddings[idx];
    switch (l.kind) {
      case LayerKind::conv:
        g = conv2d_backward<T>(cache.input_of(idx), g, s.weight, l.out_channels, l.in_channels, l.kernel, pad,
                               grads.weight[idx], grads.bias[idx], idx > 0);
        break;
      case LayerKind::relu:
        g = relu_backward(cache.outputs[idx], std::move(g));
        break;
      case LayerKind::batchnorm:
        require(!cache.batch_stats[idx].inv_std.empty(), ErrorCode::invalid_argument,
                "backward requires a training-mode forward pass");
        g = batchnorm_backward(cache.outputs[idx], cache.batch_stats[idx], std::move(g));
        break;
      case LayerKind::maxpool:
        g = maxpool_backward(cache.input_of(idx), g, cache.argmax[idx]);
        break;
      case LayerKind::sigmoid:
        if (!(kind == OutputGradient::logit && idx + 1 == model.layers.size()))
          g = sigmoid_backward(cache.outputs[idx], std::move(g));
        break;
    }
    if (g.size() == 0)
      break;
  }
  return grads;
}

/// running <- momentum * running + (1 - momentum) * batch (unbiased variance).
template <typename T>
void update_running_stats(FcnModel<T>& model, const ForwardCache<T>& cache, double momentum = kBatchNormMomentum)
{
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (model.layers[i].kind != LayerKind::batchnorm)
      continue;
    const auto& st = cache.batch_stats[i];
    auto& s = model.state[i];
    const double bessel = st.count > 1 ? static_cast<double>(st.count) / (st.count - 1) : 1.0;
    for (std::size_t ch = 0; ch < s.running_mean.size(); ++ch) {
      s.running_mean[ch] = static_cast<T>(momentum * s.running_mean[ch] + (1 - momentum) * st.mean[ch]);
      s.running_var[ch] = static_cast<T>(momentum * s.running_var[ch] + (1 - momentum) * st.var[ch] * bessel);
    }
  }
}

}  // namespace skywatch::net
