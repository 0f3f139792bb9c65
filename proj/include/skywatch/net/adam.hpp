#pragma once

#include <skywatch/net/loss.hpp>
#include <skywatch/net/model.hpp>

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace skywatch::net {

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Gradients<T> first;
  Gradients<T> second;

  static AdamState for_model(const FcnModel<T>& model, double lr = 1e-4)
  {
    AdamState s;
    s.lr = lr;
    s.first = Gradients<T>::zeros_like(model);
    s.second = Gradients<T>::zeros_like(model);
    return s;
  }
};

namespace adam_detail {

template <typename T>
void update(std::vector<T>& params, const std::vector<T>& grad, std::vector<T>& m, std::vector<T>& v,
            const AdamState<T>& s, double bias1, double bias2)
{
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    const double mi = s.beta1 * m[i] + (1 - s.beta1) * g;
    const double vi = s.beta2 * v[i] + (1 - s.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double step = s.lr * (mi / bias1) / (std::sqrt(vi / bias2) + s.eps);
    params[i] = static_cast<T>(params[i] - step);
  }
}

}  // namespace adam_detail

template <typename T>
void adam_step(FcnModel<T>& model, const Gradients<T>& grads, AdamState<T>& state)
{
  ++state.step;
  const double bias1 = 1 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < model.state.size(); ++i) {
    adam_detail::update(model.state[i].weight, grads.weight[i], state.first.weight[i], state.second.weight[i],
                        state, bias1, bias2);
    adam_detail::update(model.state[i].bias, grads.bias[i], state.first.bias[i], state.second.bias[i], state,
                        bias1, bias2);
  }
}

/// One optimisation step on a batch of valid-mode patches: forward in train
/// mode, BCE loss, backprop, Adam update and running-stat update. Returns the
/// batch loss; throws a numeric error (leaving the model untouched) if the
/// loss or any gradient is non-finite.
template <typename T>
double backward_and_step(FcnModel<T>& model, const Tensor<T>& batch, std::span<const T> labels,
                         AdamState<T>& adam)
{
  require(batch.n() == static_cast<int>(labels.size()), ErrorCode::shape, "batch/label count mismatch");
  ForwardCache<T> cache;
  const Tensor<T> out = forward(model, batch, Mode::train, Padding::valid, &cache);
  require(out.c() == 1 && out.h() == 1 && out.w() == 1, ErrorCode::shape,
          "training patches must reduce to a single output pixel, got " + shape_string(out.dims()));
  const double loss = bce_loss<T>(out.values(), labels);
  if (!std::isfinite(loss))
    fail(ErrorCode::numeric, "non-finite training loss");

  const std::vector<T> dlogit = bce_logit_gradient<T>(out.values(), labels);
  Tensor<T> grad(out.n(), 1, 1, 1);
  std::copy(dlogit.begin(), dlogit.end(), grad.data());
  const Gradients<T> grads = backward(model, cache, std::move(grad), OutputGradient::logit);
  for (const auto& layer : grads.weight)
    for (T v : layer)
      if (!std::isfinite(v))
        fail(ErrorCode::numeric, "non-finite gradient");

  adam_step(model, grads, adam);
  update_running_stats(model, cache);
  return loss;
}

}  // namespace skywatch::net
