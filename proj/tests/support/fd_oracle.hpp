#pragma once

// Central finite-difference gradient oracle. Shared by the unit and acceptance
// suites; it only calls forward() and bce_loss(), never backward().

#include <skywatch/net/adam.hpp>
#include <skywatch/net/loss.hpp>
#include <skywatch/net/model.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace test_support {

struct GradientCheckReport {
  std::size_t parameters = 0;
  double max_relative_error = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

inline double training_loss(const skywatch::net::FcnModel<double>& model,
                            const skywatch::net::Tensor<double>& batch, std::span<const double> labels)
{
  using namespace skywatch::net;
  const auto out = forward(model, batch, Mode::train, Padding::valid);
  return bce_loss<double>(out.values(), labels);
}

/// Relative error |a - n| / max(|a|, |n|, 1e-7) over every learnable parameter.
inline GradientCheckReport gradient_check(skywatch::net::FcnModel<double> model,
                                          const skywatch::net::Tensor<double>& batch,
                                          std::span<const double> labels, double eps)
{
  using namespace skywatch::net;
  ForwardCache<double> cache;
  const auto out = forward(model, batch, Mode::train, Padding::valid, &cache);
  const auto dlogit = bce_logit_gradient<double>(out.values(), labels);
  Tensor<double> g(out.n(), 1, 1, 1);
  std::copy(dlogit.begin(), dlogit.end(), g.data());
  const auto analytic = backward(model, cache, std::move(g), OutputGradient::logit);

  GradientCheckReport report;
  std::size_t flat = 0;
  const auto check = [&](std::vector<double>& params, const std::vector<double>& grads) {
    for (std::size_t i = 0; i < params.size(); ++i, ++flat) {
      const double saved = params[i];
      params[i] = saved + eps;
      const double up = training_loss(model, batch, labels);
      params[i] = saved - eps;
      const double down = training_loss(model, batch, labels);
      params[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = grads[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-7});
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_index = flat;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      ++report.parameters;
    }
  };
  for (std::size_t layer = 0; layer < model.state.size(); ++layer) {
    check(model.state[layer].weight, analytic.weight[layer]);
    check(model.state[layer].bias, analytic.bias[layer]);
  }
  return report;
}

}  // namespace test_support
