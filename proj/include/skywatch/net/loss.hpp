#pragma once

#include <skywatch/core/error.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace skywatch::net {

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy with predictions clamped to [eps, 1 - eps].
template <typename T>
double bce_loss(std::span<const T> predicted, std::span<const T> labels)
{
  require(predicted.size() == labels.size(), ErrorCode::shape, "bce_loss length mismatch");
  require(!predicted.empty(), ErrorCode::shape, "bce_loss on empty input");
  double total = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double p = std::clamp<double>(predicted[i], kBceClamp, 1 - kBceClamp);
    const double y = labels[i];
    total -= y * std::log(p) + (1 - y) * std::log(1 - p);
  }
  return total / predicted.size();
}

/// d(loss)/d(logit) for a sigmoid output: (p - y) / n. The clamp is treated
/// as straight-through so saturated wrong predictions still receive gradient.
template <typename T>
std::vector<T> bce_logit_gradient(std::span<const T> predicted, std::span<const T> labels)
{
  require(predicted.size() == labels.size(), ErrorCode::shape, "bce gradient length mismatch");
  std::vector<T> g(predicted.size());
  const T scale = T{1} / static_cast<T>(predicted.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = (predicted[i] - labels[i]) * scale;
  return g;
}

}  // namespace skywatch::net
