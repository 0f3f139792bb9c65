#pragma once

#include <skywatch/net/model.hpp>

#include <array>
#include <cstdint>
#include <vector>

namespace skywatch::detect {

inline constexpr int kPatchSize = 51;
inline constexpr int kPatchRadius = kPatchSize / 2;
inline constexpr std::array<int, 5> kChannelPlan = {16, 32, 64, 64, 64};

/// Five conv5 -> ReLU -> batchnorm -> maxpool5 blocks, then an 11x11 conv with
/// a bias and a sigmoid. Hidden convolutions carry no bias; batchnorm has no
/// affine terms.
inline std::vector<net::LayerSpec> detector_layers()
{
  using net::LayerKind;
  using net::Padding;
  std::vector<net::LayerSpec> layers;
  int in = 3;
  for (int out : kChannelPlan) {
    layers.push_back({LayerKind::conv, 5, in, out, Padding::same_zero, false});
    layers.push_back({LayerKind::relu, 0, out, out, Padding::same_zero, false});
    layers.push_back({LayerKind::batchnorm, 0, out, out, Padding::same_zero, false});
    layers.push_back({LayerKind::maxpool, 5, out, out, Padding::same_zero, false});
    in = out;
  }
  layers.push_back({LayerKind::conv, 11, in, 1, Padding::same_zero, true});
  layers.push_back({LayerKind::sigmoid, 0, 1, 1, Padding::same_zero, false});
  return layers;
}

inline net::FcnModel<float> build_model(std::uint64_t seed)
{
  auto model = net::make_model<float>(detector_layers());
  net::initialize_weights(model, seed);
  return model;
}

}  // namespace skywatch::detect
