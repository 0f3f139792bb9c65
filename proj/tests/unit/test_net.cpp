#include <skywatch/net/adam.hpp>
#include <skywatch/net/checkpoint.hpp>
#include <skywatch/net/loss.hpp>
#include <skywatch/net/model.hpp>
#include <skywatch/net/ops.hpp>

#include "../support/fd_oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace skywatch;
using namespace skywatch::net;

namespace {

template <typename T>
Tensor<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1, double hi = 1)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(n, c, h, w);
  for (T& v : t.values())
    v = static_cast<T>(u(rng));
  return t;
}

// Direct quadruple loop, independent of im2col/GEMM.
Tensor<double> conv_oracle(const Tensor<double>& x, const std::vector<double>& wts, const std::vector<double>& bias,
                           int out_c, int k, Padding padding)
{
  const int pad = padding == Padding::same_zero ? (k - 1) / 2 : 0;
  const int oh = x.h() + 2 * pad - k + 1, ow = x.w() + 2 * pad - k + 1;
  Tensor<double> out(x.n(), out_c, oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < out_c; ++o)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = bias.empty() ? 0 : bias[o];
          for (int c = 0; c < x.c(); ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = y + ky - pad, ix = xx + kx - pad;
                if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w())
                  continue;
                acc += wts[((o * x.c() + c) * k + ky) * k + kx] * x.at(n, c, iy, ix);
              }
          out.at(n, o, y, xx) = acc;
        }
  return out;
}

std::vector<LayerSpec> two_block_layers(int final_kernel = 3)
{
  std::vector<LayerSpec> layers;
  int in = 3;
  for (int out : {4, 4}) {
    layers.push_back({LayerKind::conv, 5, in, out, Padding::same_zero, false});
    layers.push_back({LayerKind::relu, 0, out, out});
    layers.push_back({LayerKind::batchnorm, 0, out, out});
    layers.push_back({LayerKind::maxpool, 5, out, out});
    in = out;
  }
  layers.push_back({LayerKind::conv, final_kernel, in, 1, Padding::same_zero, true});
  layers.push_back({LayerKind::sigmoid, 0, 1, 1});
  return layers;
}

}  // namespace

TEST(Conv2d, AllOnesValidKernelSumsInput)
{
  const auto x = random_tensor<float>(1, 1, 5, 5, 1);
  const std::vector<float> w(25, 1.0f);
  const auto y = conv2d_forward<float>(x, w, {}, 1, 1, 5, Padding::valid);
  ASSERT_EQ(y.dims(), (std::vector<int>{1, 1, 1, 1}));
  double sum = 0;
  for (float v : x.values())
    sum += v;
  EXPECT_NEAR(y.values()[0], sum, 1e-5);
}

TEST(Conv2d, IdentityKernelSamePadding)
{
  const auto x = random_tensor<float>(2, 3, 9, 7, 2);
  std::vector<float> w(3 * 3 * 25, 0.0f);
  for (int c = 0; c < 3; ++c)
    w[((c * 3 + c) * 5 + 2) * 5 + 2] = 1.0f;
  const auto y = conv2d_forward<float>(x, w, {}, 3, 3, 5, Padding::same_zero);
  EXPECT_EQ(y, x);
}

TEST(Conv2d, MatchesQuadrupleLoopOracle)
{
  const auto xd = random_tensor<double>(2, 3, 13, 13, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<double> w(4 * 3 * 25), b(4);
  for (auto& v : w)
    v = u(rng);
  for (auto& v : b)
    v = u(rng);
  const auto xf = xd.cast<float>();
  const std::vector<float> wf(w.begin(), w.end()), bf(b.begin(), b.end());
  for (Padding p : {Padding::valid, Padding::same_zero}) {
    const auto expected = conv_oracle(xd, w, b, 4, 5, p);
    const auto got = conv2d_forward<float>(xf, wf, bf, 4, 3, 5, p);
    ASSERT_EQ(got.dims(), expected.dims());
    double worst = 0;
    for (std::size_t i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::abs(got.values()[i] - expected.values()[i]));
    EXPECT_LE(worst, 1e-5);
  }
}

// out_c <= 4 takes the direct loop, larger counts go through im2col + GEMM.
TEST(Conv2d, BothKernelPathsMatchOracle)
{
  const auto xd = random_tensor<double>(1, 5, 17, 11, 6);
  const auto xf = xd.cast<float>();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int out_c : {1, 8}) {
    std::vector<double> w(out_c * 5 * 9), b(out_c);
    for (auto& v : w)
      v = u(rng);
    for (auto& v : b)
      v = u(rng);
    const std::vector<float> wf(w.begin(), w.end()), bf(b.begin(), b.end());
    for (Padding p : {Padding::valid, Padding::same_zero}) {
      const auto expected = conv_oracle(xd, w, b, out_c, 3, p);
      const auto got = conv2d_forward<float>(xf, wf, bf, out_c, 5, 3, p);
      ASSERT_EQ(got.dims(), expected.dims());
      for (std::size_t i = 0; i < got.size(); ++i)
        ASSERT_NEAR(got.values()[i], expected.values()[i], 1e-5) << "out_c " << out_c << " at " << i;
    }
  }
}

TEST(Conv2d, ChannelMismatchIsShapeError)
{
  const auto x = random_tensor<float>(1, 2, 8, 8, 5);
  const std::vector<float> w(3 * 3 * 9, 0.0f);
  try {
    conv2d_forward<float>(x, w, {}, 3, 3, 3, Padding::valid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shape);
  }
}

TEST(MaxPool, SamePaddingNeverSelectsPadding)
{
  Tensor<float> x(1, 1, 6, 6, -3.0f);
  x.at(0, 0, 0, 0) = -1.0f;
  const auto y = maxpool_forward(x, 5, Padding::same_zero, nullptr);
  ASSERT_EQ(y.h(), 6);
  EXPECT_EQ(y.at(0, 0, 0, 0), -1.0f);
  EXPECT_EQ(y.at(0, 0, 5, 5), -3.0f);
  const auto v = maxpool_forward(x, 5, Padding::valid, nullptr);
  EXPECT_EQ(v.h(), 2);
  EXPECT_EQ(v.at(0, 0, 0, 0), -1.0f);
}

TEST(MaxPool, EvalPathMatchesArgmaxPath)
{
  auto x = random_tensor<float>(2, 3, 12, 9, 8);
  x.at(1, 2, 4, 4) = x.at(1, 2, 4, 5);  // a tie
  for (Padding p : {Padding::valid, Padding::same_zero}) {
    std::vector<std::int32_t> argmax;
    const auto fast = maxpool_forward(x, 5, p, nullptr);
    const auto slow = maxpool_forward(x, 5, p, &argmax);
    EXPECT_EQ(fast, slow);
    ASSERT_EQ(argmax.size(), slow.size());
    // indices are relative to each (sample, channel) plane
    const std::size_t out_plane = static_cast<std::size_t>(slow.h()) * slow.w();
    const std::size_t in_plane = static_cast<std::size_t>(x.h()) * x.w();
    for (std::size_t i = 0; i < slow.size(); ++i)
      EXPECT_EQ(x.values()[i / out_plane * in_plane + argmax[i]], slow.values()[i]);
  }
}

TEST(Forward, ZeroWeightsGiveSigmoidOfFinalBias)
{
  auto model = make_model<float>(two_block_layers());
  model.state.back().bias.clear();
  model.state[model.state.size() - 2].bias = {0.7f};
  const auto x = random_tensor<float>(1, 3, 20, 24, 6);
  const auto y = forward(model, x, Mode::eval);
  ASSERT_EQ(y.dims(), (std::vector<int>{1, 1, 20, 24}));
  for (float v : y.values())
    EXPECT_NEAR(v, 1.0 / (1.0 + std::exp(-0.7)), 1e-7);
}

TEST(Forward, WrongChannelCount)
{
  const auto model = make_model<float>(two_block_layers());
  EXPECT_THROW(forward(model, random_tensor<float>(1, 4, 19, 19, 1), Mode::eval), Error);
}

TEST(Forward, EvalIsDeterministic)
{
  auto model = make_model<float>(two_block_layers());
  initialize_weights(model, 3);
  const auto x = random_tensor<float>(1, 3, 30, 30, 7, 0, 1);
  EXPECT_EQ(forward(model, x, Mode::eval), forward(model, x, Mode::eval));
}

TEST(Bce, KnownValues)
{
  const std::vector<float> labels = {1, 0, 1, 0};
  EXPECT_LE(bce_loss<float>(labels, labels), 1e-6);
  const std::vector<float> half(4, 0.5f);
  EXPECT_NEAR(bce_loss<float>(half, labels), std::log(2.0), 1e-7);
  EXPECT_GE(bce_loss<float>(half, labels), 0);
  EXPECT_THROW(bce_loss<float>(std::vector<float>{0.5f}, labels), Error);
}

TEST(Bce, MatchesScalarLoop)
{
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(257), y(257);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    y[i] = u(rng) < 0.5 ? 0 : 1;
  }
  double oracle = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    oracle += y[i] == 1 ? -std::log(std::max(p[i], 1e-7)) : -std::log(std::max(1 - p[i], 1e-7));
  oracle /= p.size();
  EXPECT_NEAR(bce_loss<double>(p, y), oracle, 1e-6);
}

TEST(ParamCount, LayerArithmetic)
{
  EXPECT_EQ(param_count(std::vector<LayerSpec>{{LayerKind::conv, 5, 3, 16, Padding::same_zero, false}}), 1200u);
  EXPECT_EQ(param_count(std::vector<LayerSpec>{{LayerKind::conv, 11, 64, 1, Padding::same_zero, true}}), 7745u);
  EXPECT_EQ(param_count(std::vector<LayerSpec>{{LayerKind::batchnorm, 0, 64, 64}}), 0u);
  EXPECT_EQ(receptive_field(two_block_layers(3)), 1 + 2 * 8 + 2);
}

TEST(Gradients, MatchCentralFiniteDifferences)
{
  auto model = make_model<double>(two_block_layers(3));
  initialize_weights(model, 21);
  model.state[8].bias = {0.1};
  const auto batch = random_tensor<double>(4, 3, 19, 19, 22, 0, 1);
  const std::vector<double> labels = {1, 0, 0, 1};
  const auto report = test_support::gradient_check(model, batch, labels, 1e-5);
  EXPECT_EQ(report.parameters, 300u + 400u + 36u + 1u);
  EXPECT_LT(report.max_relative_error, 1e-3) << "worst parameter " << report.worst_index << " analytic " << report.worst_analytic
                                             << " numeric " << report.worst_numeric;
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged)
{
  auto model = make_model<float>(two_block_layers());
  initialize_weights(model, 2);
  const auto before = model;
  auto adam = AdamState<float>::for_model(model);
  adam_step(model, Gradients<float>::zeros_like(model), adam);
  EXPECT_EQ(model, before);
  EXPECT_EQ(adam.step, 1);
}

TEST(TrainStep, ZeroLearningRateKeepsParameters)
{
  auto model = make_model<float>(two_block_layers());
  initialize_weights(model, 4);
  const auto before = model;
  auto adam = AdamState<float>::for_model(model, 0.0);
  const auto batch = random_tensor<float>(4, 3, 19, 19, 5, 0, 1);
  const std::vector<float> labels = {1, 0, 1, 0};
  backward_and_step<float>(model, batch, labels, adam);
  for (std::size_t i = 0; i < model.state.size(); ++i) {
    EXPECT_EQ(model.state[i].weight, before.state[i].weight);
    EXPECT_EQ(model.state[i].bias, before.state[i].bias);
  }
  // Running statistics still track the batch.
  EXPECT_NE(model.state[2].running_mean, before.state[2].running_mean);
}

TEST(TrainStep, OverfitsFixedBatch)
{
  auto model = make_model<float>(two_block_layers());
  initialize_weights(model, 6);
  auto adam = AdamState<float>::for_model(model, 1e-2);
  const auto batch = random_tensor<float>(8, 3, 19, 19, 7, 0, 1);
  const std::vector<float> labels = {1, 0, 1, 0, 0, 1, 1, 0};
  double loss = 0;
  for (int step = 0; step < 200; ++step)
    loss = backward_and_step<float>(model, batch, labels, adam);
  EXPECT_LT(loss, 0.05);
}

TEST(TrainStep, RejectsWrongPatchSize)
{
  auto model = make_model<float>(two_block_layers());
  auto adam = AdamState<float>::for_model(model);
  const auto batch = random_tensor<float>(2, 3, 21, 21, 1);
  const std::vector<float> labels = {1, 0};
  EXPECT_THROW(backward_and_step<float>(model, batch, labels, adam), Error);
}

TEST(Checkpoint, RoundTripAndBlobValidation)
{
  namespace fs = std::filesystem;
  auto model = make_model<float>(two_block_layers());
  initialize_weights(model, 77);
  model.state[2].running_mean = {0.1f, 0.2f, 0.3f, 0.4f};
  const fs::path dir = fs::temp_directory_path() / "skywatch_ckpt_test";
  fs::remove_all(dir);
  save_checkpoint(model, dir, 42);
  CheckpointInfo info;
  const auto back = load_checkpoint(dir, &info);
  EXPECT_EQ(back, model);
  EXPECT_EQ(info.adam_step, 42);
  EXPECT_EQ(info.rng_seed, 77u);

  fs::resize_file(dir / "model.bin", fs::file_size(dir / "model.bin") - 4);
  try {
    load_checkpoint(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::format);
  }
}
