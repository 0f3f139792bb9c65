#pragma once

// Forward/backward kernels for the layer kinds used by the detector. All
// spatial operators run with unit stride. Convolutions go through im2col and an
// Eigen GEMM, processed in row bands so full-scene inference stays bounded in
// memory.

#include <skywatch/core/error.hpp>
#include <skywatch/net/tensor.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace skywatch::net {

enum class Padding { same_zero, valid };

inline int pad_for(Padding padding, int kernel) { return padding == Padding::same_zero ? (kernel - 1) / 2 : 0; }

inline int output_extent(int extent, int kernel, Padding padding)
{
  return extent + 2 * pad_for(padding, kernel) - kernel + 1;
}

namespace ops_detail {

template <typename T>
using RowMajorMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMajorMatrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMajorMatrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

inline constexpr std::size_t kColumnBudget = std::size_t{1} << 22;  // col-buffer elements per band

struct ConvGeometry {
  int in_c, h, w, k, pad, out_h, out_w;
  int patch() const { return in_c * k * k; }
  int rows_per_band() const
  {
    const std::size_t per_row = static_cast<std::size_t>(patch()) * out_w;
    return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1,
                                                    static_cast<std::size_t>(out_h)));
  }
};

/// col[(c,ky,kx)][(y - y0) * out_w + x] for output rows [y0, y1).
template <typename T>
void im2col(const T* in, const ConvGeometry& g, int y0, int y1, T* col)
{
  const int band = (y1 - y0) * g.out_w;
  for (int c = 0; c < g.in_c; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        T* dst = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * band;
        const int x_lo = std::max(0, g.pad - kx);
        const int x_hi = std::min(g.out_w, g.w + g.pad - kx);
        for (int y = y0; y < y1; ++y, dst += g.out_w) {
          const int iy = y + ky - g.pad;
          if (iy < 0 || iy >= g.h || x_lo >= x_hi) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = in + (static_cast<std::size_t>(c) * g.h + iy) * g.w + (kx - g.pad);
          std::fill(dst, dst + x_lo, T{0});
          std::copy(src + x_lo, src + x_hi, dst + x_lo);
          std::fill(dst + x_hi, dst + g.out_w, T{0});
        }
      }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, int y0, int y1, T* in)
{
  const int band = (y1 - y0) * g.out_w;
  for (int c = 0; c < g.in_c; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const T* src = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * band;
        const int x_lo = std::max(0, g.pad - kx);
        const int x_hi = std::min(g.out_w, g.w + g.pad - kx);
        for (int y = y0; y < y1; ++y, src += g.out_w) {
          const int iy = y + ky - g.pad;
          if (iy < 0 || iy >= g.h)
            continue;
          T* dst = in + (static_cast<std::size_t>(c) * g.h + iy) * g.w + (kx - g.pad);
          for (int x = x_lo; x < x_hi; ++x)
            dst[x] += src[x];
        }
      }
}

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, int out_c, int in_c, int k, Padding padding)
{
  require(input.c() == in_c, ErrorCode::shape,
          "conv2d channel mismatch: input " + shape_string(input.dims()) + " vs weights in_c " +
              std::to_string(in_c));
  require(out_c > 0 && k > 0, ErrorCode::shape, "conv2d weights must be non-empty");
  ConvGeometry g{in_c, input.h(), input.w(), k, pad_for(padding, k), 0, 0};
  g.out_h = g.h + 2 * g.pad - k + 1;
  g.out_w = g.w + 2 * g.pad - k + 1;
  require(g.out_h > 0 && g.out_w > 0, ErrorCode::shape,
          "conv2d input " + shape_string(input.dims()) + " smaller than kernel");
  return g;
}

// Shift-and-accumulate convolution for very few output channels (the 64->1
// head), where an im2col GEMM degenerates into a memory-bound GEMV.
template <typename T>
void direct_conv(const T* in, const ConvGeometry& g, const T* weights, int out_c, T* out)
{
  for (int o = 0; o < out_c; ++o)
    for (int y = 0; y < g.out_h; ++y) {
      T* dst = out + (static_cast<std::size_t>(o) * g.out_h + y) * g.out_w;
      for (int c = 0; c < g.in_c; ++c)
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = y + ky - g.pad;
          if (iy < 0 || iy >= g.h)
            continue;
          const T* src_row = in + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          const T* wrow = weights + ((static_cast<std::size_t>(o) * g.in_c + c) * g.k + ky) * g.k;
          for (int kx = 0; kx < g.k; ++kx) {
            const int x_lo = std::max(0, g.pad - kx);
            const int x_hi = std::min(g.out_w, g.w + g.pad - kx);
            const T wv = wrow[kx];
            const T* src = src_row + (kx - g.pad);
            for (int x = x_lo; x < x_hi; ++x)
              dst[x] += wv * src[x];
          }
        }
    }
}

inline constexpr int kDirectConvMaxOutputs = 4;

}  // namespace ops_detail

/// weights: (out_c, in_c, k, k) row-major; bias: out_c values or empty.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, std::span<const T> weights, std::span<const T> bias,
                         int out_c, int in_c, int k, Padding padding)
{
  using namespace ops_detail;
  require(weights.size() == static_cast<std::size_t>(out_c) * in_c * k * k, ErrorCode::shape,
          "conv2d weight size does not match (out_c, in_c, k, k)");
  require(bias.empty() || bias.size() == static_cast<std::size_t>(out_c), ErrorCode::shape,
          "conv2d bias size mismatch");
  const ConvGeometry g = conv_geometry(input, out_c, in_c, k, padding);
  Tensor<T> out(input.n(), out_c, g.out_h, g.out_w);
  if (out_c <= kDirectConvMaxOutputs) {
    for (int i = 0; i < input.n(); ++i) {
      T* dst = out.sample(i);
      for (int o = 0; o < out_c; ++o)
        std::fill_n(dst + static_cast<std::size_t>(o) * g.out_h * g.out_w, g.out_h * g.out_w,
                    bias.empty() ? T{0} : bias[o]);
      direct_conv(input.sample(i), g, weights.data(), out_c, dst);
    }
    return out;
  }
  const Eigen::Map<const RowMajorMatrix<T>> wmat(weights.data(), out_c, g.patch());
  const int rows = g.rows_per_band();
  std::vector<T> col(static_cast<std::size_t>(g.patch()) * rows * g.out_w);
  const Eigen::Index plane = static_cast<Eigen::Index>(g.out_h) * g.out_w;

  for (int i = 0; i < input.n(); ++i) {
    for (int y0 = 0; y0 < g.out_h; y0 += rows) {
      const int y1 = std::min(g.out_h, y0 + rows);
      const int band = (y1 - y0) * g.out_w;
      im2col(input.sample(i), g, y0, y1, col.data());
      const Eigen::Map<const RowMajorMatrix<T>> cmat(col.data(), g.patch(), band);
      StridedMap<T> ymat(out.channel(i, 0) + static_cast<std::size_t>(y0) * g.out_w, out_c, band,
                         Eigen::OuterStride<>(plane));
      ymat.noalias() = wmat * cmat;
      if (!bias.empty())
        for (int o = 0; o < out_c; ++o)
          ymat.row(o).array() += bias[o];
    }
  }
  return out;
}

/// Accumulates weight/bias gradients and returns the input gradient (empty
/// tensor when `need_input_grad` is false).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& grad_out, std::span<const T> weights,
                          int out_c, int in_c, int k, Padding padding, std::span<T> grad_weights,
                          std::span<T> grad_bias, bool need_input_grad)
{
  using namespace ops_detail;
  const ConvGeometry g = conv_geometry(input, out_c, in_c, k, padding);
  require(grad_out.n() == input.n() && grad_out.c() == out_c && grad_out.h() == g.out_h &&
              grad_out.w() == g.out_w,
          ErrorCode::shape, "conv2d_backward gradient shape mismatch");
  const Eigen::Map<const RowMajorMatrix<T>> wmat(weights.data(), out_c, g.patch());
  Eigen::Map<RowMajorMatrix<T>> dwmat(grad_weights.data(), out_c, g.patch());
  Tensor<T> grad_in;
  if (need_input_grad)
    grad_in = Tensor<T>(input.n(), in_c, g.h, g.w);

  const int rows = g.rows_per_band();
  std::vector<T> col(static_cast<std::size_t>(g.patch()) * rows * g.out_w);
  std::vector<T> dcol(need_input_grad ? col.size() : 0);
  const Eigen::Index plane = static_cast<Eigen::Index>(g.out_h) * g.out_w;

  for (int i = 0; i < input.n(); ++i) {
    for (int y0 = 0; y0 < g.out_h; y0 += rows) {
      const int y1 = std::min(g.out_h, y0 + rows);
      const int band = (y1 - y0) * g.out_w;
      im2col(input.sample(i), g, y0, y1, col.data());
      const Eigen::Map<const RowMajorMatrix<T>> cmat(col.data(), g.patch(), band);
      const ConstStridedMap<T> dymat(grad_out.channel(i, 0) + static_cast<std::size_t>(y0) * g.out_w,
                                     out_c, band, Eigen::OuterStride<>(plane));
      dwmat.noalias() += dymat * cmat.transpose();
      if (!grad_bias.empty())
        for (int o = 0; o < out_c; ++o)
          grad_bias[o] += dymat.row(o).sum();
      if (need_input_grad) {
        Eigen::Map<RowMajorMatrix<T>> dcmat(dcol.data(), g.patch(), band);
        dcmat.noalias() = wmat.transpose() * dymat;
        col2im_add(dcol.data(), g, y0, y1, grad_in.sample(i));
      }
    }
  }
  return grad_in;
}

template <typename T>
Tensor<T> relu_forward(Tensor<T> x)
{
  for (T& v : x.values())
    v = v > T{0} ? v : T{0};
  return x;
}

/// Gradient through ReLU given the layer's output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, Tensor<T> grad)
{
  const T* y = output.data();
  T* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(y[i] > T{0}))
      g[i] = T{0};
  return grad;
}

template <typename T>
Tensor<T> sigmoid_forward(Tensor<T> x)
{
  // Kept strictly inside (0, 1): in float the plain formula saturates to 1.
  const T lo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T{1}, T{0});
  for (T& v : x.values())
    v = std::clamp(T{1} / (T{1} + std::exp(-v)), lo, hi);
  return x;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, Tensor<T> grad)
{
  const T* y = output.data();
  T* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i)
    g[i] *= y[i] * (T{1} - y[i]);
  return grad;
}

// ---- batch normalization (non-affine) ---------------------------------------

template <typename T>
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased, used for normalization
  std::vector<T> inv_std;
  std::size_t count = 0;    // elements per channel
};

template <typename T>
Tensor<T> batchnorm_forward_train(Tensor<T> x, double eps, BatchStats<T>* stats)
{
  const int channels = x.c();
  const std::size_t plane = x.plane_size();
  const std::size_t count = plane * x.n();
  require(count > 1, ErrorCode::shape, "batchnorm training needs more than one value per channel");
  BatchStats<T> s;
  s.mean.assign(channels, 0.0);
  s.var.assign(channels, 0.0);
  s.inv_std.assign(channels, T{0});
  s.count = count;
  for (int ch = 0; ch < channels; ++ch) {
    double sum = 0;
    for (int i = 0; i < x.n(); ++i) {
      const T* p = x.channel(i, ch);
      for (std::size_t j = 0; j < plane; ++j)
        sum += p[j];
    }
    const double mean = sum / count;
    double sq = 0;
    for (int i = 0; i < x.n(); ++i) {
      const T* p = x.channel(i, ch);
      for (std::size_t j = 0; j < plane; ++j) {
        const double d = p[j] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const T inv = static_cast<T>(1.0 / std::sqrt(var + eps));
    const T m = static_cast<T>(mean);
    for (int i = 0; i < x.n(); ++i) {
      T* p = x.channel(i, ch);
      for (std::size_t j = 0; j < plane; ++j)
        p[j] = (p[j] - m) * inv;
    }
    s.mean[ch] = mean;
    s.var[ch] = var;
    s.inv_std[ch] = inv;
  }
  if (stats)
    *stats = std::move(s);
  return x;
}

template <typename T>
Tensor<T> batchnorm_forward_eval(Tensor<T> x, std::span<const T> running_mean,
                                 std::span<const T> running_var, double eps)
{
  require(running_mean.size() == static_cast<std::size_t>(x.c()) && running_var.size() == running_mean.size(),
          ErrorCode::shape, "batchnorm running statistics do not match channel count");
  const std::size_t plane = x.plane_size();
  for (int ch = 0; ch < x.c(); ++ch) {
    const T m = running_mean[ch];
    const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps));
    for (int i = 0; i < x.n(); ++i) {
      T* p = x.channel(i, ch);
      for (std::size_t j = 0; j < plane; ++j)
        p[j] = (p[j] - m) * inv;
    }
  }
  return x;
}

/// `normalized` is the forward output x_hat.
template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& normalized, const BatchStats<T>& stats, Tensor<T> grad)
{
  const std::size_t plane = grad.plane_size();
  const double count = static_cast<double>(stats.count);
  for (int ch = 0; ch < grad.c(); ++ch) {
    double sum_g = 0, sum_gx = 0;
    for (int i = 0; i < grad.n(); ++i) {
      const T* g = grad.channel(i, ch);
      const T* xh = normalized.channel(i, ch);
      for (std::size_t j = 0; j < plane; ++j) {
        sum_g += g[j];
        sum_gx += static_cast<double>(g[j]) * xh[j];
      }
    }
    const T mean_g = static_cast<T>(sum_g / count);
    const T mean_gx = static_cast<T>(sum_gx / count);
    const T inv = stats.inv_std[ch];
    for (int i = 0; i < grad.n(); ++i) {
      T* g = grad.channel(i, ch);
      const T* xh = normalized.channel(i, ch);
      for (std::size_t j = 0; j < plane; ++j)
        g[j] = inv * (g[j] - mean_g - xh[j] * mean_gx);
    }
  }
  return grad;
}

// ---- max pooling ---------------------------------------------------------

/// Separable k x k max pooling; same-padding cells are never selected.
/// `argmax`, when given, records the winning input index per output element.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, int k, Padding padding, std::vector<std::int32_t>* argmax)
{
  const int pad = pad_for(padding, k);
  const int h = x.h(), w = x.w();
  const int oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1;
  require(oh > 0 && ow > 0, ErrorCode::shape, "maxpool input smaller than kernel");
  Tensor<T> out(x.n(), x.c(), oh, ow);
  if (!argmax) {
    // Value-only path: vertical then horizontal running max over -inf padding.
    std::vector<T> row(static_cast<std::size_t>(w) + 2 * pad, -std::numeric_limits<T>::infinity());
    for (int i = 0; i < x.n(); ++i)
      for (int ch = 0; ch < x.c(); ++ch) {
        const T* src = x.channel(i, ch);
        T* dst = out.channel(i, ch);
        for (int oy = 0; oy < oh; ++oy) {
          const int lo = std::max(0, oy - pad), hi = std::min(h, oy - pad + k);
          T* mid = row.data() + pad;
          std::copy_n(src + static_cast<std::size_t>(lo) * w, w, mid);
          for (int iy = lo + 1; iy < hi; ++iy) {
            const T* r = src + static_cast<std::size_t>(iy) * w;
            for (int xx = 0; xx < w; ++xx)
              mid[xx] = std::max(mid[xx], r[xx]);
          }
          T* d = dst + static_cast<std::size_t>(oy) * ow;
          std::copy_n(row.data(), ow, d);
          for (int j = 1; j < k; ++j) {
            const T* r = row.data() + j;
            for (int ox = 0; ox < ow; ++ox)
              d[ox] = std::max(d[ox], r[ox]);
          }
        }
      }
    return out;
  }
  argmax->assign(out.size(), 0);
  std::vector<T> hval(static_cast<std::size_t>(h) * ow);
  std::vector<std::int32_t> hidx(hval.size());

  std::size_t o = 0;
  for (int i = 0; i < x.n(); ++i)
    for (int ch = 0; ch < x.c(); ++ch) {
      const T* src = x.channel(i, ch);
      for (int y = 0; y < h; ++y) {
        const T* row = src + static_cast<std::size_t>(y) * w;
        for (int ox = 0; ox < ow; ++ox) {
          const int lo = std::max(0, ox - pad), hi = std::min(w, ox - pad + k);
          int best = lo;
          for (int ix = lo + 1; ix < hi; ++ix)
            if (row[ix] > row[best])
              best = ix;
          hval[static_cast<std::size_t>(y) * ow + ox] = row[best];
          hidx[static_cast<std::size_t>(y) * ow + ox] = best;
        }
      }
      T* dst = out.channel(i, ch);
      for (int oy = 0; oy < oh; ++oy) {
        const int lo = std::max(0, oy - pad), hi = std::min(h, oy - pad + k);
        for (int ox = 0; ox < ow; ++ox, ++o) {
          int best = lo;
          for (int iy = lo + 1; iy < hi; ++iy)
            if (hval[static_cast<std::size_t>(iy) * ow + ox] > hval[static_cast<std::size_t>(best) * ow + ox])
              best = iy;
          const std::size_t hb = static_cast<std::size_t>(best) * ow + ox;
          dst[static_cast<std::size_t>(oy) * ow + ox] = hval[hb];
          if (argmax)
            (*argmax)[o] = best * w + hidx[hb];
        }
      }
    }
  return out;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& input_like, const Tensor<T>& grad_out,
                           const std::vector<std::int32_t>& argmax)
{
  require(argmax.size() == grad_out.size(), ErrorCode::shape, "maxpool_backward argmax mismatch");
  Tensor<T> grad_in(input_like.n(), input_like.c(), input_like.h(), input_like.w());
  const std::size_t out_plane = grad_out.plane_size();
  std::size_t o = 0;
  for (int i = 0; i < grad_out.n(); ++i)
    for (int ch = 0; ch < grad_out.c(); ++ch) {
      T* dst = grad_in.channel(i, ch);
      const T* g = grad_out.channel(i, ch);
      for (std::size_t j = 0; j < out_plane; ++j, ++o)
        dst[argmax[o]] += g[j];
    }
  return grad_in;
}

}  // namespace skywatch::net
