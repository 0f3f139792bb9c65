#pragma once

#include <skywatch/core/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace skywatch::net {

/// Dense NCHW tensor. Rank-3 shapes (C,H,W) are treated as N = 1.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  Tensor(int n, int c, int h, int w, T fill = T{0}) : dims_{n, c, h, w}
  {
    require(n >= 0 && c >= 0 && h >= 0 && w >= 0, ErrorCode::shape, "negative tensor dimension");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  Tensor(int c, int h, int w, T fill = T{0}) : Tensor(1, c, h, w, fill) { dims_ = {c, h, w}; }

  int rank() const { return static_cast<int>(dims_.size()); }
  const std::vector<int>& dims() const { return dims_; }

  int n() const { return dims_.size() == 4 ? dims_[0] : 1; }
  int c() const { return dims_[dims_.size() - 3]; }
  int h() const { return dims_[dims_.size() - 2]; }
  int w() const { return dims_[dims_.size() - 1]; }

  std::size_t plane_size() const { return static_cast<std::size_t>(h()) * w(); }
  std::size_t sample_size() const { return plane_size() * c(); }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T* sample(int i) { return data_.data() + i * sample_size(); }
  const T* sample(int i) const { return data_.data() + i * sample_size(); }
  T* channel(int i, int ch) { return sample(i) + ch * plane_size(); }
  const T* channel(int i, int ch) const { return sample(i) + ch * plane_size(); }

  T& at(int i, int ch, int y, int x) { return channel(i, ch)[static_cast<std::size_t>(y) * w() + x]; }
  T at(int i, int ch, int y, int x) const
  {
    return channel(i, ch)[static_cast<std::size_t>(y) * w() + x];
  }

  bool all_finite() const
  {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const
  {
    Tensor<U> out;
    out.dims_ = dims_;
    out.data_.assign(data_.begin(), data_.end());
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  template <typename U>
  friend class Tensor;

  std::vector<int> dims_;
  std::vector<T> data_;
};

inline std::string shape_string(const std::vector<int>& dims)
{
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i)
    s += (i ? "," : "") + std::to_string(dims[i]);
  return s + ")";
}

}  // namespace skywatch::net
