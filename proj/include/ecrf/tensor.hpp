#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ecrf/errors.hpp"

namespace ecrf {

// Row-major height x width x channels grid. Cell index i = y * width + x.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0) {
      throw DimensionError("Tensor3: negative dimension");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int cells() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  const T& operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<T> cell(int i) {
    return {data_.data() + static_cast<std::size_t>(i) * channels_,
            static_cast<std::size_t>(channels_)};
  }
  std::span<const T> cell(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * channels_,
            static_cast<std::size_t>(channels_)};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Tensor3& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  template <typename U>
  Tensor3<U> cast() const {
    Tensor3<U> out(height_, width_, channels_);
    for (std::size_t k = 0; k < data_.size(); ++k) out.storage()[k] = static_cast<U>(data_[k]);
    return out;
  }

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

template <typename T>
using FeatureMap = Tensor3<T>;

}  // namespace ecrf
