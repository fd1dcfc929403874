#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ecrf/tensor.hpp"

namespace ecrf {

// 8-bit RGB pixels as read from disk.
using RawImage = Tensor3<std::uint8_t>;

// H x W x 3 colors, every channel in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width);
  // Validates range and channel count.
  explicit Image(Tensor3<float> rgb);

  int height() const { return rgb_.height(); }
  int width() const { return rgb_.width(); }
  bool empty() const { return rgb_.empty(); }

  float operator()(int y, int x, int c) const { return rgb_(y, x, c); }
  // Clamps into [0, 1].
  void set(int y, int x, int c, float value);

  const Tensor3<float>& tensor() const { return rgb_; }

  bool operator==(const Image&) const = default;

 private:
  Tensor3<float> rgb_;
};

inline constexpr std::int32_t kIgnoreLabel = 255;

class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, std::int32_t fill = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  int cells() const { return height_ * width_; }

  std::int32_t& operator()(int y, int x) { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::int32_t operator()(int y, int x) const {
    return labels_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::span<std::int32_t> labels() { return labels_; }
  std::span<const std::int32_t> labels() const { return labels_; }

  // Throws DimensionError when a non-ignore id is outside [0, num_classes).
  void validate(int num_classes) const;

  bool operator==(const LabelMap&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::int32_t> labels_;
};

using PositionField = Tensor3<double>;

Image normalize_image(const RawImage& raw);
RawImage quantize_image(const Image& image);

// Interleaved (sin, cos) pairs; the first ceil(dim/4) pairs encode the row
// index, the rest the column index, each half on a geometric frequency ladder
// starting at 1 and decaying towards 1/base.
PositionField position_embedding(int height, int width, int dim, double base = 10000.0);

// Majority vote per stride x stride block, ties to the smallest id. Blocks
// that overhang the map are padded with kIgnoreLabel, which never votes.
LabelMap downsample_labels(const LabelMap& labels, int stride);

// Area average over the source pixels that map to each output cell.
Image area_downsample(const Image& image, int out_height, int out_width);

template <typename T>
Tensor3<T> area_downsample(const Tensor3<T>& src, int out_height, int out_width);

}  // namespace ecrf
