#include "ecrf/gridcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ecrf {

Image::Image(int height, int width) : rgb_(height, width, 3, 0.0f) {}

Image::Image(Tensor3<float> rgb) : rgb_(std::move(rgb)) {
  if (rgb_.channels() != 3) throw DimensionError("Image: expected 3 channels");
  for (float v : rgb_.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ParameterError("Image: channel value outside [0,1]");
  }
}

void Image::set(int y, int x, int c, float value) {
  rgb_(y, x, c) = std::clamp(value, 0.0f, 1.0f);
}

LabelMap::LabelMap(int height, int width, std::int32_t fill)
    : height_(height), width_(width) {
  if (height < 0 || width < 0) throw DimensionError("LabelMap: negative dimension");
  labels_.assign(static_cast<std::size_t>(height) * width, fill);
}

void LabelMap::validate(int num_classes) const {
  for (std::int32_t id : labels_) {
    if (id == kIgnoreLabel) continue;
    if (id < 0 || id >= num_classes) {
      throw DimensionError("LabelMap: class id " + std::to_string(id) + " outside [0, " +
                           std::to_string(num_classes) + ")");
    }
  }
}

Image normalize_image(const RawImage& raw) {
  if (raw.empty() || raw.channels() != 3) throw DimensionError("normalize_image: empty or non-RGB image");
  Tensor3<float> rgb(raw.height(), raw.width(), 3);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    rgb.storage()[k] = static_cast<float>(raw.storage()[k]) / 255.0f;
  }
  return Image(std::move(rgb));
}

RawImage quantize_image(const Image& image) {
  RawImage raw(image.height(), image.width(), 3);
  const auto& src = image.tensor().storage();
  for (std::size_t k = 0; k < src.size(); ++k) {
    raw.storage()[k] = static_cast<std::uint8_t>(std::lround(src[k] * 255.0f));
  }
  return raw;
}

PositionField position_embedding(int height, int width, int dim, double base) {
  if (dim < 2 || dim % 2 != 0) {
    throw ParameterError("position_embedding: dim must be even and >= 2, got " + std::to_string(dim));
  }
  if (height <= 0 || width <= 0) throw DimensionError("position_embedding: empty grid");
  const int pairs = dim / 2;
  const int row_pairs = (pairs + 1) / 2;
  const int col_pairs = pairs - row_pairs;

  auto ladder = [base](int count) {
    std::vector<double> freq(count);
    for (int k = 0; k < count; ++k) freq[k] = std::pow(base, -static_cast<double>(k) / count);
    return freq;
  };
  const std::vector<double> row_freq = ladder(row_pairs);
  const std::vector<double> col_freq = ladder(col_pairs);

  PositionField field(height, width, dim);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int c = 0;
      for (double w : row_freq) {
        field(y, x, c++) = std::sin(y * w);
        field(y, x, c++) = std::cos(y * w);
      }
      for (double w : col_freq) {
        field(y, x, c++) = std::sin(x * w);
        field(y, x, c++) = std::cos(x * w);
      }
    }
  }
  return field;
}

LabelMap downsample_labels(const LabelMap& labels, int stride) {
  if (stride <= 0) throw ParameterError("downsample_labels: stride must be positive");
  const int out_h = (labels.height() + stride - 1) / stride;
  const int out_w = (labels.width() + stride - 1) / stride;
  LabelMap out(out_h, out_w, kIgnoreLabel);
  std::vector<std::int32_t> block;
  block.reserve(static_cast<std::size_t>(stride) * stride);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      block.clear();
      for (int y = oy * stride; y < std::min((oy + 1) * stride, labels.height()); ++y) {
        for (int x = ox * stride; x < std::min((ox + 1) * stride, labels.width()); ++x) {
          if (labels(y, x) != kIgnoreLabel) block.push_back(labels(y, x));
        }
      }
      if (block.empty()) continue;
      std::sort(block.begin(), block.end());
      std::int32_t best = block.front();
      std::size_t best_count = 0;
      for (std::size_t a = 0; a < block.size();) {
        std::size_t b = a;
        while (b < block.size() && block[b] == block[a]) ++b;
        // Strict '>' keeps the smallest id on ties since ids are ascending.
        if (b - a > best_count) {
          best_count = b - a;
          best = block[a];
        }
        a = b;
      }
      out(oy, ox) = best;
    }
  }
  return out;
}

template <typename T>
Tensor3<T> area_downsample(const Tensor3<T>& src, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0 || out_height > src.height() || out_width > src.width()) {
    throw DimensionError("area_downsample: invalid target size");
  }
  Tensor3<T> out(out_height, out_width, src.channels());
  for (int oy = 0; oy < out_height; ++oy) {
    const int y0 = static_cast<int>(static_cast<long>(oy) * src.height() / out_height);
    const int y1 = static_cast<int>(static_cast<long>(oy + 1) * src.height() / out_height);
    for (int ox = 0; ox < out_width; ++ox) {
      const int x0 = static_cast<int>(static_cast<long>(ox) * src.width() / out_width);
      const int x1 = static_cast<int>(static_cast<long>(ox + 1) * src.width() / out_width);
      const double n = static_cast<double>(y1 - y0) * (x1 - x0);
      for (int c = 0; c < src.channels(); ++c) {
        double sum = 0.0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) sum += src(y, x, c);
        }
        out(oy, ox, c) = static_cast<T>(sum / n);
      }
    }
  }
  return out;
}

template Tensor3<float> area_downsample(const Tensor3<float>&, int, int);
template Tensor3<double> area_downsample(const Tensor3<double>&, int, int);

Image area_downsample(const Image& image, int out_height, int out_width) {
  Tensor3<float> t = area_downsample(image.tensor(), out_height, out_width);
  for (float& v : t.storage()) v = std::clamp(v, 0.0f, 1.0f);
  return Image(std::move(t));
}

}  // namespace ecrf
