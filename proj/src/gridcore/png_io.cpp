#include "ecrf/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

namespace ecrf::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

struct Decoded {
  int height = 0;
  int width = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> values;
};

// Decodes any PNG into gray (1 channel) or RGB (3 channels), dropping alpha.
Decoded decode(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw FormatError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  Decoded out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // samples come out little-endian
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.values.resize(count);
  if (out.bit_depth == 16) {
    for (std::size_t k = 0; k < count; ++k) {
      out.values[k] = static_cast<std::uint16_t>(buffer[2 * k] | (buffer[2 * k + 1] << 8));
    }
  } else {
    for (std::size_t k = 0; k < count; ++k) out.values[k] = buffer[k];
  }
  return out;
}

void encode(const std::filesystem::path& path, int height, int width, int channels, int bit_depth,
            const std::vector<png_byte>& buffer) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  for (int y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(buffer.data() + y * rowbytes);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

RawImage read_png_rgb(const std::filesystem::path& path) {
  Decoded d = decode(path);
  RawImage img(d.height, d.width, 3);
  const int shift = d.bit_depth == 16 ? 8 : 0;
  for (int i = 0; i < d.height * d.width; ++i) {
    for (int c = 0; c < 3; ++c) {
      const std::uint16_t v = d.channels == 3 ? d.values[3 * i + c] : d.values[i];
      img.storage()[3 * i + c] = static_cast<std::uint8_t>(v >> shift);
    }
  }
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const RawImage& image) {
  if (image.channels() != 3 || image.empty()) throw DimensionError("write_png_rgb: expected non-empty RGB");
  std::vector<png_byte> buffer(image.storage().begin(), image.storage().end());
  encode(path, image.height(), image.width(), 3, 8, buffer);
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  Decoded d = decode(path);
  if (d.channels != 1) throw FormatError("expected a grayscale PNG: " + path.string());
  return GrayImage{d.height, d.width, d.bit_depth, std::move(d.values)};
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& image) {
  if (image.bit_depth != 8 && image.bit_depth != 16) throw ParameterError("gray PNG depth must be 8 or 16");
  const std::size_t n = static_cast<std::size_t>(image.height) * image.width;
  if (image.values.size() != n || n == 0) throw DimensionError("write_png_gray: size mismatch");
  std::vector<png_byte> buffer;
  if (image.bit_depth == 8) {
    buffer.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (image.values[k] > 255) throw ParameterError("8-bit gray value out of range");
      buffer[k] = static_cast<png_byte>(image.values[k]);
    }
  } else {
    // PNG stores 16-bit samples big-endian.
    buffer.resize(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
      buffer[2 * k] = static_cast<png_byte>(image.values[k] >> 8);
      buffer[2 * k + 1] = static_cast<png_byte>(image.values[k] & 0xff);
    }
  }
  encode(path, image.height, image.width, 1, image.bit_depth, buffer);
}

LabelMap read_label_png(const std::filesystem::path& path) {
  GrayImage g = read_png_gray(path);
  if (g.bit_depth != 8) throw FormatError("label PNG must be 8-bit: " + path.string());
  LabelMap labels(g.height, g.width);
  for (std::size_t k = 0; k < g.values.size(); ++k) labels.labels()[k] = g.values[k];
  return labels;
}

void write_label_png(const std::filesystem::path& path, const LabelMap& labels) {
  GrayImage g{labels.height(), labels.width(), 8, {}};
  g.values.reserve(labels.labels().size());
  for (std::int32_t id : labels.labels()) {
    if (id < 0 || id > 255) throw ParameterError("label id does not fit an 8-bit PNG");
    g.values.push_back(static_cast<std::uint16_t>(id));
  }
  write_png_gray(path, g);
}

}  // namespace ecrf::io
