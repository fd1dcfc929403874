#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ecrf/gridcore.hpp"

namespace ecrf::io {

struct GrayImage {
  int height = 0;
  int width = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> values;
};

RawImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RawImage& image);

GrayImage read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const GrayImage& image);

// Label maps are 8-bit gray, id = gray value.
LabelMap read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const LabelMap& labels);

}  // namespace ecrf::io
