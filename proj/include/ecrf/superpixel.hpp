#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ecrf/gridcore.hpp"

namespace ecrf::superpixel {

struct SlicParams {
  int target_blocks = 200;
  double compactness = 10.0;
  int iterations = 10;
  double min_block_fraction = 0.25;

  void validate() const;
};

// Non-overlapping partition of a grid into blocks with ids in [0, block_count).
struct SuperpixelMap {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> block_ids;
  int block_count = 0;

  std::int32_t at(int y, int x) const { return block_ids[static_cast<std::size_t>(y) * width + x]; }
  int cells() const { return height * width; }
  bool operator==(const SuperpixelMap&) const = default;
};

struct BlockStat {
  int size = 0;
  std::vector<double> mean;
};

// sRGB (D65) to CIELAB, inputs in [0, 1].
std::array<double, 3> rgb_to_lab(double r, double g, double b);

SuperpixelMap slic_segment(const Image& image, const SlicParams& params);

// Splits blocks into 4-connected components, merges components smaller than
// min_block_fraction * cells / target_blocks into their largest neighbour, caps
// the count at 2 * target_blocks and renumbers ids by first appearance in scan
// order. target_blocks defaults to the map's block count.
SuperpixelMap enforce_connectivity(const SuperpixelMap& map, double min_block_fraction,
                                   std::optional<int> target_blocks = std::nullopt);

// Nearest-neighbour resampling of block ids; ids are kept, so blocks that
// vanish at the new resolution simply have no members.
SuperpixelMap resample_nearest(const SuperpixelMap& map, int out_height, int out_width);

// Per-block member count and mean feature. Empty blocks report size 0.
template <typename T>
std::vector<BlockStat> block_stats(const SuperpixelMap& map, const Tensor3<T>& features);

bool is_partition(const SuperpixelMap& map);
bool is_four_connected(const SuperpixelMap& map);

// 16-bit gray PNG plus "<path>.txt" with block_count and the SLIC parameters.
void save_superpixel_map(const std::filesystem::path& path, const SuperpixelMap& map,
                         const SlicParams& params);
SuperpixelMap load_superpixel_map(const std::filesystem::path& path);

}  // namespace ecrf::superpixel
