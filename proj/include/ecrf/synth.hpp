#pragma once

#include <cstdint>
#include <vector>

#include "ecrf/gridcore.hpp"

namespace ecrf::toynet {

struct SynthConfig {
  int num_images = 8;
  int size = 96;
  int num_classes = 8;  // class 0 is background
  int min_shapes = 3;
  int max_shapes = 6;
  double texture_noise = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  Image image;
  LabelMap labels;
};

// Textured background with overlapping rectangles, ellipses and triangles.
// Shape classes come in pairs with related base colors, and the partner of a
// drawn class is usually placed touching it, so those pairs share most of the
// boundary pixels in the dataset. Deterministic per seed; every class is
// guaranteed to appear (GenerationError otherwise).
std::vector<Sample> gen_synthetic_dataset(const SynthConfig& config);

// Partner class for a shape class (0 stays with itself).
int partner_class(int cls, int num_classes);

}  // namespace ecrf::toynet
