#pragma once

#include <filesystem>
#include <vector>

#include "ecrf/superpixel.hpp"
#include "ecrf/synth.hpp"

namespace ecrf::cli {

struct Dataset {
  int num_classes = 0;
  std::vector<toynet::Sample> samples;
};

// img_XXXX.png, lbl_XXXX.png and a dataset.txt header (count, size, classes,
// generator settings).
void save_dataset(const std::filesystem::path& dir, const std::vector<toynet::Sample>& samples,
                  const toynet::SynthConfig& config);
// FormatError when the header or a listed file is missing or inconsistent.
Dataset load_dataset(const std::filesystem::path& dir);

// sp_XXXX.png (+ .txt sidecar) per image.
void save_superpixel_dir(const std::filesystem::path& dir, const std::vector<superpixel::SuperpixelMap>& maps,
                         const superpixel::SlicParams& params);
std::vector<superpixel::SuperpixelMap> load_superpixel_dir(const std::filesystem::path& dir, std::size_t count);

}  // namespace ecrf::cli
