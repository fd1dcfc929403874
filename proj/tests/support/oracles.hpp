#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "ecrf/densecrf.hpp"
#include "ecrf/ecrf_layer.hpp"
#include "ecrf/network.hpp"
#include "ecrf/superpixel.hpp"

// Deliberately naive re-implementations used only as test oracles.
namespace ecrf::testing {

// Plain Lloyd iterations over (L, a, b, y * m / S, x * m / S) with global
// nearest-center assignment, seeded on the regular SLIC grid.
std::vector<int> lloyd_segment(const Image& image, int target_blocks, double compactness, int iterations);

// True when the two labelings induce the same partition.
bool same_partition(const std::vector<int>& a, const std::vector<std::int32_t>& b);

// Triple loop over cells, classes and neighbours with the kernel written out.
densecrf::ScoreField brute_mean_field(const densecrf::ScoreField& scores, const Image& image,
                                      const densecrf::GaussianKernelParams& params,
                                      const densecrf::LabelCompatibility& compat, std::optional<int> radius);

// Direct evaluation of the E-CRF update cell by cell.
Tensor3<double> brute_ecrf_forward(const Tensor3<double>& features, const layer::EcrfContext<double>& context,
                                   const layer::EcrfParams<double>& params);

// Straight-line convolution stack and classifier (no activations retained).
Tensor3<double> naive_logits(const toynet::Model<double>& model, const Image& image);

Image random_image(int height, int width, std::mt19937_64& rng);

std::filesystem::path temp_dir(const std::string& name);

}  // namespace ecrf::testing
