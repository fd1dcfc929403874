#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ecrf/ecrf_layer.hpp"
#include "ecrf/gradtheory.hpp"
#include "ecrf/network.hpp"

// Finite-difference oracles shared by the test suites and `ecrf gradcheck`.
// Each oracle re-evaluates the loss from scratch with its own arithmetic.
namespace ecrf::verify {

using gradtheory::Vec;

// ||a - b|| / max(||a||, ||b||); 0 when both are zero.
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

struct TensorError {
  std::string name;
  double rel_error = 0.0;
};

double worst(const std::vector<TensorError>& errors);

// ---- class-weight gradients of a single pixel ----

struct GradCase {
  gradtheory::PixelCase pixel;
  gradtheory::ClassifierWeights weights{1, 2};
};

// C in [2, 8], n in [2, 6] classes, 1 to 4 neighbours with w in [0.1, 2].
GradCase random_grad_case(std::mt19937_64& rng);

// Central differences of the respective losses w.r.t. W_c, c = pixel.label.
Vec fd_baseline_grad(const gradtheory::PixelCase& pixel, const gradtheory::ClassifierWeights& w, double eps);
// Neighbour message frozen in logit space at the base weights.
Vec fd_jointcrf_grad(const gradtheory::PixelCase& pixel, const gradtheory::ClassifierWeights& w, double eps);
// Neighbour distributions frozen at the base weights.
Vec fd_jointcrf_prob_frozen_grad(const gradtheory::PixelCase& pixel, const gradtheory::ClassifierWeights& w,
                                 double eps);
Vec fd_jointcrf_full_grad(const gradtheory::PixelCase& pixel, const gradtheory::ClassifierWeights& w, double eps);
Vec fd_ecrf_grad(const gradtheory::PixelCase& pixel, const gradtheory::ClassifierWeights& w, double eps);

struct TheoryCaseErrors {
  double baseline = 0.0;
  double joint = 0.0;
  double ecrf = 0.0;
};

TheoryCaseErrors check_theory_case(const GradCase& c, double eps);

// W1 = (1, 0), W2 at 80 degrees, F_k halfway, one pure neighbour, w = 1.
gradtheory::AngleSetup canonical_angle_setup();

// C in [2, 8] with the W1/W2 angle in [20, 160] degrees; mix, purity, weight,
// neighbour count and step drawn from moderate ranges.
gradtheory::AngleSetup random_angle_setup(std::mt19937_64& rng);

// ---- E-CRF layer ----

struct LayerCase {
  layer::EcrfParams<double> params;
  layer::EcrfContext<double> context;
  Tensor3<double> features;
  Tensor3<double> upstream;  // loss = sum(upstream * F*)
};

// C in {2, 4, 8}, grid up to 6 x 6, random flags, blocks and neighbourhood.
// Cases with a kernel dot product within `kink_margin` of zero are redrawn so
// the clamp is not straddled by the finite differences.
LayerCase random_layer_case(std::mt19937_64& rng, double kink_margin = 1e-3);

// Per-tensor relative errors for the features and every parameter tensor.
std::vector<TensorError> ecrf_layer_gradcheck(const LayerCase& c, double eps);

// ---- toy network ----

template <typename T>
std::vector<TensorError> network_gradcheck(const toynet::Model<T>& model, const toynet::PreparedSample<T>& sample,
                                           double eps);

}  // namespace ecrf::verify
