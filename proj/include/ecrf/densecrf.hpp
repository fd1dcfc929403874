#pragma once

#include <array>
#include <span>
#include <vector>

#include "ecrf/gridcore.hpp"
#include "ecrf/neighborhood.hpp"

namespace ecrf::densecrf {

// Appearance + smoothness kernel weights and bandwidths. Positions are in
// grid cells, colors in [0, 1].
struct GaussianKernelParams {
  double w1 = 1.0;
  double w2 = 1.0;
  double theta_alpha = 3.0;
  double theta_beta = 0.1;
  double theta_gamma = 1.0;

  void validate() const;
};

class LabelCompatibility {
 public:
  explicit LabelCompatibility(int num_classes);  // identity
  LabelCompatibility(int num_classes, std::vector<double> matrix);

  static LabelCompatibility identity(int num_classes) { return LabelCompatibility(num_classes); }

  int num_classes() const { return n_; }
  double operator()(int a, int b) const { return mu_[static_cast<std::size_t>(a) * n_ + b]; }

 private:
  int n_;
  std::vector<double> mu_;
};

// Per-cell class scores (H x W x n).
using ScoreField = Tensor3<double>;
// Per-cell class distributions; every cell sums to one.
using ProbField = Tensor3<double>;

double gaussian_kernel(std::array<double, 2> p_i, std::array<double, 2> p_j, std::array<double, 3> color_i,
                       std::array<double, 3> color_j, const GaussianKernelParams& params);

// psi_p = mu(a, b) * k.
double pairwise_weight(double kernel, const LabelCompatibility& compat, int a, int b);

// Dense kernel matrix k(i, j) over the neighbourhood (zero outside it and on
// the diagonal). Image must be at score resolution.
std::vector<double> kernel_matrix(const Image& image, const GaussianKernelParams& params,
                                  const Neighborhood& neighborhood);

// One message-passing update:
//   Y*_i[a] = (Y_i[a] + sum_{j != i} k(i,j) sum_b mu(a,b) Y_j[b]) / Z_i,
//   Z_i = 1 + sum_{j != i} k(i,j).
ScoreField mean_field_step(const ScoreField& scores, const Image& image, const GaussianKernelParams& params,
                           const LabelCompatibility& compat, const Neighborhood& neighborhood);

// `steps` updates followed by a per-cell softmax.
ProbField run_inference(const ScoreField& scores, const Image& image, const GaussianKernelParams& params,
                        const LabelCompatibility& compat, int steps,
                        const Neighborhood& neighborhood = Neighborhood::all_pairs());

ProbField softmax_field(const ScoreField& scores);

struct WeightedDistribution {
  double weight;
  std::span<const double> probs;
};

// P^_k = (P_k + sum_j w_j P_j) / (1 + sum_j w_j).
std::vector<double> joint_refine_probs(std::span<const double> p_k,
                                       std::span<const WeightedDistribution> neighbors);

bool is_distribution_field(const ProbField& field, double tolerance = 1e-6);

}  // namespace ecrf::densecrf
