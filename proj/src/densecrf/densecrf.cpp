#include "ecrf/densecrf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ecrf::densecrf {

void GaussianKernelParams::validate() const {
  if (!(theta_alpha > 0.0) || !(theta_beta > 0.0) || !(theta_gamma > 0.0)) {
    throw ParameterError("gaussian kernel: theta values must be positive");
  }
}

LabelCompatibility::LabelCompatibility(int num_classes) : n_(num_classes) {
  if (num_classes < 1) throw ParameterError("LabelCompatibility: need at least one class");
  mu_.assign(static_cast<std::size_t>(n_) * n_, 0.0);
  for (int a = 0; a < n_; ++a) mu_[static_cast<std::size_t>(a) * n_ + a] = 1.0;
}

LabelCompatibility::LabelCompatibility(int num_classes, std::vector<double> matrix)
    : n_(num_classes), mu_(std::move(matrix)) {
  if (num_classes < 1 || mu_.size() != static_cast<std::size_t>(n_) * n_) {
    throw DimensionError("LabelCompatibility: matrix must be n x n");
  }
  for (double v : mu_) {
    if (!std::isfinite(v)) throw ParameterError("LabelCompatibility: non-finite entry");
  }
}

double gaussian_kernel(std::array<double, 2> p_i, std::array<double, 2> p_j, std::array<double, 3> color_i,
                       std::array<double, 3> color_j, const GaussianKernelParams& params) {
  params.validate();
  const double dp = (p_i[0] - p_j[0]) * (p_i[0] - p_j[0]) + (p_i[1] - p_j[1]) * (p_i[1] - p_j[1]);
  double dc = 0.0;
  for (int c = 0; c < 3; ++c) dc += (color_i[c] - color_j[c]) * (color_i[c] - color_j[c]);
  const double appearance = std::exp(-dp / (2.0 * params.theta_alpha * params.theta_alpha) -
                                     dc / (2.0 * params.theta_beta * params.theta_beta));
  const double smoothness = std::exp(-dp / (2.0 * params.theta_gamma * params.theta_gamma));
  return params.w1 * appearance + params.w2 * smoothness;
}

double pairwise_weight(double kernel, const LabelCompatibility& compat, int a, int b) {
  return compat(a, b) * kernel;
}

std::vector<double> kernel_matrix(const Image& image, const GaussianKernelParams& params,
                                  const Neighborhood& neighborhood) {
  params.validate();
  const int h = image.height(), w = image.width(), n = h * w;
  std::vector<double> k(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    const int yi = i / w, xi = i % w;
    const std::array<double, 3> ci{image(yi, xi, 0), image(yi, xi, 1), image(yi, xi, 2)};
    for (int j = 0; j < n; ++j) {
      const int yj = j / w, xj = j % w;
      if (!neighborhood.contains(yj - yi, xj - xi)) continue;
      const std::array<double, 3> cj{image(yj, xj, 0), image(yj, xj, 1), image(yj, xj, 2)};
      k[static_cast<std::size_t>(i) * n + j] =
          gaussian_kernel({double(yi), double(xi)}, {double(yj), double(xj)}, ci, cj, params);
    }
  }
  return k;
}

namespace {

ScoreField step_with_kernel(const ScoreField& scores, std::span<const double> k,
                            const LabelCompatibility& compat) {
  const int n = scores.cells();
  const int classes = scores.channels();
  // Compatibility-transformed neighbour scores, sum_b mu(a, b) Y_j[b].
  ScoreField transformed(scores.height(), scores.width(), classes);
  for (int j = 0; j < n; ++j) {
    auto yj = scores.cell(j);
    auto tj = transformed.cell(j);
    for (int a = 0; a < classes; ++a) {
      double msg = 0.0;
      for (int b = 0; b < classes; ++b) msg += compat(a, b) * yj[b];
      tj[a] = msg;
    }
  }
  ScoreField out(scores.height(), scores.width(), classes);
  std::vector<double> gathered(classes);
  for (int i = 0; i < n; ++i) {
    const double* row = k.data() + static_cast<std::size_t>(i) * n;
    double z = 1.0;
    std::fill(gathered.begin(), gathered.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      const double kij = row[j];
      if (kij == 0.0) continue;
      z += kij;
      auto tj = transformed.cell(j);
      for (int a = 0; a < classes; ++a) gathered[a] += kij * tj[a];
    }
    auto yi = scores.cell(i);
    auto oi = out.cell(i);
    for (int a = 0; a < classes; ++a) oi[a] = (yi[a] + gathered[a]) / z;
  }
  return out;
}

void check_inputs(const ScoreField& scores, const Image& image, const LabelCompatibility& compat) {
  if (scores.height() != image.height() || scores.width() != image.width()) {
    throw DimensionError("mean field: image must be at score resolution");
  }
  if (scores.channels() != compat.num_classes()) {
    throw DimensionError("mean field: compatibility size differs from class count");
  }
  for (double v : scores.data()) {
    if (!std::isfinite(v)) throw NumericError("mean field: non-finite score");
  }
}

}  // namespace

ScoreField mean_field_step(const ScoreField& scores, const Image& image, const GaussianKernelParams& params,
                           const LabelCompatibility& compat, const Neighborhood& neighborhood) {
  check_inputs(scores, image, compat);
  const std::vector<double> k = kernel_matrix(image, params, neighborhood);
  return step_with_kernel(scores, k, compat);
}

ProbField softmax_field(const ScoreField& scores) {
  ProbField out(scores.height(), scores.width(), scores.channels());
  for (int i = 0; i < scores.cells(); ++i) {
    auto s = scores.cell(i);
    auto o = out.cell(i);
    const double m = *std::max_element(s.begin(), s.end());
    double sum = 0.0;
    for (std::size_t a = 0; a < s.size(); ++a) sum += o[a] = std::exp(s[a] - m);
    for (double& v : o) v /= sum;
  }
  return out;
}

ProbField run_inference(const ScoreField& scores, const Image& image, const GaussianKernelParams& params,
                        const LabelCompatibility& compat, int steps, const Neighborhood& neighborhood) {
  if (steps < 1) throw ParameterError("run_inference: steps must be >= 1");
  check_inputs(scores, image, compat);
  const std::vector<double> k = kernel_matrix(image, params, neighborhood);
  ScoreField current = scores;
  for (int s = 0; s < steps; ++s) current = step_with_kernel(current, k, compat);
  return softmax_field(current);
}

std::vector<double> joint_refine_probs(std::span<const double> p_k,
                                       std::span<const WeightedDistribution> neighbors) {
  std::vector<double> out(p_k.begin(), p_k.end());
  double z = 1.0;
  for (const WeightedDistribution& nb : neighbors) {
    if (nb.weight < 0.0 || !std::isfinite(nb.weight)) {
      throw ParameterError("joint_refine_probs: negative or non-finite weight");
    }
    if (nb.probs.size() != p_k.size()) throw DimensionError("joint_refine_probs: class count mismatch");
    z += nb.weight;
    for (std::size_t a = 0; a < out.size(); ++a) out[a] += nb.weight * nb.probs[a];
  }
  for (double& v : out) v /= z;
  return out;
}

bool is_distribution_field(const ProbField& field, double tolerance) {
  for (int i = 0; i < field.cells(); ++i) {
    double sum = 0.0;
    for (double v : field.cell(i)) {
      if (!(v >= 0.0)) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tolerance) return false;
  }
  return true;
}

}  // namespace ecrf::densecrf
