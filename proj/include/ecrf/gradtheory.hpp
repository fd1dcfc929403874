#pragma once

#include <span>
#include <vector>

// Class-weight gradients for a single boundary pixel k with label c under
// three pipelines: plain softmax cross-entropy, Joint-CRF (probabilities
// refined after the classifier) and E-CRF (features refined before it).
namespace ecrf::gradtheory {

using Vec = std::vector<double>;

// C x n classifier, one column W_c per class, no bias: Y^c = W_c . F.
class ClassifierWeights {
 public:
  ClassifierWeights(int feature_dim, int num_classes);
  ClassifierWeights(int feature_dim, int num_classes, Vec row_major);
  static ClassifierWeights from_columns(const std::vector<Vec>& columns);

  int feature_dim() const { return c_; }
  int num_classes() const { return n_; }
  double& operator()(int d, int cls) { return w_[static_cast<std::size_t>(d) * n_ + cls]; }
  double operator()(int d, int cls) const { return w_[static_cast<std::size_t>(d) * n_ + cls]; }
  Vec column(int cls) const;
  void set_column(int cls, std::span<const double> values);
  Vec logits(std::span<const double> feature) const;

 private:
  int c_;
  int n_;
  Vec w_;
};

struct Neighbor {
  double weight;  // w_j >= 0
  Vec feature;    // F_j
};

struct PixelCase {
  Vec feature;  // F_k
  int label = 0;
  std::vector<Neighbor> neighbors;

  void validate(int feature_dim) const;
  double normalizer() const;  // Z_k = 1 + sum_j w_j
};

struct SoftmaxCe {
  double loss;
  Vec probs;
};

// -grad W_c = scale * direction_part; `direction` is its unit vector.
struct GradReport {
  Vec grad;            // dL/dW_c
  double scale;        // the (1 - P) style factor
  Vec direction_part;  // the feature-space vector the scale multiplies
  Vec direction;       // unit(direction_part)
  double angle_to_feature;  // angle between -grad and F_k, radians
  double refined_prob;      // P, P^ or P* for the label class
};

SoftmaxCe softmax_ce(std::span<const double> logits, int label);

// -grad W_c = (1 - P_k^c) F_k.
GradReport baseline_weight_grad(const PixelCase& pixel, const ClassifierWeights& w);

// -grad W_c = (1 - P^_k^c) F_k, P^ = (P_k + sum_j w_j P_j) / Z_k. The
// neighbour message is held fixed in logit space, i.e. the refined logit is
// Y_k + stopgrad(log P^ - Y_k); the formula is exact under that convention.
GradReport jointcrf_weight_grad(const PixelCase& pixel, const ClassifierWeights& w);

// Exact gradient of -log P^ with the neighbour distributions P_j frozen:
// -grad W_c = P_k^c (1 - P_k^c) / (Z_k P^_k^c) F_k. Still collinear with F_k.
GradReport jointcrf_prob_frozen_weight_grad(const PixelCase& pixel, const ClassifierWeights& w);

// Full derivative of -log P^ w.r.t. W_c with P_j = softmax(W^T F_j) live. The
// neighbour terms add sum_j (w_j / (Z_k P^c)) P_j^c (1 - P_j^c) F_j, the part
// the Joint-CRF analysis drops.
Vec jointcrf_full_weight_grad(const PixelCase& pixel, const ClassifierWeights& w);

// -grad W_c = (1 - P*_k^c) F*_k, F*_k = (F_k + sum_j w_j F_j) / Z_k,
// P* = softmax(W^T F*_k).
GradReport ecrf_weight_grad(const PixelCase& pixel, const ClassifierWeights& w);

double angle_between(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const double> a, std::span<const double> b);

struct AngleSetup {
  Vec w1;
  Vec w2;
  double mix = 0.5;              // F_k = (1 - mix) W1^ + mix W2^
  double neighbor_purity = 1.0;  // F_j = purity W1^ + (1 - purity) F_k
  double neighbor_weight = 1.0;
  int neighbor_count = 1;
  double step = 0.1;
};

struct AngleResult {
  double baseline;  // theta_1 = angle(W2, W1*) after a baseline step
  double joint;     // theta_2
  double ecrf;      // theta_3
  double initial;   // angle(W2, W1) before the step
};

// One equal-size descent step on W1 (class 0 of a two-class classifier) per
// method, reporting the angle between W2 and the updated W1.
AngleResult angle_experiment(const AngleSetup& setup);

}  // namespace ecrf::gradtheory
