#include "ecrf/gradtheory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ecrf/errors.hpp"

namespace ecrf::gradtheory {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Vec scaled(std::span<const double> v, double s) {
  Vec out(v.begin(), v.end());
  for (double& x : out) x *= s;
  return out;
}

GradReport make_report(double scale, Vec direction_part, const PixelCase& pixel, double refined_prob) {
  GradReport r;
  r.scale = scale;
  r.grad = scaled(direction_part, -scale);
  const double len = norm(direction_part);
  r.direction = len > 0.0 ? scaled(direction_part, 1.0 / len) : Vec(direction_part.size(), 0.0);
  r.direction_part = std::move(direction_part);
  r.angle_to_feature = angle_between(scaled(r.grad, -1.0), pixel.feature);
  r.refined_prob = refined_prob;
  return r;
}

Vec softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double sum = 0.0;
  for (std::size_t a = 0; a < logits.size(); ++a) sum += p[a] = std::exp(logits[a] - m);
  for (double& v : p) v /= sum;
  return p;
}

// P^ = (P_k + sum_j w_j softmax(W^T F_j)) / Z_k
Vec refined_probs(const PixelCase& pixel, const ClassifierWeights& w, const Vec& p_k) {
  Vec out = p_k;
  for (const Neighbor& nb : pixel.neighbors) {
    const Vec p_j = softmax(w.logits(nb.feature));
    for (std::size_t a = 0; a < out.size(); ++a) out[a] += nb.weight * p_j[a];
  }
  const double z = pixel.normalizer();
  for (double& v : out) v /= z;
  return out;
}

void check(const PixelCase& pixel, const ClassifierWeights& w) {
  pixel.validate(w.feature_dim());
  if (pixel.label < 0 || pixel.label >= w.num_classes()) throw ParameterError("pixel label outside class range");
}

}  // namespace

ClassifierWeights::ClassifierWeights(int feature_dim, int num_classes)
    : ClassifierWeights(feature_dim, num_classes, Vec(static_cast<std::size_t>(feature_dim) * num_classes, 0.0)) {}

ClassifierWeights::ClassifierWeights(int feature_dim, int num_classes, Vec row_major)
    : c_(feature_dim), n_(num_classes), w_(std::move(row_major)) {
  if (feature_dim < 1 || num_classes < 2) throw ParameterError("ClassifierWeights: need C >= 1 and n >= 2");
  if (w_.size() != static_cast<std::size_t>(c_) * n_) throw DimensionError("ClassifierWeights: size mismatch");
  for (double v : w_) {
    if (!std::isfinite(v)) throw NumericError("ClassifierWeights: non-finite entry");
  }
}

ClassifierWeights ClassifierWeights::from_columns(const std::vector<Vec>& columns) {
  if (columns.empty()) throw ParameterError("ClassifierWeights: no columns");
  ClassifierWeights w(static_cast<int>(columns.front().size()), static_cast<int>(columns.size()));
  for (int cls = 0; cls < w.n_; ++cls) w.set_column(cls, columns[cls]);
  return w;
}

Vec ClassifierWeights::column(int cls) const {
  Vec col(c_);
  for (int d = 0; d < c_; ++d) col[d] = (*this)(d, cls);
  return col;
}

void ClassifierWeights::set_column(int cls, std::span<const double> values) {
  if (static_cast<int>(values.size()) != c_) throw DimensionError("set_column: wrong length");
  for (int d = 0; d < c_; ++d) (*this)(d, cls) = values[d];
}

Vec ClassifierWeights::logits(std::span<const double> feature) const {
  if (static_cast<int>(feature.size()) != c_) throw DimensionError("logits: feature length differs from C");
  Vec y(n_, 0.0);
  for (int cls = 0; cls < n_; ++cls) {
    for (int d = 0; d < c_; ++d) y[cls] += (*this)(d, cls) * feature[d];
  }
  return y;
}

void PixelCase::validate(int feature_dim) const {
  if (static_cast<int>(feature.size()) != feature_dim) throw DimensionError("PixelCase: F_k length differs from C");
  for (const Neighbor& nb : neighbors) {
    if (!(nb.weight >= 0.0)) throw ParameterError("PixelCase: neighbour weight must be nonnegative");
    if (static_cast<int>(nb.feature.size()) != feature_dim) {
      throw DimensionError("PixelCase: F_j length differs from C");
    }
  }
}

double PixelCase::normalizer() const {
  double z = 1.0;
  for (const Neighbor& nb : neighbors) z += nb.weight;
  return z;
}

SoftmaxCe softmax_ce(std::span<const double> logits, int label) {
  if (logits.empty()) throw DimensionError("softmax_ce: empty logits");
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw ParameterError("softmax_ce: label " + std::to_string(label) + " out of range");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double y : logits) sum += std::exp(y - m);
  const double log_z = m + std::log(sum);
  Vec probs(logits.size());
  for (std::size_t a = 0; a < logits.size(); ++a) probs[a] = std::exp(logits[a] - log_z);
  return {log_z - logits[label], std::move(probs)};
}

GradReport baseline_weight_grad(const PixelCase& pixel, const ClassifierWeights& w) {
  check(pixel, w);
  const SoftmaxCe ce = softmax_ce(w.logits(pixel.feature), pixel.label);
  const double p = ce.probs[pixel.label];
  return make_report(1.0 - p, pixel.feature, pixel, p);
}

GradReport jointcrf_weight_grad(const PixelCase& pixel, const ClassifierWeights& w) {
  check(pixel, w);
  const Vec p_k = softmax_ce(w.logits(pixel.feature), pixel.label).probs;
  const double refined = refined_probs(pixel, w, p_k)[pixel.label];
  return make_report(1.0 - refined, pixel.feature, pixel, refined);
}

GradReport jointcrf_prob_frozen_weight_grad(const PixelCase& pixel, const ClassifierWeights& w) {
  check(pixel, w);
  const Vec p_k = softmax_ce(w.logits(pixel.feature), pixel.label).probs;
  const double refined = refined_probs(pixel, w, p_k)[pixel.label];
  const double p = p_k[pixel.label];
  return make_report(p * (1.0 - p) / (pixel.normalizer() * refined), pixel.feature, pixel, refined);
}

Vec jointcrf_full_weight_grad(const PixelCase& pixel, const ClassifierWeights& w) {
  check(pixel, w);
  const int c = pixel.label;
  const Vec p_k = softmax_ce(w.logits(pixel.feature), c).probs;
  const double refined = refined_probs(pixel, w, p_k)[c];
  const double factor = -1.0 / (pixel.normalizer() * refined);
  Vec grad = scaled(pixel.feature, factor * p_k[c] * (1.0 - p_k[c]));
  for (const Neighbor& nb : pixel.neighbors) {
    const double p_j = softmax(w.logits(nb.feature))[c];
    for (std::size_t d = 0; d < grad.size(); ++d) grad[d] += factor * nb.weight * p_j * (1.0 - p_j) * nb.feature[d];
  }
  return grad;
}

GradReport ecrf_weight_grad(const PixelCase& pixel, const ClassifierWeights& w) {
  check(pixel, w);
  Vec refined_feature = pixel.feature;
  for (const Neighbor& nb : pixel.neighbors) {
    for (std::size_t d = 0; d < refined_feature.size(); ++d) refined_feature[d] += nb.weight * nb.feature[d];
  }
  const double z = pixel.normalizer();
  for (double& v : refined_feature) v /= z;
  const double p = softmax_ce(w.logits(refined_feature), pixel.label).probs[pixel.label];
  return make_report(1.0 - p, std::move(refined_feature), pixel, p);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double angle_between(std::span<const double> a, std::span<const double> b) {
  // atan2 form stays accurate near 0 and pi, unlike acos(cosine).
  const double ab = dot(a, b);
  const double aa = dot(a, a), bb = dot(b, b);
  const double cross = std::sqrt(std::max(0.0, aa * bb - ab * ab));
  return std::atan2(cross, ab);
}

AngleResult angle_experiment(const AngleSetup& setup) {
  if (setup.w1.size() != setup.w2.size() || setup.w1.empty()) {
    throw DimensionError("angle_experiment: W1 and W2 must have equal nonzero length");
  }
  const double n1 = norm(setup.w1), n2 = norm(setup.w2);
  if (n1 == 0.0 || n2 == 0.0 || std::abs(cosine(setup.w1, setup.w2)) > 1.0 - 1e-12) {
    throw ParameterError("angle_experiment: W1 and W2 are collinear");
  }
  if (setup.neighbor_count < 0 || !(setup.neighbor_weight >= 0.0)) {
    throw ParameterError("angle_experiment: invalid neighbour construction");
  }
  const Vec u1 = scaled(setup.w1, 1.0 / n1);
  const Vec u2 = scaled(setup.w2, 1.0 / n2);
  PixelCase pixel;
  pixel.label = 0;
  pixel.feature.resize(u1.size());
  for (std::size_t d = 0; d < u1.size(); ++d) pixel.feature[d] = (1.0 - setup.mix) * u1[d] + setup.mix * u2[d];
  Vec inner(u1.size());
  for (std::size_t d = 0; d < u1.size(); ++d) {
    inner[d] = setup.neighbor_purity * u1[d] + (1.0 - setup.neighbor_purity) * pixel.feature[d];
  }
  for (int j = 0; j < setup.neighbor_count; ++j) pixel.neighbors.push_back({setup.neighbor_weight, inner});

  const ClassifierWeights w = ClassifierWeights::from_columns({setup.w1, setup.w2});
  auto stepped_angle = [&](const GradReport& r) {
    Vec updated = setup.w1;
    for (std::size_t d = 0; d < updated.size(); ++d) updated[d] -= setup.step * r.grad[d];
    return angle_between(setup.w2, updated);
  };
  return {stepped_angle(baseline_weight_grad(pixel, w)), stepped_angle(jointcrf_weight_grad(pixel, w)),
          stepped_angle(ecrf_weight_grad(pixel, w)), angle_between(setup.w1, setup.w2)};
}

}  // namespace ecrf::gradtheory
