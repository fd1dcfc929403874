#include "ecrf/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ecrf::verify {
namespace {

using gradtheory::ClassifierWeights;
using gradtheory::PixelCase;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

Vec logits_of(const ClassifierWeights& w, std::span<const double> f) {
  Vec y(w.num_classes(), 0.0);
  for (int a = 0; a < w.num_classes(); ++a) {
    for (int d = 0; d < w.feature_dim(); ++d) y[a] += w(d, a) * f[d];
  }
  return y;
}

Vec softmax_of(const Vec& y) {
  const double m = *std::max_element(y.begin(), y.end());
  Vec p(y.size());
  double s = 0.0;
  for (std::size_t a = 0; a < y.size(); ++a) s += p[a] = std::exp(y[a] - m);
  for (double& v : p) v /= s;
  return p;
}

// log1p form when c is the argmax keeps tiny losses accurate for differencing.
double nll(const Vec& y, int c) {
  const double m = *std::max_element(y.begin(), y.end());
  double s = 0.0;
  if (y[c] == m) {
    for (std::size_t a = 0; a < y.size(); ++a)
      if (static_cast<int>(a) != c) s += std::exp(y[a] - m);
    return std::log1p(s);
  }
  for (double v : y) s += std::exp(v - m);
  return m + std::log(s) - y[c];
}

double z_of(const PixelCase& p) {
  double z = 1.0;
  for (const auto& n : p.neighbors) z += n.weight;
  return z;
}

// P^ from the pixel's own distribution and the neighbours' distributions.
Vec joint_refined(const PixelCase& pixel, const Vec& p_k, const std::vector<Vec>& p_nb) {
  Vec r = p_k;
  for (std::size_t j = 0; j < pixel.neighbors.size(); ++j) {
    for (std::size_t a = 0; a < r.size(); ++a) r[a] += pixel.neighbors[j].weight * p_nb[j][a];
  }
  const double z = z_of(pixel);
  for (double& v : r) v /= z;
  return r;
}

std::vector<Vec> neighbour_probs(const PixelCase& pixel, const ClassifierWeights& w) {
  std::vector<Vec> out;
  for (const auto& n : pixel.neighbors) out.push_back(softmax_of(logits_of(w, n.feature)));
  return out;
}

template <typename Loss>
Vec central_difference(const ClassifierWeights& w, int c, double eps, Loss&& loss) {
  Vec g(w.feature_dim());
  for (int d = 0; d < w.feature_dim(); ++d) {
    ClassifierWeights plus = w, minus = w;
    plus(d, c) += eps;
    minus(d, c) -= eps;
    g[d] = (loss(plus) - loss(minus)) / (2.0 * eps);
  }
  return g;
}

template <typename T>
std::vector<T> random_vec(std::mt19937_64& rng, std::size_t n, double sd) {
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<T> v(n);
  for (T& x : v) x = static_cast<T>(normal(rng));
  return v;
}

double min_abs_kernel_dot(const LayerCase& c) {
  if (!c.params.use_pairwise) return std::numeric_limits<double>::infinity();
  const int n = c.context.height * c.context.width;
  std::vector<Vec> e(n);
  for (int i = 0; i < n; ++i) e[i] = layer::kernel_embed<double>(c.context.tokens.cell(i), c.params);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int dy = i / c.context.width - j / c.context.width, dx = i % c.context.width - j % c.context.width;
      if (!c.params.neighborhood.contains(dy, dx)) continue;
      best = std::min(best, std::abs(dot(e[i], e[j])));
    }
  }
  return best;
}

double layer_loss(const LayerCase& c, const Tensor3<double>& features, const layer::EcrfParams<double>& params) {
  const auto out = layer::ecrf_forward(features, c.context, params).first;
  return dot(out.data(), c.upstream.data());
}

}  // namespace

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("relative_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
    na += analytic[k] * analytic[k];
    nb += numeric[k] * numeric[k];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

double worst(const std::vector<TensorError>& errors) {
  double w = 0.0;
  for (const auto& e : errors) w = std::max(w, e.rel_error);
  return w;
}

GradCase random_grad_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> channels(2, 8), classes(2, 6), count(1, 4);
  std::uniform_real_distribution<double> weight(0.1, 2.0);
  const int C = channels(rng), n = classes(rng);
  GradCase g;
  g.weights = ClassifierWeights(C, n, random_vec<double>(rng, static_cast<std::size_t>(C) * n, 1.0));
  g.pixel.feature = random_vec<double>(rng, C, 1.0);
  g.pixel.label = std::uniform_int_distribution<int>(0, n - 1)(rng);
  const int m = count(rng);
  for (int j = 0; j < m; ++j) g.pixel.neighbors.push_back({weight(rng), random_vec<double>(rng, C, 1.0)});
  return g;
}

Vec fd_baseline_grad(const PixelCase& pixel, const ClassifierWeights& w, double eps) {
  return central_difference(w, pixel.label, eps,
                            [&](const ClassifierWeights& v) { return nll(logits_of(v, pixel.feature), pixel.label); });
}

Vec fd_jointcrf_grad(const PixelCase& pixel, const ClassifierWeights& w, double eps) {
  const Vec y0 = logits_of(w, pixel.feature);
  const Vec refined = joint_refined(pixel, softmax_of(y0), neighbour_probs(pixel, w));
  Vec offset(y0.size());
  for (std::size_t a = 0; a < y0.size(); ++a) offset[a] = std::log(refined[a]) - y0[a];
  return central_difference(w, pixel.label, eps, [&](const ClassifierWeights& v) {
    Vec y = logits_of(v, pixel.feature);
    for (std::size_t a = 0; a < y.size(); ++a) y[a] += offset[a];
    return nll(y, pixel.label);
  });
}

Vec fd_jointcrf_prob_frozen_grad(const PixelCase& pixel, const ClassifierWeights& w, double eps) {
  const auto frozen = neighbour_probs(pixel, w);
  return central_difference(w, pixel.label, eps, [&](const ClassifierWeights& v) {
    return -std::log(joint_refined(pixel, softmax_of(logits_of(v, pixel.feature)), frozen)[pixel.label]);
  });
}

Vec fd_jointcrf_full_grad(const PixelCase& pixel, const ClassifierWeights& w, double eps) {
  return central_difference(w, pixel.label, eps, [&](const ClassifierWeights& v) {
    return -std::log(
        joint_refined(pixel, softmax_of(logits_of(v, pixel.feature)), neighbour_probs(pixel, v))[pixel.label]);
  });
}

Vec fd_ecrf_grad(const PixelCase& pixel, const ClassifierWeights& w, double eps) {
  Vec refined = pixel.feature;
  for (const auto& n : pixel.neighbors) {
    for (std::size_t d = 0; d < refined.size(); ++d) refined[d] += n.weight * n.feature[d];
  }
  const double z = z_of(pixel);
  for (double& v : refined) v /= z;
  return central_difference(w, pixel.label, eps,
                            [&](const ClassifierWeights& v) { return nll(logits_of(v, refined), pixel.label); });
}

TheoryCaseErrors check_theory_case(const GradCase& c, double eps) {
  TheoryCaseErrors e;
  e.baseline = relative_error(gradtheory::baseline_weight_grad(c.pixel, c.weights).grad,
                              fd_baseline_grad(c.pixel, c.weights, eps));
  e.joint = relative_error(gradtheory::jointcrf_weight_grad(c.pixel, c.weights).grad,
                           fd_jointcrf_grad(c.pixel, c.weights, eps));
  e.ecrf = relative_error(gradtheory::ecrf_weight_grad(c.pixel, c.weights).grad,
                          fd_ecrf_grad(c.pixel, c.weights, eps));
  return e;
}

gradtheory::AngleSetup canonical_angle_setup() {
  gradtheory::AngleSetup s;
  s.w1 = {1.0, 0.0};
  s.w2 = {std::cos(80.0 * M_PI / 180.0), std::sin(80.0 * M_PI / 180.0)};
  return s;
}

gradtheory::AngleSetup random_angle_setup(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dims(2, 8), count(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    gradtheory::AngleSetup s;
    const int c = dims(rng);
    for (int d = 0; d < c; ++d) {
      s.w1.push_back(normal(rng));
      s.w2.push_back(normal(rng));
    }
    const double angle = gradtheory::angle_between(s.w1, s.w2) * 180.0 / M_PI;
    if (angle < 20.0 || angle > 160.0) continue;
    s.mix = 0.2 + 0.6 * u(rng);
    s.neighbor_purity = 0.5 + 0.5 * u(rng);
    s.neighbor_weight = 0.2 + 1.8 * u(rng);
    s.neighbor_count = count(rng);
    s.step = 0.01 + 0.49 * u(rng);
    return s;
  }
}

LayerCase random_layer_case(std::mt19937_64& rng, double kink_margin) {
  std::uniform_int_distribution<int> side(1, 6), pick_c(0, 2), coin(0, 1), radius(1, 2);
  std::uniform_int_distribution<int> embed(1, 4), pos_pairs(1, 3);
  constexpr int kChannels[] = {2, 4, 8};
  for (;;) {
    const int h = side(rng), w = side(rng), C = kChannels[pick_c(rng)];
    const int d_pos = 2 * pos_pairs(rng), d_k = embed(rng);
    LayerCase c;
    c.params = layer::EcrfParams<double>::zeros(C, d_pos, d_k);
    c.params.embed_weight = random_vec<double>(rng, c.params.embed_weight.size(), 0.7);
    c.params.embed_bias = random_vec<double>(rng, c.params.embed_bias.size(), 0.3);
    c.params.compat_weight = random_vec<double>(rng, c.params.compat_weight.size(), 0.5);
    c.params.compat_bias = random_vec<double>(rng, 1, 0.5)[0];
    const int flags = std::uniform_int_distribution<int>(0, 3)(rng);
    c.params.use_pairwise = flags != 1;
    c.params.use_superpixel = flags != 0;
    c.params.neighborhood = coin(rng) ? Neighborhood::all_pairs() : Neighborhood::window(radius(rng));

    c.context.height = h;
    c.context.width = w;
    c.context.tokens = Tensor3<double>(h, w, 3 + d_pos);
    for (double& v : c.context.tokens.storage()) v = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    const int blocks = std::uniform_int_distribution<int>(1, std::max(1, h * w / 2))(rng);
    c.context.blocks.height = h;
    c.context.blocks.width = w;
    c.context.blocks.block_count = blocks;
    c.context.blocks.block_ids.resize(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h * w; ++i) {
      c.context.blocks.block_ids[i] = i < blocks ? i : std::uniform_int_distribution<int>(0, blocks - 1)(rng);
    }
    c.context.block_sizes.assign(blocks, 0);
    for (auto id : c.context.blocks.block_ids) ++c.context.block_sizes[id];

    c.features = Tensor3<double>(h, w, C);
    c.features.storage() = random_vec<double>(rng, c.features.size(), 1.0);
    c.upstream = Tensor3<double>(h, w, C);
    c.upstream.storage() = random_vec<double>(rng, c.upstream.size(), 1.0);
    if (min_abs_kernel_dot(c) >= kink_margin) return c;
  }
}

std::vector<TensorError> ecrf_layer_gradcheck(const LayerCase& c, double eps) {
  const auto [out, act] = layer::ecrf_forward(c.features, c.context, c.params);
  const auto back = layer::ecrf_backward(act, c.upstream);
  std::vector<TensorError> errors;

  Tensor3<double> f = c.features;
  Vec fd(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double orig = f.storage()[k];
    f.storage()[k] = orig + eps;
    const double lp = layer_loss(c, f, c.params);
    f.storage()[k] = orig - eps;
    const double lm = layer_loss(c, f, c.params);
    f.storage()[k] = orig;
    fd[k] = (lp - lm) / (2.0 * eps);
  }
  errors.push_back({"features", relative_error(back.grad_features.data(), fd)});

  auto check = [&](const std::string& name, auto member, std::span<const double> analytic) {
    layer::EcrfParams<double> p = c.params;
    std::span<double> values = member(p);
    Vec num(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double orig = values[k];
      values[k] = orig + eps;
      const double lp = layer_loss(c, c.features, p);
      values[k] = orig - eps;
      const double lm = layer_loss(c, c.features, p);
      values[k] = orig;
      num[k] = (lp - lm) / (2.0 * eps);
    }
    errors.push_back({name, relative_error(analytic, num)});
  };
  const auto& g = back.grad_params;
  check("embed_weight", [](auto& p) { return std::span<double>(p.embed_weight); }, g.embed_weight);
  check("embed_bias", [](auto& p) { return std::span<double>(p.embed_bias); }, g.embed_bias);
  check("compat_weight", [](auto& p) { return std::span<double>(p.compat_weight); }, g.compat_weight);
  check("compat_bias", [](auto& p) { return std::span<double>(&p.compat_bias, 1); },
        std::span<const double>(&g.compat_bias, 1));
  return errors;
}

template <typename T>
std::vector<TensorError> network_gradcheck(const toynet::Model<T>& model, const toynet::PreparedSample<T>& sample,
                                           double eps) {
  auto grads = model.zeros_like();
  const auto state = toynet::forward(model, sample);
  toynet::backward(model, sample, state, grads);

  // Differences are always taken in double precision.
  auto reference = model.template cast<double>();
  toynet::PreparedSample<double> ref_sample;
  ref_sample.input = sample.input.template cast<double>();
  ref_sample.targets = sample.targets;
  ref_sample.ecrf.height = sample.ecrf.height;
  ref_sample.ecrf.width = sample.ecrf.width;
  ref_sample.ecrf.tokens = sample.ecrf.tokens.template cast<double>();
  ref_sample.ecrf.blocks = sample.ecrf.blocks;
  ref_sample.ecrf.block_sizes = sample.ecrf.block_sizes;
  ref_sample.joint_begin = sample.joint_begin;
  ref_sample.joint_col = sample.joint_col;
  ref_sample.joint_weight.assign(sample.joint_weight.begin(), sample.joint_weight.end());

  auto loss = [&] { return toynet::loss_value(toynet::forward(reference, ref_sample), ref_sample); };
  std::vector<TensorError> errors;
  auto slots = reference.parameters();
  const auto analytic_slots = grads.parameters();
  for (std::size_t s = 0; s < slots.size(); ++s) {
    Vec num(slots[s].values.size());
    for (std::size_t k = 0; k < num.size(); ++k) {
      const double orig = slots[s].values[k];
      slots[s].values[k] = orig + eps;
      const double lp = loss();
      slots[s].values[k] = orig - eps;
      const double lm = loss();
      slots[s].values[k] = orig;
      num[k] = (lp - lm) / (2.0 * eps);
    }
    Vec analytic(analytic_slots[s].values.begin(), analytic_slots[s].values.end());
    errors.push_back({slots[s].name, relative_error(analytic, num)});
  }
  return errors;
}

template std::vector<TensorError> network_gradcheck<float>(const toynet::Model<float>&,
                                                           const toynet::PreparedSample<float>&, double);
template std::vector<TensorError> network_gradcheck<double>(const toynet::Model<double>&,
                                                            const toynet::PreparedSample<double>&, double);

}  // namespace ecrf::verify
