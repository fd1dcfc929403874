#include <doctest.h>

#include <cmath>
#include <random>

#include "ecrf/densecrf.hpp"
#include "support/oracles.hpp"

using namespace ecrf;
using namespace ecrf::densecrf;

namespace {

GaussianKernelParams unit_thetas() {
  GaussianKernelParams p;
  p.theta_alpha = p.theta_beta = p.theta_gamma = 1.0;
  return p;
}

ScoreField random_scores(int h, int w, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ScoreField s(h, w, n);
  for (double& v : s.storage()) v = normal(rng);
  return s;
}

}  // namespace

TEST_CASE("gaussian_kernel values") {
  const GaussianKernelParams p = unit_thetas();
  CHECK(gaussian_kernel({2, 3}, {2, 3}, {0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}, p) == doctest::Approx(2.0));
  CHECK(gaussian_kernel({0, 0}, {0, 1}, {0, 0, 0}, {1, 0, 0}, p) ==
        doctest::Approx(0.97441).epsilon(1e-5));
  CHECK(gaussian_kernel({0, 0}, {0, 1}, {0, 0, 0}, {1, 0, 0}, p) ==
        doctest::Approx(std::exp(-1.0) + std::exp(-0.5)).epsilon(1e-15));
  CHECK(gaussian_kernel({0, 0}, {400, 0}, {0, 0, 0}, {0, 0, 0}, p) < 1e-300);
  CHECK(gaussian_kernel({1, 2}, {4, 0}, {0.1, 0.5, 0.9}, {0.3, 0.2, 0.1}, p) ==
        gaussian_kernel({4, 0}, {1, 2}, {0.3, 0.2, 0.1}, {0.1, 0.5, 0.9}, p));
}

TEST_CASE("gaussian_kernel rejects nonpositive thetas") {
  GaussianKernelParams p;
  p.theta_beta = 0.0;
  CHECK_THROWS_AS(gaussian_kernel({0, 0}, {0, 1}, {0, 0, 0}, {0, 0, 0}, p), ParameterError);
}

TEST_CASE("pairwise_weight") {
  const auto identity = LabelCompatibility::identity(3);
  CHECK(pairwise_weight(0.7, identity, 1, 1) == 0.7);
  CHECK(pairwise_weight(0.7, identity, 0, 1) == 0.0);
  const LabelCompatibility zero(2, std::vector<double>(4, 0.0));
  CHECK(pairwise_weight(0.97441, zero, 0, 0) == 0.0);
  const LabelCompatibility mu(2, {1.0, 0.3, 0.3, 1.0});
  CHECK(pairwise_weight(0.97441, mu, 0, 1) == doctest::Approx(0.292323).epsilon(1e-6));
}

TEST_CASE("mean_field_step single cell is the identity") {
  Image img(1, 1);
  ScoreField s(1, 1, 3);
  s(0, 0, 0) = 1.5, s(0, 0, 1) = -2.0, s(0, 0, 2) = 0.25;
  CHECK(mean_field_step(s, img, GaussianKernelParams{}, LabelCompatibility::identity(3), Neighborhood::all_pairs()) ==
        s);
}

TEST_CASE("mean_field_step mirrors swapped scores") {
  Image img(1, 2);
  for (int c = 0; c < 3; ++c) img.set(0, 0, c, 0.3f), img.set(0, 1, c, 0.3f);
  ScoreField s(1, 2, 2);
  s(0, 0, 0) = 2.0, s(0, 0, 1) = -1.0;
  s(0, 1, 0) = -1.0, s(0, 1, 1) = 2.0;
  const auto out = mean_field_step(s, img, GaussianKernelParams{}, LabelCompatibility::identity(2),
                                   Neighborhood::all_pairs());
  CHECK(out(0, 0, 0) == doctest::Approx(out(0, 1, 1)));
  CHECK(out(0, 0, 1) == doctest::Approx(out(0, 1, 0)));
}

TEST_CASE("mean_field_step matches the triple-loop oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Shape { int h, w, n; };
  for (Shape sh : {Shape{1, 3, 2}, Shape{4, 4, 3}, Shape{5, 6, 4}}) {
    const Image img = testing::random_image(sh.h, sh.w, rng);
    const ScoreField s = random_scores(sh.h, sh.w, sh.n, rng);
    std::vector<double> mu(sh.n * sh.n);
    for (double& v : mu) v = u(rng);
    const LabelCompatibility compat(sh.n, mu);
    GaussianKernelParams p;
    p.theta_beta = 0.3;
    for (std::optional<int> radius : {std::optional<int>{}, std::optional<int>{1}}) {
      const auto nb = radius ? Neighborhood::window(*radius) : Neighborhood::all_pairs();
      const auto fast = mean_field_step(s, img, p, compat, nb);
      const auto slow = testing::brute_mean_field(s, img, p, compat, radius);
      for (std::size_t k = 0; k < fast.size(); ++k) CHECK(fast.storage()[k] == doctest::Approx(slow.storage()[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("run_inference with zero kernel weights is the softmax of the scores") {
  std::mt19937_64 rng(3);
  const Image img = testing::random_image(3, 3, rng);
  const ScoreField s = random_scores(3, 3, 4, rng);
  GaussianKernelParams p;
  p.w1 = p.w2 = 0.0;
  const auto out = run_inference(s, img, p, LabelCompatibility::identity(4), 3);
  const auto ref = softmax_field(s);
  for (std::size_t k = 0; k < out.size(); ++k) CHECK(out.storage()[k] == doctest::Approx(ref.storage()[k]));
}

TEST_CASE("run_inference yields distributions and matches two oracle steps") {
  std::mt19937_64 rng(8);
  const Image img = testing::random_image(4, 4, rng);
  const ScoreField s = random_scores(4, 4, 3, rng);
  const auto compat = LabelCompatibility::identity(3);
  const GaussianKernelParams p;
  const auto out = run_inference(s, img, p, compat, 2);
  CHECK(is_distribution_field(out));
  const auto ref = softmax_field(testing::brute_mean_field(testing::brute_mean_field(s, img, p, compat, {}), img, p,
                                                           compat, {}));
  for (std::size_t k = 0; k < out.size(); ++k) CHECK(out.storage()[k] == doctest::Approx(ref.storage()[k]).epsilon(1e-12));
}

TEST_CASE("joint_refine_probs") {
  const std::vector<double> pk{0.2, 0.8}, pj{0.6, 0.4};
  CHECK(joint_refine_probs(pk, {}) == pk);
  const std::vector<WeightedDistribution> one{{1.0, pj}};
  const auto r = joint_refine_probs(pk, one);
  CHECK(r[0] == doctest::Approx(0.4));
  CHECK(r[1] == doctest::Approx(0.6));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_dist = [&] {
    std::vector<double> p{u(rng), u(rng), u(rng)};
    const double s = p[0] + p[1] + p[2];
    for (double& v : p) v /= s;
    return p;
  };
  const auto a = random_dist(), b = random_dist(), c = random_dist(), d = random_dist();
  const double wb = 0.3, wc = 1.7, wd = 0.9;
  const std::vector<WeightedDistribution> three{{wb, b}, {wc, c}, {wd, d}};
  const auto out = joint_refine_probs(a, three);
  double total = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double expected = (a[k] + wb * b[k] + wc * c[k] + wd * d[k]) / (1.0 + wb + wc + wd);
    CHECK(out[k] == doctest::Approx(expected).epsilon(1e-15));
    CHECK(out[k] >= std::min({a[k], b[k], c[k], d[k]}));
    CHECK(out[k] <= std::max({a[k], b[k], c[k], d[k]}));
    total += out[k];
  }
  CHECK(total == doctest::Approx(1.0));

  const std::vector<WeightedDistribution> negative{{-0.1, pj}};
  CHECK_THROWS_AS(joint_refine_probs(pk, negative), ParameterError);
}

TEST_CASE("kernel_matrix is symmetric with a zero diagonal") {
  std::mt19937_64 rng(6);
  const Image img = testing::random_image(3, 4, rng);
  const auto k = kernel_matrix(img, GaussianKernelParams{}, Neighborhood::all_pairs());
  const int n = 12;
  for (int i = 0; i < n; ++i) {
    CHECK(k[i * n + i] == 0.0);
    for (int j = 0; j < n; ++j) CHECK(k[i * n + j] == doctest::Approx(k[j * n + i]));
  }
  const auto windowed = kernel_matrix(img, GaussianKernelParams{}, Neighborhood::window(1));
  CHECK(windowed[0 * n + 11] == 0.0);
  CHECK(windowed[0 * n + 1] == k[0 * n + 1]);
}
