#include <doctest.h>

#include <cmath>
#include <random>

#include "ecrf/gradtheory.hpp"
#include "ecrf/verify.hpp"

using namespace ecrf;
using namespace ecrf::gradtheory;

namespace {

double cross_norm(const Vec& a, const Vec& b) {
  // Norm of the wedge product, zero iff collinear.
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) s += std::pow(a[i] * b[j] - a[j] * b[i], 2);
  return std::sqrt(s);
}

AngleSetup canonical() {
  AngleSetup s;
  s.w1 = {1.0, 0.0};
  s.w2 = {std::cos(80.0 * M_PI / 180.0), std::sin(80.0 * M_PI / 180.0)};
  return s;
}

}  // namespace

TEST_CASE("softmax_ce") {
  const Vec zero{0.0, 0.0};
  const auto r = softmax_ce(zero, 0);
  CHECK(r.loss == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(r.probs[1] == 0.5);
  const Vec big{1000.0, 0.0, -1000.0};
  const auto s = softmax_ce(big, 0);
  CHECK(std::isfinite(s.loss));
  CHECK(s.loss == doctest::Approx(0.0));
}

TEST_CASE("baseline gradient fixture") {
  const ClassifierWeights w(2, 3, {0.5, -0.2, 0.1, 0.3, 0.4, -0.6});
  PixelCase p;
  p.feature = {1.0, 2.0};
  p.label = 1;
  const auto g = baseline_weight_grad(p, w);
  CHECK(g.grad[0] == doctest::Approx(-0.6468184267211837).epsilon(1e-14));
  CHECK(g.grad[1] == doctest::Approx(-1.2936368534423675).epsilon(1e-14));
  CHECK(g.angle_to_feature == doctest::Approx(0.0));
}

TEST_CASE("Joint-CRF gradient stays collinear with the pixel feature") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = verify::random_grad_case(rng);
    const auto j = jointcrf_weight_grad(c.pixel, c.weights);
    const auto pf = jointcrf_prob_frozen_weight_grad(c.pixel, c.weights);
    CHECK(cross_norm(j.grad, c.pixel.feature) <= 1e-12);
    CHECK(cross_norm(pf.grad, c.pixel.feature) <= 1e-12);
  }
}

TEST_CASE("E-CRF gradient leaves the pixel-feature line") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = verify::random_grad_case(rng);
    const auto e = ecrf_weight_grad(c.pixel, c.weights);
    bool non_collinear = false;
    for (const auto& n : c.pixel.neighbors)
      non_collinear |= n.weight > 0.0 && std::abs(cosine(n.feature, c.pixel.feature)) < 1.0 - 1e-6;
    if (non_collinear) CHECK(std::abs(cosine(e.grad, c.pixel.feature)) < 1.0 - 1e-9);
  }
}

TEST_CASE("reductions with no neighbours") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto c = verify::random_grad_case(rng);
    c.pixel.neighbors.clear();
    const auto b = baseline_weight_grad(c.pixel, c.weights);
    const auto j = jointcrf_weight_grad(c.pixel, c.weights);
    const auto e = ecrf_weight_grad(c.pixel, c.weights);
    for (std::size_t d = 0; d < b.grad.size(); ++d) {
      CHECK(j.grad[d] == doctest::Approx(b.grad[d]).epsilon(1e-15));
      CHECK(e.grad[d] == doctest::Approx(b.grad[d]).epsilon(1e-15));
    }
  }
}

TEST_CASE("zero-weight neighbours change nothing") {
  std::mt19937_64 rng(24);
  auto c = verify::random_grad_case(rng);
  for (auto& n : c.pixel.neighbors) n.weight = 0.0;
  const auto b = baseline_weight_grad(c.pixel, c.weights);
  const auto e = ecrf_weight_grad(c.pixel, c.weights);
  for (std::size_t d = 0; d < b.grad.size(); ++d) CHECK(e.grad[d] == doctest::Approx(b.grad[d]).epsilon(1e-15));
}

TEST_CASE("gradient reports decompose into scale and direction") {
  std::mt19937_64 rng(25);
  const auto c = verify::random_grad_case(rng);
  for (const auto& r : {baseline_weight_grad(c.pixel, c.weights), jointcrf_weight_grad(c.pixel, c.weights),
                        ecrf_weight_grad(c.pixel, c.weights)}) {
    for (std::size_t d = 0; d < r.grad.size(); ++d) CHECK(-r.grad[d] == doctest::Approx(r.scale * r.direction_part[d]));
    double n = 0.0;
    for (double v : r.direction) n += v * v;
    CHECK(n == doctest::Approx(1.0));
    CHECK(r.scale == doctest::Approx(1.0 - r.refined_prob));
  }
}

TEST_CASE("analytic gradients agree with central differences") {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = verify::random_grad_case(rng);
    const auto e = verify::check_theory_case(c, 1e-6);
    CHECK(e.baseline <= 1e-8);
    CHECK(e.joint <= 1e-8);
    CHECK(e.ecrf <= 1e-8);
    const auto frozen = jointcrf_prob_frozen_weight_grad(c.pixel, c.weights);
    CHECK(verify::relative_error(frozen.grad, verify::fd_jointcrf_prob_frozen_grad(c.pixel, c.weights, 1e-4)) <=
          1e-7);
    CHECK(verify::relative_error(jointcrf_full_weight_grad(c.pixel, c.weights),
                                 verify::fd_jointcrf_full_grad(c.pixel, c.weights, 1e-4)) <= 1e-7);
  }
}

TEST_CASE("the full Joint-CRF derivative is generally not collinear") {
  std::mt19937_64 rng(27);
  int off_line = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = verify::random_grad_case(rng);
    if (cross_norm(jointcrf_full_weight_grad(c.pixel, c.weights), c.pixel.feature) > 1e-6) ++off_line;
  }
  CHECK(off_line > 25);
}

TEST_CASE("canonical angle fixture") {
  const auto r = angle_experiment(canonical());
  CHECK(r.baseline == doctest::Approx(1.3723495620031225).epsilon(1e-12));
  CHECK(r.joint == doctest::Approx(1.3769175806566007).epsilon(1e-12));
  CHECK(r.ecrf == doctest::Approx(1.3867613144346596).epsilon(1e-12));
  CHECK(r.initial == doctest::Approx(80.0 * M_PI / 180.0).epsilon(1e-14));
  CHECK(r.baseline < r.joint);
  CHECK(r.joint < r.ecrf);
  CHECK(r.ecrf < r.initial);
}

TEST_CASE("a larger neighbour weight moves the Joint-CRF angle toward the initial one") {
  auto s = canonical();
  double previous = angle_experiment(s).joint;
  for (double w : {2.0, 4.0, 8.0}) {
    s.neighbor_weight = w;
    const double now = angle_experiment(s).joint;
    CHECK(now > previous);
    previous = now;
  }
}

TEST_CASE("angle_experiment rejects collinear weights") {
  AngleSetup s;
  s.w1 = {1.0, 2.0};
  s.w2 = {2.0, 4.0};
  CHECK_THROWS_AS(angle_experiment(s), ParameterError);
  s.w2 = {1.0};
  CHECK_THROWS_AS(angle_experiment(s), DimensionError);
}

TEST_CASE("PixelCase validation") {
  PixelCase p;
  p.feature = {1.0, 0.0};
  p.label = 0;
  p.neighbors.push_back({-1.0, {0.0, 1.0}});
  CHECK_THROWS(p.validate(2));
  p.neighbors[0].weight = 1.5;
  CHECK_NOTHROW(p.validate(2));
  CHECK(p.normalizer() == 2.5);
  p.neighbors[0].feature = {1.0};
  CHECK_THROWS_AS(p.validate(2), DimensionError);
}
