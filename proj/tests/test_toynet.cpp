#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "ecrf/network.hpp"
#include "ecrf/superpixel.hpp"
#include "ecrf/synth.hpp"
#include "ecrf/trainer.hpp"
#include "ecrf/verify.hpp"
#include "support/oracles.hpp"

using namespace ecrf;
using namespace ecrf::toynet;

namespace {

SynthConfig small_synth(int images, std::uint64_t seed) {
  SynthConfig sc;
  sc.num_images = images;
  sc.size = 32;
  sc.num_classes = 4;
  sc.min_shapes = 2;
  sc.max_shapes = 3;
  sc.seed = seed;
  return sc;
}

ModelConfig small_model(Mode mode) {
  ModelConfig mc;
  mc.mode = mode;
  mc.net.num_classes = 4;
  mc.net.layers = {{4, 3, 2}, {4, 3, 2}};
  mc.ecrf.embed_dim = 4;
  mc.ecrf.position_dim = 4;
  mc.ecrf.embed_gain = 0.3;
  return mc;
}

superpixel::SuperpixelMap segment(const Image& image) {
  superpixel::SlicParams p;
  p.target_blocks = 20;
  return superpixel::slic_segment(image, p);
}

// Replaces exact zeros so that every parameter influences the loss.
template <typename T>
void jitter_zeros(Model<T>& m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.05);
  for (auto& slot : m.parameters())
    for (auto& v : slot.values)
      if (v == T(0)) v = static_cast<T>(normal(rng));
}

}  // namespace

TEST_CASE("synthetic dataset") {
  const auto a = gen_synthetic_dataset(small_synth(4, 7));
  const auto b = gen_synthetic_dataset(small_synth(4, 7));
  const auto c = gen_synthetic_dataset(small_synth(4, 8));
  REQUIRE(a.size() == 4);
  std::set<int> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].labels.labels()[0] == b[i].labels.labels()[0]);
    CHECK(a[i].image.height() == 32);
    CHECK(a[i].labels.width() == 32);
    for (auto l : a[i].labels.labels()) {
      CHECK(l >= 0);
      CHECK(l < 4);
      seen.insert(l);
    }
  }
  CHECK(seen.size() == 4);
  CHECK_FALSE(a[0].image == c[0].image);
}

TEST_CASE("synthetic dataset errors and partners") {
  auto sc = small_synth(1, 0);
  sc.num_classes = 200;
  CHECK_THROWS_AS(gen_synthetic_dataset(sc), GenerationError);
  sc = small_synth(1, 0);
  sc.size = 8;
  CHECK_THROWS_AS(gen_synthetic_dataset(sc), ParameterError);
  CHECK(partner_class(1, 8) == 2);
  CHECK(partner_class(2, 8) == 1);
  CHECK(partner_class(0, 8) == 0);
}

TEST_CASE("poly_lr") {
  TrainConfig tc;
  tc.lr0 = 0.01;
  tc.total_iters = 300;
  tc.poly_power = 0.9;
  CHECK(poly_lr(0, tc) == 0.01);
  CHECK(poly_lr(300, tc) == 0.0);
  CHECK(poly_lr(150, tc) == doctest::Approx(0.0053589).epsilon(1e-5));
  CHECK_THROWS_AS(poly_lr(301, tc), ParameterError);
  CHECK_THROWS_AS(poly_lr(-1, tc), ParameterError);
}

TEST_CASE("sgd_step") {
  std::mt19937_64 rng(1);
  const auto mc = small_model(Mode::ecrf);
  auto model = Model<double>::initialized(mc, rng);
  jitter_zeros(model, rng);
  auto grads = model.zeros_like();
  for (auto& slot : grads.parameters())
    for (auto& v : slot.values) v = 0.5;
  SUBCASE("zero learning rate leaves parameters unchanged") {
    auto velocity = model.zeros_like();
    const auto before = model.parameters();
    std::vector<std::vector<double>> copy;
    for (const auto& s : before) copy.emplace_back(s.values.begin(), s.values.end());
    sgd_step(model, grads, velocity, 0.0, 0.9, 0.0005);
    const auto after = model.parameters();
    for (std::size_t s = 0; s < after.size(); ++s)
      CHECK(std::equal(after[s].values.begin(), after[s].values.end(), copy[s].begin()));
  }
  SUBCASE("momentum and decay follow the update rule") {
    auto velocity = model.zeros_like();
    for (auto& slot : velocity.parameters())
      for (auto& v : slot.values) v = 0.1;
    const double theta = model.classifier[3];
    const double bias = model.ecrf.compat_bias;
    sgd_step(model, grads, velocity, 0.01, 0.9, 0.0005);
    const double v = 0.9 * 0.1 + 0.01 * (0.5 + 0.0005 * theta);
    CHECK(velocity.classifier[3] == doctest::Approx(v).epsilon(1e-15));
    CHECK(model.classifier[3] == doctest::Approx(theta - v).epsilon(1e-15));
    CHECK(velocity.ecrf.compat_bias == doctest::Approx(0.9 * 0.1 + 0.01 * 0.5).epsilon(1e-15));
    CHECK(model.ecrf.compat_bias == doctest::Approx(bias - 0.095).epsilon(1e-15));
  }
  SUBCASE("only the compat bias skips weight decay") {
    for (const auto& slot : model.parameters()) CHECK(slot.decay == (slot.name != "ecrf.compat_bias"));
  }
}

TEST_CASE("network gradients agree with central differences") {
  std::mt19937_64 data_rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int trial = 0; trial < 3; ++trial) {
  const Image image = testing::random_image(8, 8, data_rng);
  LabelMap labels(8, 8);
  for (auto& l : labels.labels()) l = cls(data_rng);
  superpixel::SlicParams sp;
  sp.target_blocks = 4;
  const auto map = superpixel::slic_segment(image, sp);
  for (Mode mode : {Mode::baseline, Mode::joint, Mode::ecrf}) {
    INFO(mode_name(mode));
    auto mc = small_model(mode);
    mc.net.layers = {{4, 3, 2}, {4, 3, 1}};
    std::mt19937_64 rng(1 + trial);
    auto model = Model<double>::initialized(mc, rng);
    jitter_zeros(model, rng);
    const auto sample = prepare_sample<double>(mc, image, &labels, &map);
    for (const auto& e : verify::network_gradcheck(model, sample, 1e-4)) {
      INFO(e.name);
      CHECK(e.rel_error <= 1e-7);
    }
    const auto model32 = model.cast<float>();
    const auto sample32 = prepare_sample<float>(mc, image, &labels, &map);
    for (const auto& e : verify::network_gradcheck(model32, sample32, 1e-6)) {
      INFO(e.name);
      CHECK(e.rel_error <= 1e-4);
    }
  }
  }
}

TEST_CASE("forward matches a naive convolution stack") {
  const auto data = gen_synthetic_dataset(small_synth(1, 4));
  const auto mc = small_model(Mode::baseline);
  std::mt19937_64 rng(2);
  auto model = Model<double>::initialized(mc, rng);
  jitter_zeros(model, rng);
  const auto sample = prepare_sample<double>(mc, data[0].image, nullptr, nullptr);
  const auto state = forward(model, sample);
  const auto ref = testing::naive_logits(model, data[0].image);
  REQUIRE(state.logits.same_shape(ref));
  CHECK(state.logits.height() == 8);
  for (std::size_t k = 0; k < ref.size(); ++k) CHECK(state.logits.storage()[k] == doctest::Approx(ref.storage()[k]).epsilon(1e-12));
  for (int i = 0; i < state.output.cells(); ++i) {
    double s = 0.0;
    for (double p : state.output.cell(i)) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("E-CRF with both terms off reproduces the baseline bit for bit") {
  const auto data = gen_synthetic_dataset(small_synth(1, 5));
  const auto map = segment(data[0].image);
  std::mt19937_64 rng(3);
  const auto base = Model<float>::initialized(small_model(Mode::baseline), rng);
  auto mc = small_model(Mode::ecrf);
  mc.ecrf.use_pairwise = false;
  mc.ecrf.use_superpixel = false;
  auto ecrf_model = Model<float>::initialized(mc, rng);
  ecrf_model.convs = base.convs;
  ecrf_model.classifier = base.classifier;
  const auto a = forward(base, prepare_sample<float>(base.config, data[0].image, nullptr, nullptr));
  const auto b = forward(ecrf_model, prepare_sample<float>(mc, data[0].image, nullptr, &map));
  CHECK(a.logits == b.logits);
  CHECK(a.output == b.output);
}

TEST_CASE("configuration errors") {
  auto mc = small_model(Mode::ecrf);
  const auto data = gen_synthetic_dataset(small_synth(1, 6));
  CHECK_THROWS_AS(prepare_sample<double>(mc, data[0].image, nullptr, nullptr), ParameterError);
  CHECK_THROWS_AS(parse_mode("crf"), ParameterError);
  CHECK(parse_mode("joint") == Mode::joint);
  mc.net.layers = {{4, 2, 1}};
  CHECK_THROWS_AS(mc.validate(), ParameterError);
  TrainConfig tc;
  tc.batch = 0;
  CHECK_THROWS_AS(tc.validate(), ParameterError);
}

TEST_CASE("loss decreases on a single separable sample") {
  // Left half class 0 in dark red, right half class 1 in bright blue.
  Image img(32, 32);
  LabelMap labels(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const bool right = x >= 16;
      img.set(y, x, 0, right ? 0.1f : 0.8f);
      img.set(y, x, 2, right ? 0.9f : 0.1f);
      labels(y, x) = right;
    }
  auto mc = small_model(Mode::baseline);
  mc.net.num_classes = 2;
  std::mt19937_64 rng(4);
  auto model = Model<double>::initialized(mc, rng);
  const auto sample = prepare_sample<double>(mc, img, &labels, nullptr);
  auto velocity = model.zeros_like();
  const double first = loss_value(forward(model, sample), sample);
  double last = first;
  for (int step = 0; step < 50; ++step) {
    auto grads = model.zeros_like();
    const auto state = forward(model, sample);
    last = backward(model, sample, state, grads);
    sgd_step(model, grads, velocity, 0.01, 0.9, 0.0);
  }
  last = loss_value(forward(model, sample), sample);
  CHECK(last < first);
  CHECK(last < 0.5 * first);
}

TEST_CASE("training is deterministic and superpixel-only runs need no pair buffers") {
  const auto data = gen_synthetic_dataset(small_synth(3, 9));
  std::vector<superpixel::SuperpixelMap> sp;
  for (const auto& s : data) sp.push_back(segment(s.image));
  TrainConfig tc;
  tc.total_iters = 200;
  tc.batch = 2;
  tc.seed = 11;
  auto mc = small_model(Mode::ecrf);
  mc.ecrf.use_pairwise = false;
  const long before = layer::pair_buffer_allocations();
  const auto a = train(tc, mc, data, sp);
  CHECK(layer::pair_buffer_allocations() == before);
  const auto b = train(tc, mc, data, sp);
  CHECK(a.model.classifier == b.model.classifier);
  CHECK(a.model.ecrf.embed_weight == b.model.ecrf.embed_weight);
  REQUIRE(a.log.size() == b.log.size());
  CHECK(a.log.back().loss == b.log.back().loss);
  CHECK(a.log.back().loss < a.log.front().loss);
  CHECK(std::isfinite(evaluate(a.model, data, sp).miou));

  const auto base = train(tc, small_model(Mode::baseline), data, {});
  CHECK(layer::pair_buffer_allocations() == before);
  CHECK(base.log.size() == a.log.size());

  sp.pop_back();
  CHECK_THROWS_AS(train(tc, mc, data, sp), DimensionError);
}

TEST_CASE("upsample_bilinear") {
  Tensor3<double> src(1, 2, 1);
  src(0, 0, 0) = 0.0;
  src(0, 1, 0) = 1.0;
  const auto up = upsample_bilinear(src, 1, 4);
  CHECK(up(0, 0, 0) == 0.0);
  CHECK(up(0, 1, 0) == doctest::Approx(0.25));
  CHECK(up(0, 2, 0) == doctest::Approx(0.75));
  CHECK(up(0, 3, 0) == 1.0);
  Tensor3<double> constant(3, 3, 2, 0.4);
  const auto up_const = upsample_bilinear(constant, 7, 5);
  for (double v : up_const.storage()) CHECK(v == doctest::Approx(0.4));
}
