#include <doctest.h>

#include <cmath>

#include "ecrf/gridcore.hpp"
#include "ecrf/png_io.hpp"
#include "support/oracles.hpp"

using namespace ecrf;

TEST_CASE("normalize_image scales by 1/255") {
  RawImage raw(1, 1, 3);
  raw(0, 0, 0) = 0;
  raw(0, 0, 1) = 128;
  raw(0, 0, 2) = 255;
  const Image img = normalize_image(raw);
  CHECK(img(0, 0, 0) == 0.0f);
  CHECK(img(0, 0, 1) == doctest::Approx(128.0 / 255.0));
  CHECK(img(0, 0, 2) == 1.0f);
}

TEST_CASE("normalize_image black and white images") {
  RawImage black(3, 4, 3, 0), white(3, 4, 3, 255);
  const Image b = normalize_image(black), w = normalize_image(white);
  for (float v : b.tensor().storage()) CHECK(v == 0.0f);
  for (float v : w.tensor().storage()) CHECK(v == 1.0f);
}

TEST_CASE("normalize_image rejects an empty image") {
  CHECK_THROWS_AS(normalize_image(RawImage()), DimensionError);
}

TEST_CASE("quantize then normalize is idempotent on normalized input") {
  RawImage raw(2, 2, 3);
  for (std::size_t k = 0; k < raw.size(); ++k) raw.storage()[k] = static_cast<std::uint8_t>(k * 21);
  const Image once = normalize_image(raw);
  CHECK(normalize_image(quantize_image(once)) == once);
}

TEST_CASE("Image rejects values outside [0, 1]") {
  Tensor3<float> bad(1, 1, 3, 0.5f);
  bad(0, 0, 1) = 1.5f;
  CHECK_THROWS_AS(Image{bad}, ParameterError);
  CHECK_THROWS(Image(Tensor3<float>(1, 1, 2, 0.5f)));
}

TEST_CASE("position_embedding at the origin is (0, 1, 0, 1, ...)") {
  for (int dim : {2, 4, 8, 16}) {
    const auto pos = position_embedding(4, 5, dim);
    for (int c = 0; c < dim; ++c) CHECK(pos(0, 0, c) == (c % 2 == 0 ? 0.0 : 1.0));
  }
}

TEST_CASE("position_embedding at (3, 5) with dim 8") {
  // Two row pairs and two column pairs on the ladder 1, base^-1/2.
  const auto pos = position_embedding(8, 8, 8);
  const double w1 = std::pow(10000.0, -0.5);
  CHECK(pos(3, 5, 0) == doctest::Approx(std::sin(3.0)).epsilon(1e-15));
  CHECK(pos(3, 5, 1) == doctest::Approx(std::cos(3.0)).epsilon(1e-15));
  CHECK(pos(3, 5, 2) == doctest::Approx(std::sin(3.0 * w1)).epsilon(1e-15));
  CHECK(pos(3, 5, 3) == doctest::Approx(std::cos(3.0 * w1)).epsilon(1e-15));
  CHECK(pos(3, 5, 4) == doctest::Approx(std::sin(5.0)).epsilon(1e-15));
  CHECK(pos(3, 5, 5) == doctest::Approx(std::cos(5.0)).epsilon(1e-15));
  CHECK(pos(3, 5, 6) == doctest::Approx(std::sin(5.0 * w1)).epsilon(1e-15));
  CHECK(pos(3, 5, 7) == doctest::Approx(std::cos(5.0 * w1)).epsilon(1e-15));
}

TEST_CASE("position_embedding squared norm is dim / 2 everywhere") {
  for (int dim : {2, 6, 16}) {
    const auto pos = position_embedding(7, 9, dim, 24.0);
    for (int i = 0; i < pos.cells(); ++i) {
      double sq = 0.0;
      for (double v : pos.cell(i)) sq += v * v;
      CHECK(sq == doctest::Approx(dim / 2.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("position_embedding rejects odd or tiny dims") {
  CHECK_THROWS_AS(position_embedding(4, 4, 7), ParameterError);
  CHECK_THROWS_AS(position_embedding(4, 4, 0), ParameterError);
}

TEST_CASE("downsample_labels majority and tie rule") {
  LabelMap a(2, 2);
  a(0, 0) = 1, a(0, 1) = 1, a(1, 0) = 2, a(1, 1) = 0;
  CHECK(downsample_labels(a, 2)(0, 0) == 1);
  LabelMap b(2, 2);
  b(0, 0) = 0, b(0, 1) = 0, b(1, 0) = 1, b(1, 1) = 1;
  CHECK(downsample_labels(b, 2)(0, 0) == 0);
  LabelMap c(2, 2);
  c(0, 0) = 3, c(0, 1) = 2, c(1, 0) = 3, c(1, 1) = 2;
  CHECK(downsample_labels(c, 2)(0, 0) == 2);
}

TEST_CASE("downsample_labels of a uniform map is uniform") {
  const LabelMap u(8, 12, 4);
  const LabelMap d = downsample_labels(u, 4);
  CHECK(d.height() == 2);
  CHECK(d.width() == 3);
  for (auto v : d.labels()) CHECK(v == 4);
}

TEST_CASE("downsample_labels pads with ignore and ignores ignore") {
  LabelMap m(3, 3, 1);
  m(0, 0) = kIgnoreLabel;
  m(0, 1) = kIgnoreLabel;
  m(1, 0) = kIgnoreLabel;
  const LabelMap d = downsample_labels(m, 2);
  CHECK(d.height() == 2);
  CHECK(d(0, 0) == 1);
  CHECK(d(1, 1) == 1);
  LabelMap all_ignore(2, 2, kIgnoreLabel);
  CHECK(downsample_labels(all_ignore, 2)(0, 0) == kIgnoreLabel);
  CHECK_THROWS_AS(downsample_labels(m, 0), ParameterError);
}

TEST_CASE("area_downsample averages blocks") {
  Tensor3<double> t(2, 2, 1);
  t(0, 0, 0) = 1, t(0, 1, 0) = 2, t(1, 0, 0) = 3, t(1, 1, 0) = 4;
  CHECK(area_downsample(t, 1, 1)(0, 0, 0) == doctest::Approx(2.5));
  CHECK(area_downsample(t, 2, 2) == t);
}

TEST_CASE("LabelMap validate") {
  LabelMap m(2, 2, 1);
  CHECK_NOTHROW(m.validate(2));
  m(1, 1) = kIgnoreLabel;
  CHECK_NOTHROW(m.validate(2));
  m(0, 0) = 5;
  CHECK_THROWS_AS(m.validate(2), DimensionError);
}

TEST_CASE("PNG round trips") {
  const auto dir = testing::temp_dir("png");
  RawImage raw(5, 7, 3);
  for (std::size_t k = 0; k < raw.size(); ++k) raw.storage()[k] = static_cast<std::uint8_t>(k * 37);
  io::write_png_rgb(dir / "a.png", raw);
  CHECK(io::read_png_rgb(dir / "a.png") == raw);

  LabelMap labels(4, 6);
  for (int i = 0; i < labels.cells(); ++i) labels.labels()[i] = i % 5;
  labels(0, 0) = kIgnoreLabel;
  io::write_label_png(dir / "l.png", labels);
  CHECK(io::read_label_png(dir / "l.png") == labels);

  io::GrayImage g{3, 3, 16, {0, 1, 255, 256, 1000, 40000, 65535, 7, 9}};
  io::write_png_gray(dir / "g.png", g);
  const auto back = io::read_png_gray(dir / "g.png");
  CHECK(back.bit_depth == 16);
  CHECK(back.values == g.values);

  CHECK_THROWS_AS(io::read_png_rgb(dir / "missing.png"), IoError);
}
