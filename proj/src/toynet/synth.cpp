#include "ecrf/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace ecrf::toynet {
namespace {

using Rgb = std::array<double, 3>;

Rgb hsv(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Rgb rgb{};
  switch (static_cast<int>(hp)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

// Pairs (1,2), (3,4), ... share a hue family and differ in saturation/value.
Rgb base_color(int cls, int num_classes) {
  if (cls == 0) return {0.5, 0.5, 0.5};
  const int pairs = num_classes / 2;
  const int pair = (cls - 1) / 2;
  const double hue = static_cast<double>(pair) / std::max(1, pairs);
  return (cls - 1) % 2 == 0 ? hsv(hue, 0.75, 0.85) : hsv(hue + 0.06, 0.55, 0.60);
}

enum class ShapeKind { rectangle, ellipse, triangle };

struct Shape {
  ShapeKind kind;
  double cy, cx, ry, rx, angle;
  std::array<std::array<double, 2>, 3> tri;

  bool contains(double y, double x) const {
    switch (kind) {
      case ShapeKind::rectangle:
      case ShapeKind::ellipse: {
        const double dy = y - cy, dx = x - cx;
        const double u = dy * std::cos(angle) + dx * std::sin(angle);
        const double v = -dy * std::sin(angle) + dx * std::cos(angle);
        if (kind == ShapeKind::rectangle) return std::abs(u) <= ry && std::abs(v) <= rx;
        return (u * u) / (ry * ry) + (v * v) / (rx * rx) <= 1.0;
      }
      case ShapeKind::triangle: {
        auto side = [&](int a, int b) {
          return (tri[b][1] - tri[a][1]) * (y - tri[a][0]) - (tri[b][0] - tri[a][0]) * (x - tri[a][1]);
        };
        const double s0 = side(0, 1), s1 = side(1, 2), s2 = side(2, 0);
        return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
      }
    }
    return false;
  }
};

Shape random_shape(std::mt19937_64& rng, double cy, double cx, double radius) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Shape s{};
  const double r = unit(rng);
  s.kind = r < 0.4 ? ShapeKind::rectangle : (r < 0.75 ? ShapeKind::ellipse : ShapeKind::triangle);
  s.cy = cy;
  s.cx = cx;
  s.ry = radius * (0.6 + 0.6 * unit(rng));
  s.rx = radius * (0.6 + 0.6 * unit(rng));
  s.angle = unit(rng) * std::numbers::pi;
  for (int v = 0; v < 3; ++v) {
    const double a = s.angle + v * 2.0 * std::numbers::pi / 3.0 + 0.4 * (unit(rng) - 0.5);
    const double rr = radius * (0.9 + 0.5 * unit(rng));
    s.tri[v] = {cy + rr * std::sin(a), cx + rr * std::cos(a)};
  }
  return s;
}

Sample render(const SynthConfig& cfg, std::mt19937_64& rng, int& next_class) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, cfg.texture_noise);
  const int size = cfg.size;
  LabelMap labels(size, size, 0);
  std::vector<Rgb> colors(static_cast<std::size_t>(size) * size);

  // Background: low-frequency stripes around the background base color.
  const double fy = 2.0 + 4.0 * unit(rng), fx = 2.0 + 4.0 * unit(rng), phase = unit(rng) * 6.28;
  const Rgb bg = base_color(0, cfg.num_classes);
  const Rgb tint{0.15 * (unit(rng) - 0.5), 0.15 * (unit(rng) - 0.5), 0.15 * (unit(rng) - 0.5)};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double wave = 0.08 * std::sin(fy * y / size * 6.28 + fx * x / size * 6.28 + phase);
      for (int c = 0; c < 3; ++c) colors[y * size + x][c] = bg[c] + tint[c] + wave;
    }
  }

  std::uniform_int_distribution<int> count_dist(cfg.min_shapes, cfg.max_shapes);
  const int shapes = count_dist(rng);
  for (int s = 0; s < shapes; ++s) {
    const int cls = 1 + (next_class++ % (cfg.num_classes - 1));
    const double radius = size * (0.10 + 0.10 * unit(rng));
    const double cy = radius + unit(rng) * (size - 2 * radius);
    const double cx = radius + unit(rng) * (size - 2 * radius);
    std::vector<std::pair<int, Shape>> group{{cls, random_shape(rng, cy, cx, radius)}};
    // Usually attach the partner class so the pair shares a boundary.
    const int partner = partner_class(cls, cfg.num_classes);
    if (partner != cls && unit(rng) < 0.8) {
      const double a = unit(rng) * 2.0 * std::numbers::pi;
      const double pr = radius * (0.6 + 0.4 * unit(rng));
      const double d = radius * 0.9 + pr * 0.5;
      group.push_back({partner, random_shape(rng, cy + d * std::sin(a), cx + d * std::cos(a), pr)});
    }
    for (const auto& [shape_cls, shape] : group) {
      Rgb color = base_color(shape_cls, cfg.num_classes);
      for (double& v : color) v += 0.06 * (unit(rng) - 0.5);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          if (!shape.contains(y + 0.5, x + 0.5)) continue;
          labels(y, x) = shape_cls;
          colors[y * size + x] = color;
        }
      }
    }
  }

  Image image(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) image.set(y, x, c, static_cast<float>(colors[y * size + x][c] + noise(rng)));
    }
  }
  return {std::move(image), std::move(labels)};
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes < 2) throw ParameterError("SynthConfig: num_classes must be >= 2");
  if (num_classes > 255) throw ParameterError("SynthConfig: num_classes must fit 8-bit labels");
  if (size < 32) throw ParameterError("SynthConfig: size must be >= 32");
  if (num_images < 1) throw ParameterError("SynthConfig: num_images must be >= 1");
  if (min_shapes < 1 || max_shapes < min_shapes) throw ParameterError("SynthConfig: invalid shape range");
  if (!(texture_noise >= 0.0)) throw ParameterError("SynthConfig: texture_noise must be >= 0");
}

int partner_class(int cls, int num_classes) {
  if (cls == 0) return 0;
  const int partner = (cls - 1) % 2 == 0 ? cls + 1 : cls - 1;
  return partner < num_classes ? partner : cls;
}

std::vector<Sample> gen_synthetic_dataset(const SynthConfig& config) {
  config.validate();
  constexpr int kMaxAttempts = 20;
  std::mt19937_64 rng(config.seed);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<Sample> data;
    data.reserve(config.num_images);
    int next_class = 0;
    std::vector<long> histogram(config.num_classes, 0);
    for (int i = 0; i < config.num_images; ++i) {
      data.push_back(render(config, rng, next_class));
      for (std::int32_t id : data.back().labels.labels()) ++histogram[id];
    }
    if (std::all_of(histogram.begin(), histogram.end(), [](long c) { return c > 0; })) return data;
  }
  throw GenerationError("gen_synthetic_dataset: could not cover all " + std::to_string(config.num_classes) +
                        " classes in " + std::to_string(kMaxAttempts) + " attempts");
}

}  // namespace ecrf::toynet
