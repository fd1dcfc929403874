#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ecrf/superpixel.hpp"

namespace ecrf::superpixel {
namespace {

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double kDelta = 6.0 / 29.0;
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

struct Center {
  double l, a, b, y, x;
};

double squared(double v) { return v * v; }

}  // namespace

void SlicParams::validate() const {
  if (target_blocks < 1) throw ParameterError("SLIC: target_blocks must be >= 1");
  if (iterations < 1) throw ParameterError("SLIC: iterations must be >= 1");
  if (!(compactness > 0.0)) throw ParameterError("SLIC: compactness must be positive");
  if (!(min_block_fraction >= 0.0)) throw ParameterError("SLIC: min_block_fraction must be >= 0");
}

std::array<double, 3> rgb_to_lab(double r, double g, double b) {
  const double rl = srgb_to_linear(r), gl = srgb_to_linear(g), bl = srgb_to_linear(b);
  const double x = (0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl) / 0.95047;
  const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  const double z = (0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl) / 1.08883;
  const double fx = lab_f(x), fy = lab_f(y), fz = lab_f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

SuperpixelMap slic_segment(const Image& image, const SlicParams& params) {
  params.validate();
  if (image.empty()) throw DimensionError("slic_segment: empty image");
  const int h = image.height();
  const int w = image.width();
  const int n = h * w;
  if (params.target_blocks > n) {
    throw ParameterError("slic_segment: target_blocks " + std::to_string(params.target_blocks) +
                         " exceeds pixel count " + std::to_string(n));
  }

  std::vector<std::array<double, 3>> lab(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) lab[y * w + x] = rgb_to_lab(image(y, x, 0), image(y, x, 1), image(y, x, 2));
  }
  auto color_dist = [](const std::array<double, 3>& p, const std::array<double, 3>& q) {
    return squared(p[0] - q[0]) + squared(p[1] - q[1]) + squared(p[2] - q[2]);
  };
  auto gradient = [&](int y, int x) {
    const auto& up = lab[std::max(y - 1, 0) * w + x];
    const auto& down = lab[std::min(y + 1, h - 1) * w + x];
    const auto& left = lab[y * w + std::max(x - 1, 0)];
    const auto& right = lab[y * w + std::min(x + 1, w - 1)];
    return color_dist(up, down) + color_dist(left, right);
  };

  const double k = params.target_blocks;
  const int nx = std::clamp(static_cast<int>(std::ceil(std::sqrt(k * w / h))), 1, w);
  const int ny = std::clamp(static_cast<int>(std::lround(k / nx)), 1, h);
  const double step_y = static_cast<double>(h) / ny;
  const double step_x = static_cast<double>(w) / nx;
  const double spacing = std::sqrt(static_cast<double>(n) / k);

  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(nx) * ny);
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      double cy = (i + 0.5) * step_y - 0.5;
      double cx = (j + 0.5) * step_x - 0.5;
      const int ry = std::clamp(static_cast<int>(std::lround(cy)), 0, h - 1);
      const int rx = std::clamp(static_cast<int>(std::lround(cx)), 0, w - 1);
      // Move off edges: lowest gradient in the 3x3 neighbourhood, only if strictly lower.
      double best = gradient(ry, rx);
      int by = ry, bx = rx;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = ry + dy, xx = rx + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const double g = gradient(yy, xx);
          if (g < best) {
            best = g;
            by = yy;
            bx = xx;
          }
        }
      }
      if (by != ry || bx != rx) {
        cy = by;
        cx = bx;
      }
      const auto& c = lab[by * w + bx];
      centers.push_back({c[0], c[1], c[2], cy, cx});
    }
  }

  const double spatial_weight = squared(params.compactness / spacing);
  auto distance = [&](const Center& c, int p, int y, int x) {
    return color_dist(lab[p], {c.l, c.a, c.b}) + spatial_weight * (squared(y - c.y) + squared(x - c.x));
  };

  std::vector<std::int32_t> labels(n, -1);
  std::vector<double> dist(n);
  for (int iter = 0; iter < params.iterations; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(labels.begin(), labels.end(), -1);
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const Center& c = centers[ci];
      const int y0 = std::max(0, static_cast<int>(std::ceil(c.y - spacing)));
      const int y1 = std::min(h - 1, static_cast<int>(std::floor(c.y + spacing)));
      const int x0 = std::max(0, static_cast<int>(std::ceil(c.x - spacing)));
      const int x1 = std::min(w - 1, static_cast<int>(std::floor(c.x + spacing)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const int p = y * w + x;
          const double d = distance(c, p, y, x);
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<std::int32_t>(ci);
          }
        }
      }
    }
    // Pixels outside every search window fall back to the globally nearest center.
    for (int p = 0; p < n; ++p) {
      if (labels[p] >= 0) continue;
      const int y = p / w, x = p % w;
      for (std::size_t ci = 0; ci < centers.size(); ++ci) {
        const double d = distance(centers[ci], p, y, x);
        if (d < dist[p]) {
          dist[p] = d;
          labels[p] = static_cast<std::int32_t>(ci);
        }
      }
    }

    std::vector<std::array<double, 6>> sums(centers.size(), std::array<double, 6>{});
    for (int p = 0; p < n; ++p) {
      auto& s = sums[labels[p]];
      s[0] += lab[p][0];
      s[1] += lab[p][1];
      s[2] += lab[p][2];
      s[3] += p / w;
      s[4] += p % w;
      s[5] += 1.0;
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const auto& s = sums[ci];
      if (s[5] == 0.0) continue;
      centers[ci] = {s[0] / s[5], s[1] / s[5], s[2] / s[5], s[3] / s[5], s[4] / s[5]};
    }
  }

  SuperpixelMap raw{h, w, std::move(labels), static_cast<int>(centers.size())};
  return enforce_connectivity(raw, params.min_block_fraction, params.target_blocks);
}

}  // namespace ecrf::superpixel
