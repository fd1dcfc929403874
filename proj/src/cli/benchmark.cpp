#include "ecrf/benchmark.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <random>

#include "ecrf/densecrf.hpp"
#include "ecrf/ecrf_layer.hpp"
#include "ecrf/superpixel.hpp"

namespace ecrf::cli {
namespace {

double best_of(int repeats, const std::function<void()>& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

Image random_image(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) img.set(y, x, c, unit(rng));
    }
  }
  return img;
}

}  // namespace

std::vector<BenchRow> run_benchmark(const std::vector<int>& sizes, const BenchOptions& options) {
  if (options.repeats < 1) throw ParameterError("bench: repeats must be >= 1");
  for (int size : sizes) {
    if (size < 2) throw ParameterError("bench: sizes must be >= 2");
  }
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (int size : sizes) {
    const double cells = static_cast<double>(size) * size;
    auto add = [&](std::string op, double seconds) { rows.push_back({std::move(op), size, seconds, cells / seconds}); };

    const Image image = random_image(size, rng);
    superpixel::SlicParams slic;
    slic.target_blocks = std::max(1, std::min(200, size * size / 16));
    superpixel::SuperpixelMap sp;
    add("slic_segment", best_of(options.repeats, [&] { sp = superpixel::slic_segment(image, slic); }));

    Tensor3<float> features(size, size, options.channels);
    for (float& v : features.storage()) v = normal(rng);
    auto params = layer::EcrfParams<float>::initialized(options.channels, 16, 16, rng, 0.1);
    const auto context = layer::make_context<float>(image, sp, size, size, 16);
    layer::EcrfActivation<float> act;
    add("ecrf_forward", best_of(options.repeats, [&] { act = layer::ecrf_forward(features, context, params).second; }));
    Tensor3<float> upstream(size, size, options.channels, 1.0f);
    add("ecrf_backward", best_of(options.repeats, [&] { (void)layer::ecrf_backward(act, upstream); }));
    params.neighborhood = Neighborhood::window(options.window_radius);
    add("ecrf_forward_window", best_of(options.repeats, [&] { (void)layer::ecrf_forward(features, context, params); }));

    densecrf::ScoreField scores(size, size, options.classes);
    for (double& v : scores.storage()) v = normal(rng);
    const densecrf::GaussianKernelParams kernel;
    const auto compat = densecrf::LabelCompatibility::identity(options.classes);
    add("mean_field_step", best_of(options.repeats, [&] {
          (void)densecrf::mean_field_step(scores, image, kernel, compat, Neighborhood::all_pairs());
        }));
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "op,size,seconds,cells_per_second\n";
  for (const auto& r : rows) out << r.op << ',' << r.size << ',' << r.seconds << ',' << r.throughput << '\n';
}

}  // namespace ecrf::cli
