#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "ecrf/benchmark.hpp"
#include "ecrf/checkpoint.hpp"
#include "ecrf/config.hpp"
#include "ecrf/dataset.hpp"
#include "ecrf/densecrf.hpp"
#include "ecrf/gradtheory.hpp"
#include "ecrf/metrics.hpp"
#include "ecrf/png_io.hpp"
#include "ecrf/report.hpp"
#include "ecrf/superpixel.hpp"
#include "ecrf/trainer.hpp"
#include "ecrf/verify.hpp"

namespace fs = std::filesystem;
using namespace ecrf;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  bool verbose = false;
};

void log_config(const cli::ConfigMap& map) {
  std::cout << "# config\n";
  for (const auto& [k, v] : map.entries()) std::cout << "#   " << k << " = " << v << "\n";
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::vector<superpixel::SuperpixelMap> superpixels_for(const cli::Dataset& data, const std::string& sp_dir,
                                                       const superpixel::SlicParams& params, bool verbose) {
  if (!sp_dir.empty()) return cli::load_superpixel_dir(sp_dir, data.samples.size());
  if (verbose) std::cout << "# computing superpixels (" << params.target_blocks << " blocks)\n";
  std::vector<superpixel::SuperpixelMap> maps(data.samples.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < static_cast<int>(maps.size()); ++k) maps[k] = superpixel::slic_segment(data.samples[k].image, params);
  return maps;
}

// ---- commands ----

struct GenDataArgs {
  std::string out;
  int num = 16, size = 96, classes = 8;
  double noise = 0.02;
};

int cmd_gen_data(const GenDataArgs& a, const Globals& g) {
  toynet::SynthConfig cfg;
  cfg.num_images = a.num;
  cfg.size = a.size;
  cfg.num_classes = a.classes;
  cfg.texture_noise = a.noise;
  cfg.seed = g.seed;
  const auto samples = toynet::gen_synthetic_dataset(cfg);
  cli::save_dataset(a.out, samples, cfg);
  std::cout << "wrote " << samples.size() << " images to " << a.out << "\n";
  return kOk;
}

struct SuperpixelArgs {
  std::string image, data, out;
  superpixel::SlicParams params;
};

int cmd_superpixel(const SuperpixelArgs& a, const Globals& g) {
  a.params.validate();
  if (a.image.empty() == a.data.empty()) throw ParameterError("give exactly one of --image or --data");
  if (!a.image.empty()) {
    const auto map = superpixel::slic_segment(normalize_image(io::read_png_rgb(a.image)), a.params);
    superpixel::save_superpixel_map(a.out, map, a.params);
    std::cout << "blocks " << map.block_count << "\n";
    return kOk;
  }
  const auto data = cli::load_dataset(a.data);
  const auto maps = superpixels_for(data, "", a.params, g.verbose);
  cli::save_superpixel_dir(a.out, maps, a.params);
  std::cout << "wrote " << maps.size() << " superpixel maps to " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config, mode, data, sp, out, log;
  int iters = 0;
};

int cmd_train(const TrainArgs& a, const Globals& g, const CLI::App& sub) {
  cli::ExperimentConfig cfg;
  cfg.train.seed = g.seed;
  if (!a.config.empty()) cli::apply_config(cli::load_config_file(a.config), cfg);
  if (!a.mode.empty()) cfg.model.mode = toynet::parse_mode(a.mode);
  if (a.iters > 0) cfg.train.total_iters = a.iters;
  if (sub.count("--seed") || a.config.empty()) cfg.train.seed = g.seed;
  const auto data = cli::load_dataset(a.data);
  cfg.model.net.num_classes = data.num_classes;
  log_config(cli::describe(cfg));

  std::vector<superpixel::SuperpixelMap> maps;
  if (cfg.model.mode == toynet::Mode::ecrf) maps = superpixels_for(data, a.sp, cfg.slic, g.verbose);

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file = open_out(a.log);
    log_file << "iter,lr,loss,miou,fscore\n";
  }
  const int every = g.verbose ? 1 : std::max(1, cfg.train.total_iters / 20);
  auto result = toynet::train(cfg.train, cfg.model, data.samples, maps, [&](const toynet::TrainLogEntry& e) {
    if (log_file.is_open()) {
      log_file << e.iter << ',' << e.lr << ',' << e.loss << ',' << (e.miou ? std::to_string(*e.miou) : "") << ','
               << (e.fscore ? std::to_string(*e.fscore) : "") << '\n';
    }
    if (e.iter % every == 0 || e.miou) {
      std::printf("iter %5d  lr %.6f  loss %.5f", e.iter, e.lr, e.loss);
      if (e.miou) std::printf("  miou %.4f  F %.4f", *e.miou, *e.fscore);
      std::printf("\n");
    }
  });
  cli::save_checkpoint(a.out, cli::make_checkpoint(cfg, result.model, &result.velocity));
  std::cout << "saved " << a.out << "\n";
  return kOk;
}

struct EvalArgs {
  std::string ckpt, data, sp, out;
};

int cmd_eval(const EvalArgs& a, const Globals& g) {
  const auto ckpt = cli::load_checkpoint(a.ckpt);
  const auto cfg = cli::checkpoint_config(ckpt);
  const auto model = cli::restore_model(ckpt);
  const auto data = cli::load_dataset(a.data);
  if (data.num_classes != cfg.model.net.num_classes) throw FormatError("dataset and checkpoint disagree on classes");
  std::vector<superpixel::SuperpixelMap> maps;
  if (cfg.model.mode == toynet::Mode::ecrf) maps = superpixels_for(data, a.sp, cfg.slic, g.verbose);
  const auto r = toynet::evaluate(model, data.samples, maps);
  std::printf("mode %s  miou %.6f  boundary_f %.6f\n", std::string(toynet::mode_name(cfg.model.mode)).c_str(),
              r.miou, r.fscore);
  for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) std::printf("  class %zu  iou %.6f\n", c, r.per_class_iou[c]);
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    out << "class,iou\n";
    for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) out << c << ',' << r.per_class_iou[c] << '\n';
    out << "mean," << r.miou << "\nboundary_f," << r.fscore << '\n';
  }
  return kOk;
}

struct CrfArgs {
  std::string ckpt, data, sp, mode = "vanilla";
  int steps = 5, radius = 4;
  densecrf::GaussianKernelParams kernel;
};

int cmd_crf(const CrfArgs& a, const Globals& g) {
  a.kernel.validate();
  if (a.mode != "vanilla" && a.mode != "joint") throw ParameterError("--mode must be vanilla or joint");
  if (a.steps < 0) throw ParameterError("--steps must be >= 0");
  const auto ckpt = cli::load_checkpoint(a.ckpt);
  const auto cfg = cli::checkpoint_config(ckpt);
  const auto model = cli::restore_model(ckpt);
  const auto data = cli::load_dataset(a.data);
  std::vector<superpixel::SuperpixelMap> maps;
  if (cfg.model.mode == toynet::Mode::ecrf) maps = superpixels_for(data, a.sp, cfg.slic, g.verbose);

  const int n = cfg.model.net.num_classes;
  const int stride = cfg.model.net.feature_stride();
  metrics::ConfusionMatrix before(n), after(n);
  metrics::BoundaryCounts bound_before, bound_after;
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    const auto& s = data.samples[k];
    const auto prepared = toynet::prepare_sample<float>(cfg.model, s.image, nullptr, maps.empty() ? nullptr : &maps[k]);
    const auto state = toynet::forward(model, prepared);
    const Image small = area_downsample(s.image, s.image.height() / stride, s.image.width() / stride);
    densecrf::ProbField refined;
    if (a.mode == "vanilla") {
      refined = densecrf::run_inference(state.logits.cast<double>(), small, a.kernel,
                                        densecrf::LabelCompatibility::identity(n), a.steps);
    } else {
      const auto probs = state.probs.cast<double>();
      refined = probs;
      for (int step = 0; step < a.steps; ++step) {
        const auto current = refined;
        for (int y = 0; y < small.height(); ++y) {
          for (int x = 0; x < small.width(); ++x) {
            std::vector<densecrf::WeightedDistribution> nb;
            for (int yy = std::max(0, y - a.radius); yy <= std::min(small.height() - 1, y + a.radius); ++yy) {
              for (int xx = std::max(0, x - a.radius); xx <= std::min(small.width() - 1, x + a.radius); ++xx) {
                if (yy == y && xx == x) continue;
                const double w = densecrf::gaussian_kernel(
                    {double(y), double(x)}, {double(yy), double(xx)}, {small(y, x, 0), small(y, x, 1), small(y, x, 2)},
                    {small(yy, xx, 0), small(yy, xx, 1), small(yy, xx, 2)}, a.kernel);
                nb.push_back({w, current.cell(yy * small.width() + xx)});
              }
            }
            const auto p = densecrf::joint_refine_probs(current.cell(y * small.width() + x), nb);
            std::copy(p.begin(), p.end(), refined.cell(y * small.width() + x).begin());
          }
        }
      }
    }
    auto argmax_full = [&](const Tensor3<double>& field) {
      const auto up = toynet::upsample_bilinear(field, s.image.height(), s.image.width());
      LabelMap pred(s.image.height(), s.image.width());
      for (int i = 0; i < up.cells(); ++i) {
        auto p = up.cell(i);
        pred.labels()[i] = static_cast<std::int32_t>(std::max_element(p.begin(), p.end()) - p.begin());
      }
      return pred;
    };
    const auto pred0 = argmax_full(state.output.cast<double>());
    const auto pred1 = argmax_full(refined);
    before.add(pred0, s.labels);
    after.add(pred1, s.labels);
    bound_before += metrics::boundary_counts(pred0, s.labels);
    bound_after += metrics::boundary_counts(pred1, s.labels);
  }
  std::printf("crf %s steps %d\n", a.mode.c_str(), a.steps);
  std::printf("  before  miou %.6f  boundary_f %.6f\n", before.mean_iou(), bound_before.fscore());
  std::printf("  after   miou %.6f  boundary_f %.6f\n", after.mean_iou(), bound_after.fscore());
  return kOk;
}

struct BcwcArgs {
  std::vector<std::string> ckpts;
  std::string data, out = "bcwc";
  int top = 10;
};

int cmd_bcwc(const BcwcArgs& a, const Globals&) {
  const auto data = cli::load_dataset(a.data);
  metrics::AdjacencyCounts counts(data.num_classes);
  for (const auto& s : data.samples) counts.add(s.labels);
  std::vector<std::vector<metrics::BcwcRow>> curves;
  std::vector<std::string> labels;
  for (const auto& path : a.ckpts) {
    const auto ckpt = cli::load_checkpoint(path);
    const auto model = cli::restore_model(ckpt);
    if (model.config.net.num_classes != data.num_classes) throw FormatError(path + ": class count differs from data");
    curves.push_back(metrics::bcwc_curve(model.class_weights(), counts));
    labels.push_back(fs::path(path).stem().string());
    auto csv = open_out(a.out + "_" + labels.back() + ".csv");
    cli::write_bcwc_csv(csv, curves.back());
    std::printf("%-20s mean top-%d similarity %.6f\n", labels.back().c_str(), a.top,
                metrics::mean_top_similarity(curves.back(), a.top));
  }
  auto svg = open_out(a.out + ".svg");
  cli::write_bcwc_svg(svg, curves, labels);
  return kOk;
}

struct GradcheckArgs {
  int seeds = 100;
  double eps = 1e-6;
};

int cmd_gradcheck(const GradcheckArgs& a, const Globals& g) {
  std::mt19937_64 rng(g.seed);
  double theory = 0.0, layer_err = 0.0;
  for (int k = 0; k < a.seeds; ++k) {
    const auto e = verify::check_theory_case(verify::random_grad_case(rng), a.eps);
    theory = std::max({theory, e.baseline, e.joint, e.ecrf});
  }
  for (int k = 0; k < a.seeds; ++k) {
    const auto errors = verify::ecrf_layer_gradcheck(verify::random_layer_case(rng), a.eps);
    layer_err = std::max(layer_err, verify::worst(errors));
    if (g.verbose) {
      for (const auto& e : errors) std::printf("  case %d %-14s %.3e\n", k, e.name.c_str(), e.rel_error);
    }
  }
  const bool ok = theory <= 1e-8 && layer_err <= 1e-6;
  std::printf("class-weight gradients  worst rel err %.3e  (limit 1e-8)\n", theory);
  std::printf("ecrf layer              worst rel err %.3e  (limit 1e-6)\n", layer_err);
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? kOk : kNumeric;
}

struct AnglesArgs {
  int sweep = 100;
  std::string out = "angles";
};

int cmd_angles(const AnglesArgs& a, const Globals& g) {
  const auto canonical = verify::canonical_angle_setup();
  std::vector<cli::AngleRow> rows{{"canonical", gradtheory::angle_experiment(canonical)}};
  std::mt19937_64 rng(g.seed);
  for (int k = 0; k < a.sweep; ++k) {
    rows.push_back({"random_" + std::to_string(k), gradtheory::angle_experiment(verify::random_angle_setup(rng))});
  }
  int ordered = 0;
  for (const auto& r : rows) ordered += r.angles.baseline < r.angles.joint && r.angles.joint < r.angles.ecrf;
  const auto& c = rows.front().angles;
  std::printf("canonical  theta1 %.6f  theta2 %.6f  theta3 %.6f (rad)\n", c.baseline, c.joint, c.ecrf);
  std::printf("strict ordering in %d / %zu setups\n", ordered, rows.size());
  auto csv = open_out(a.out + ".csv");
  cli::write_angles_csv(csv, rows);
  auto svg = open_out(a.out + ".svg");
  cli::write_angles_svg(svg, canonical, c);
  return kOk;
}

struct BenchArgs {
  std::vector<int> sizes{8, 16, 24, 32};
  int repeats = 3;
  std::string out;
};

int cmd_bench(const BenchArgs& a, const Globals& g) {
  cli::BenchOptions opt;
  opt.repeats = a.repeats;
  opt.seed = static_cast<unsigned>(g.seed);
  const auto rows = cli::run_benchmark(a.sizes, opt);
  cli::write_bench_csv(std::cout, rows);
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    cli::write_bench_csv(out, rows);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"E-CRF desk-scale laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  if (const char* env = std::getenv("ECRF_THREADS")) g.threads = std::atoi(env);
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "OpenMP threads (default: ECRF_THREADS or all cores)");
  app.add_flag("--verbose,-v", g.verbose, "more logging");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic shapes dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--num", gen.num, "number of images")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "image side in pixels")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "classes including background")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "texture noise amplitude")->capture_default_str();

  SuperpixelArgs sp;
  auto* sp_cmd = app.add_subcommand("superpixel", "SLIC superpixels for one image or a dataset");
  sp_cmd->add_option("--image", sp.image, "input PNG");
  sp_cmd->add_option("--data", sp.data, "dataset directory (batch mode)");
  sp_cmd->add_option("--out", sp.out, "output PNG (single) or directory (batch)")->required();
  sp_cmd->add_option("--blocks", sp.params.target_blocks, "target block count")->capture_default_str();
  sp_cmd->add_option("--compactness", sp.params.compactness)->capture_default_str();
  sp_cmd->add_option("--iters", sp.params.iterations)->capture_default_str();
  sp_cmd->add_option("--min-frac", sp.params.min_block_fraction)->capture_default_str();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "train the toy network");
  tr_cmd->add_option("--config", tr.config, "key=value config file");
  tr_cmd->add_option("--mode", tr.mode, "baseline | joint | ecrf (overrides config)");
  tr_cmd->add_option("--data", tr.data, "dataset directory")->required();
  tr_cmd->add_option("--sp", tr.sp, "superpixel directory (ecrf mode)");
  tr_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  tr_cmd->add_option("--iters", tr.iters, "override total_iters");
  tr_cmd->add_option("--log", tr.log, "per-iteration CSV log");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  ev_cmd->add_option("--ckpt", ev.ckpt)->required();
  ev_cmd->add_option("--data", ev.data)->required();
  ev_cmd->add_option("--sp", ev.sp, "superpixel directory (ecrf checkpoints)");
  ev_cmd->add_option("--out", ev.out, "per-class CSV");

  CrfArgs crf;
  auto* crf_cmd = app.add_subcommand("crf", "CRF post-processing of a checkpoint's predictions");
  crf_cmd->add_option("--ckpt", crf.ckpt)->required();
  crf_cmd->add_option("--data", crf.data)->required();
  crf_cmd->add_option("--sp", crf.sp);
  crf_cmd->add_option("--mode", crf.mode, "vanilla | joint")->capture_default_str();
  crf_cmd->add_option("--steps", crf.steps)->capture_default_str();
  crf_cmd->add_option("--radius", crf.radius, "joint window radius")->capture_default_str();
  crf_cmd->add_option("--w1", crf.kernel.w1)->capture_default_str();
  crf_cmd->add_option("--w2", crf.kernel.w2)->capture_default_str();
  crf_cmd->add_option("--ta", crf.kernel.theta_alpha)->capture_default_str();
  crf_cmd->add_option("--tb", crf.kernel.theta_beta)->capture_default_str();
  crf_cmd->add_option("--tg", crf.kernel.theta_gamma)->capture_default_str();

  BcwcArgs bc;
  auto* bc_cmd = app.add_subcommand("bcwc", "class-weight similarity against boundary adjacency");
  bc_cmd->add_option("--ckpt", bc.ckpts, "checkpoint(s)")->required();
  bc_cmd->add_option("--data", bc.data, "dataset whose ground truth gives the adjacency counts")->required();
  bc_cmd->add_option("--out", bc.out, "output prefix for CSV/SVG")->capture_default_str();
  bc_cmd->add_option("--top", bc.top)->capture_default_str();

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference checks of all analytic gradients");
  gc_cmd->add_option("--seeds", gc.seeds, "random cases per suite")->capture_default_str();
  gc_cmd->add_option("--eps", gc.eps)->capture_default_str();

  AnglesArgs an;
  auto* an_cmd = app.add_subcommand("angles", "class-weight update angle experiment");
  an_cmd->add_option("--sweep", an.sweep, "random setups besides the canonical one")->capture_default_str();
  an_cmd->add_option("--out", an.out, "output prefix for CSV/SVG")->capture_default_str();

  BenchArgs be;
  auto* be_cmd = app.add_subcommand("bench", "micro-benchmarks");
  be_cmd->add_option("--sizes", be.sizes, "grid sides in cells")->delimiter(',');
  be_cmd->add_option("--repeats", be.repeats)->capture_default_str();
  be_cmd->add_option("--out", be.out, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (g.threads > 0) omp_set_num_threads(g.threads);

  try {
    if (*gen_cmd) return cmd_gen_data(gen, g);
    if (*sp_cmd) return cmd_superpixel(sp, g);
    if (*tr_cmd) return cmd_train(tr, g, app);
    if (*ev_cmd) return cmd_eval(ev, g);
    if (*crf_cmd) return cmd_crf(crf, g);
    if (*bc_cmd) return cmd_bcwc(bc, g);
    if (*gc_cmd) return cmd_gradcheck(gc, g);
    if (*an_cmd) return cmd_angles(an, g);
    if (*be_cmd) return cmd_bench(be, g);
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
