#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "ecrf/benchmark.hpp"
#include "ecrf/checkpoint.hpp"
#include "ecrf/config.hpp"
#include "ecrf/dataset.hpp"
#include "support/oracles.hpp"

using namespace ecrf;
using namespace ecrf::cli;

namespace {

ExperimentConfig small_experiment(toynet::Mode mode) {
  ExperimentConfig c;
  c.model.mode = mode;
  c.model.net.num_classes = 4;
  c.model.net.layers = {{4, 3, 2}, {6, 3, 2}};
  c.model.ecrf.embed_dim = 3;
  c.model.ecrf.position_dim = 4;
  return c;
}

std::vector<std::uint8_t> encoded_model(toynet::Mode mode) {
  const auto cfg = small_experiment(mode);
  std::mt19937_64 rng(5);
  const auto model = toynet::Model<float>::initialized(cfg.model, rng);
  return encode_checkpoint(make_checkpoint(cfg, model));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ECRF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config text parsing") {
  const auto m = parse_config_text("# comment\nlr0 = 0.02\n\n  mode=ecrf   # trailing\nlr0 = 0.03\n");
  REQUIRE(m.find("lr0") != nullptr);
  CHECK(*m.find("lr0") == "0.03");
  CHECK(*m.find("mode") == "ecrf");
  CHECK(m.find("seed") == nullptr);
  try {
    parse_config_text("lr0 = 1\nnot a pair\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config_file(testing::temp_dir("cfg_missing") / "none.cfg"), IoError);
}

TEST_CASE("apply_config and describe round trip") {
  ExperimentConfig c;
  apply_config(parse_config_text("mode = ecrf\nlayers = 8:3:2,16:5:1\nwindow_radius = 3\nuse_superpixel = 0\n"
                                 "position_base = 24\ntarget_blocks = 50\nlr0 = 0.005\n"),
               c);
  CHECK(c.model.mode == toynet::Mode::ecrf);
  REQUIRE(c.model.net.layers.size() == 2);
  CHECK(c.model.net.layers[1].kernel == 5);
  CHECK(c.model.ecrf.window_radius == 3);
  CHECK_FALSE(c.model.ecrf.use_superpixel);
  CHECK(c.model.ecrf.position_base == 24.0);
  CHECK(c.slic.target_blocks == 50);
  CHECK(c.train.lr0 == 0.005);

  ExperimentConfig d;
  apply_config(describe(c), d);
  CHECK(describe(d).to_text() == describe(c).to_text());

  ExperimentConfig e;
  CHECK_THROWS_AS(apply_config(parse_config_text("bogus = 1\n"), e), ParameterError);
  CHECK_THROWS_AS(apply_config(parse_config_text("lr0 = fast\n"), e), ParameterError);
  CHECK_THROWS_AS(apply_config(parse_config_text("mode = crf\n"), e), ParameterError);
  CHECK_THROWS_AS(apply_config(parse_config_text("layers = 8:3\n"), e), ParameterError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (auto mode : {toynet::Mode::baseline, toynet::Mode::joint, toynet::Mode::ecrf}) {
    const auto cfg = small_experiment(mode);
    std::mt19937_64 rng(6);
    const auto model = toynet::Model<float>::initialized(cfg.model, rng);
    auto velocity = model.zeros_like();
    for (auto& slot : velocity.parameters())
      for (auto& v : slot.values) v = 0.25f;
    const auto path = testing::temp_dir("ckpt") / "model.ckpt";
    save_checkpoint(path, make_checkpoint(cfg, model, &velocity));
    const auto loaded = load_checkpoint(path);
    const auto restored = restore_model(loaded);
    const auto a = model.parameters();
    const auto b = restored.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t s = 0; s < a.size(); ++s) {
      CHECK(a[s].name == b[s].name);
      CHECK(std::equal(a[s].values.begin(), a[s].values.end(), b[s].values.begin(), b[s].values.end()));
    }
    CHECK(restored.config.mode == mode);
    const auto v = restore_velocity(loaded);
    REQUIRE(v.has_value());
    CHECK(v->classifier == velocity.classifier);
    CHECK(encode_checkpoint(loaded) == encode_checkpoint(make_checkpoint(cfg, model, &velocity)));
    CHECK(describe(checkpoint_config(loaded)).to_text() == describe(cfg).to_text());
  }
}

TEST_CASE("checkpoint corruption is rejected") {
  const auto good = encoded_model(toynet::Mode::ecrf);
  CHECK_NOTHROW(decode_checkpoint(good));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
  auto bad_version = good;
  bad_version[5] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), VersionError);
  auto flipped = good;
  flipped[good.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(decode_checkpoint(flipped), FormatError);
  const std::vector<std::uint8_t> truncated(good.begin(), good.end() - 7);
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(std::vector<std::uint8_t>{}), FormatError);
  CHECK_THROWS_AS(load_checkpoint(testing::temp_dir("ckpt_missing") / "nope.ckpt"), IoError);
}

TEST_CASE("restore_model checks shapes against the config") {
  auto ck = decode_checkpoint(encoded_model(toynet::Mode::baseline));
  ck.config.set("num_classes", "5");
  CHECK_THROWS_AS(restore_model(ck), DimensionError);
  auto missing = decode_checkpoint(encoded_model(toynet::Mode::baseline));
  missing.tensors.pop_back();
  CHECK_THROWS_AS(restore_model(missing), FormatError);
}

TEST_CASE("dataset directory round trip") {
  toynet::SynthConfig sc;
  sc.num_images = 2;
  sc.size = 32;
  sc.num_classes = 4;
  sc.min_shapes = 2;
  sc.max_shapes = 3;
  const auto samples = toynet::gen_synthetic_dataset(sc);
  const auto dir = testing::temp_dir("dataset");
  save_dataset(dir, samples, sc);
  const auto loaded = load_dataset(dir);
  CHECK(loaded.num_classes == 4);
  REQUIRE(loaded.samples.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(loaded.samples[i].labels.labels()[0] == samples[i].labels.labels()[0]);
    CHECK(std::equal(loaded.samples[i].labels.labels().begin(), loaded.samples[i].labels.labels().end(),
                     samples[i].labels.labels().begin()));
    for (std::size_t k = 0; k < samples[i].image.tensor().size(); ++k)
      CHECK(std::abs(loaded.samples[i].image.tensor().storage()[k] - samples[i].image.tensor().storage()[k]) <=
            0.5f / 255.0f + 1e-6f);
  }
  superpixel::SlicParams sp;
  sp.target_blocks = 10;
  std::vector<superpixel::SuperpixelMap> maps;
  for (const auto& s : samples) maps.push_back(superpixel::slic_segment(s.image, sp));
  save_superpixel_dir(dir / "sp", maps, sp);
  CHECK(load_superpixel_dir(dir / "sp", 2) == maps);
  CHECK_THROWS_AS(load_superpixel_dir(dir / "sp", 3), Error);
  std::filesystem::remove(dir / "dataset.txt");
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
}

TEST_CASE("benchmark rows") {
  CHECK(run_benchmark({}).empty());
  BenchOptions opt;
  opt.repeats = 1;
  opt.channels = 8;
  opt.window_radius = 2;
  const auto rows = run_benchmark({12, 24}, opt);
  auto seconds = [&](const std::string& op, int size) {
    for (const auto& r : rows)
      if (r.op == op && r.size == size) return r.seconds;
    FAIL("missing row " << op);
    return 0.0;
  };
  CHECK(seconds("ecrf_forward_window", 24) < seconds("ecrf_forward", 24));
  // All-pairs cost grows with the square of the cell count.
  CHECK(seconds("ecrf_forward", 24) > 4.0 * seconds("ecrf_forward", 12));
  std::ostringstream csv;
  write_bench_csv(csv, rows);
  CHECK(csv.str().rfind("op,size,seconds,cells_per_second", 0) == 0);
  CHECK_THROWS_AS(run_benchmark({0}), ParameterError);
}

TEST_CASE("command-line exit codes") {
  const auto dir = testing::temp_dir("cli");
  const std::string d = dir.string();
  CHECK(run_cli("") == 2);
  CHECK(run_cli("train --data " + d) == 2);
  CHECK(run_cli("gen-data --out " + d + "/data --num 2 --size 32 --classes 3") == 0);
  {
    std::ofstream cfg(dir / "small.cfg");
    cfg << "num_classes = 3\nlayers = 4:3:2,4:3:2\ntotal_iters = 2\nbatch = 1\ntarget_blocks = 10\n"
           "embed_dim = 2\nposition_dim = 2\n";
  }
  CHECK(run_cli("train --config " + d + "/small.cfg --mode ecrf --data " + d + "/data --out " + d + "/m.ckpt") == 0);
  CHECK(run_cli("eval --ckpt " + d + "/m.ckpt --data " + d + "/data") == 0);
  CHECK(run_cli("train --config " + d + "/small.cfg --mode wobble --data " + d + "/data --out " + d + "/x.ckpt") ==
        2);
  CHECK(run_cli("eval --ckpt " + d + "/missing.ckpt --data " + d + "/data") == 3);
  {
    std::ofstream junk(dir / "junk.ckpt");
    junk << "not a checkpoint";
  }
  CHECK(run_cli("eval --ckpt " + d + "/junk.ckpt --data " + d + "/data") == 3);
  CHECK(run_cli("gradcheck --seeds 3") == 0);
  CHECK(run_cli("angles --sweep 5 --out " + d + "/angles") == 0);
  CHECK(std::filesystem::exists(dir / "angles.csv"));
}
