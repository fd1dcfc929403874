#include "ecrf/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "ecrf/config.hpp"
#include "ecrf/png_io.hpp"

namespace ecrf::cli {
namespace {

std::filesystem::path indexed(const std::filesystem::path& dir, const char* prefix, std::size_t k) {
  char name[32];
  std::snprintf(name, sizeof name, "%s_%04zu.png", prefix, k);
  return dir / name;
}

int header_int(const ConfigMap& header, const std::string& key, const std::filesystem::path& path) {
  const std::string* v = header.find(key);
  if (!v) throw FormatError(path.string() + ": missing key '" + key + "'");
  try {
    return std::stoi(*v);
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad value for '" + key + "'");
  }
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const std::vector<toynet::Sample>& samples,
                  const toynet::SynthConfig& config) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    io::write_png_rgb(indexed(dir, "img", k), quantize_image(samples[k].image));
    io::write_label_png(indexed(dir, "lbl", k), samples[k].labels);
  }
  ConfigMap header;
  header.set("count", std::to_string(samples.size()));
  header.set("size", std::to_string(config.size));
  header.set("classes", std::to_string(config.num_classes));
  header.set("seed", std::to_string(config.seed));
  header.set("texture_noise", std::to_string(config.texture_noise));
  header.set("shapes", std::to_string(config.min_shapes) + "-" + std::to_string(config.max_shapes));
  std::ofstream out(dir / "dataset.txt");
  out << header.to_text();
  if (!out) throw IoError("cannot write " + (dir / "dataset.txt").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto header_path = dir / "dataset.txt";
  if (!std::filesystem::exists(header_path)) throw FormatError("no dataset.txt in " + dir.string());
  const ConfigMap header = load_config_file(header_path);
  const int count = header_int(header, "count", header_path);
  Dataset data;
  data.num_classes = header_int(header, "classes", header_path);
  if (count < 1 || data.num_classes < 2) throw FormatError(header_path.string() + ": empty dataset");
  for (int k = 0; k < count; ++k) {
    const auto img_path = indexed(dir, "img", k), lbl_path = indexed(dir, "lbl", k);
    if (!std::filesystem::exists(img_path) || !std::filesystem::exists(lbl_path)) {
      throw FormatError("dataset entry " + std::to_string(k) + " missing in " + dir.string());
    }
    toynet::Sample s{normalize_image(io::read_png_rgb(img_path)), io::read_label_png(lbl_path)};
    if (s.labels.height() != s.image.height() || s.labels.width() != s.image.width()) {
      throw FormatError(lbl_path.string() + ": label map size differs from its image");
    }
    try {
      s.labels.validate(data.num_classes);
    } catch (const DimensionError& e) {
      throw FormatError(lbl_path.string() + ": " + e.what());
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

void save_superpixel_dir(const std::filesystem::path& dir, const std::vector<superpixel::SuperpixelMap>& maps,
                         const superpixel::SlicParams& params) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < maps.size(); ++k) superpixel::save_superpixel_map(indexed(dir, "sp", k), maps[k], params);
}

std::vector<superpixel::SuperpixelMap> load_superpixel_dir(const std::filesystem::path& dir, std::size_t count) {
  std::vector<superpixel::SuperpixelMap> maps;
  for (std::size_t k = 0; k < count; ++k) {
    const auto path = indexed(dir, "sp", k);
    if (!std::filesystem::exists(path)) throw FormatError("missing superpixel map " + path.string());
    maps.push_back(superpixel::load_superpixel_map(path));
  }
  return maps;
}

}  // namespace ecrf::cli
