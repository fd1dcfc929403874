#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ecrf/network.hpp"
#include "ecrf/superpixel.hpp"
#include "ecrf/trainer.hpp"

namespace ecrf::cli {

// Ordered key=value pairs; later duplicates override earlier ones on lookup.
class ConfigMap {
 public:
  void set(std::string key, std::string value);
  const std::string* find(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_text() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Flat "key = value" lines; '#' starts a comment. FormatError names the line.
ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::filesystem::path& path);

struct ExperimentConfig {
  toynet::ModelConfig model;
  toynet::TrainConfig train;
  superpixel::SlicParams slic;
};

// Keys are field names: lr0, momentum, weight_decay, total_iters, poly_power,
// batch, seed, eval_every, mode, num_classes, layers ("16:3:2,32:3:2"),
// use_pairwise, use_superpixel, embed_dim, position_dim, window_radius
// ("all" or a radius), position_base, embed_gain, joint_radius, w1, w2, theta_alpha,
// theta_beta, theta_gamma, target_blocks, compactness, iterations,
// min_block_fraction. Unknown keys and bad values raise ParameterError.
void apply_config(const ConfigMap& map, ExperimentConfig& config);
ConfigMap describe(const ExperimentConfig& config);

}  // namespace ecrf::cli
