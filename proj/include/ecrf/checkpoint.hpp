#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecrf/config.hpp"
#include "ecrf/network.hpp"

namespace ecrf::cli {

inline constexpr char kCheckpointMagic[5] = {'E', 'C', 'R', 'F', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<float> values;

  bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
  ConfigMap config;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

// Layout, all integers little-endian:
//   magic "ECRF1" | u32 version | u32 config bytes | config text |
//   u32 tensor count | per tensor: u16 name bytes, name, u32 rank, u32 dims,
//   f32 payload | u32 CRC-32 of everything before it.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
// FormatError on bad magic, truncation or checksum; VersionError on an
// unsupported version.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Tensors follow Model::parameters(); optimizer velocity is stored under
// "opt.<name>".
Checkpoint make_checkpoint(const ExperimentConfig& config, const toynet::Model<float>& model,
                           const toynet::Model<float>* velocity = nullptr);

// Rebuilds the experiment config from the echo and the model from the
// tensors. DimensionError when a tensor shape disagrees with the config.
ExperimentConfig checkpoint_config(const Checkpoint& checkpoint);
toynet::Model<float> restore_model(const Checkpoint& checkpoint);
std::optional<toynet::Model<float>> restore_velocity(const Checkpoint& checkpoint);

}  // namespace ecrf::cli
