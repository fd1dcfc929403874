#include "ecrf/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace ecrf::cli {
namespace {

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u16(std::uint16_t v) {
    for (int k = 0; k < 2; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > in_.size() - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint16_t u16() {
    auto s = take(2);
    return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
  }
  std::uint32_t u32() {
    auto s = take(4);
    return static_cast<std::uint32_t>(s[0]) | (static_cast<std::uint32_t>(s[1]) << 8) |
           (static_cast<std::uint32_t>(s[2]) << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::size_t element_count(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

template <typename Slot>
void fill_slots(const Checkpoint& ckpt, std::vector<Slot>& slots, const std::string& prefix) {
  for (auto& slot : slots) {
    const NamedTensor* t = ckpt.find(prefix + slot.name);
    if (!t) throw FormatError("checkpoint is missing tensor " + prefix + slot.name);
    if (t->dims != slot.dims) throw DimensionError("checkpoint tensor " + t->name + " has the wrong shape");
    std::copy(t->values.begin(), t->values.end(), slot.values.begin());
  }
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const std::string text = checkpoint.config.to_text();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& t : checkpoint.tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) throw ParameterError("tensor name too long");
    if (element_count(t.dims) != t.values.size()) {
      throw DimensionError("tensor " + t.name + " payload does not match its dims");
    }
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (int d : t.dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32(v);
  }
  w.u32(crc32_of(w.data()));
  return std::move(w.data());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof kCheckpointMagic ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  r.take(sizeof kCheckpointMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 4) throw FormatError("checkpoint truncated");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (crc32_of(body) != tail.u32()) throw FormatError("checkpoint checksum mismatch");

  Checkpoint ckpt;
  const std::uint32_t text_size = r.u32();
  const auto text = r.take(text_size);
  ckpt.config = parse_config_text(std::string(text.begin(), text.end()));
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto name = r.take(r.u16());
    t.name.assign(name.begin(), name.end());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("tensor " + t.name + " has rank " + std::to_string(rank));
    for (std::uint32_t d = 0; d < rank; ++d) t.dims.push_back(static_cast<int>(r.u32()));
    const std::size_t n = element_count(t.dims);
    if (n * 4 > r.remaining()) throw FormatError("checkpoint truncated in tensor " + t.name);
    t.values.resize(n);
    for (float& v : t.values) v = r.f32();
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 4) throw FormatError("trailing bytes after the tensor table");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const ExperimentConfig& config, const toynet::Model<float>& model,
                           const toynet::Model<float>* velocity) {
  Checkpoint ckpt;
  ExperimentConfig echo = config;
  echo.model = model.config;
  ckpt.config = describe(echo);
  for (const auto& slot : model.parameters()) {
    ckpt.tensors.push_back({slot.name, slot.dims, {slot.values.begin(), slot.values.end()}});
  }
  if (velocity) {
    for (const auto& slot : velocity->parameters()) {
      ckpt.tensors.push_back({"opt." + slot.name, slot.dims, {slot.values.begin(), slot.values.end()}});
    }
  }
  return ckpt;
}

ExperimentConfig checkpoint_config(const Checkpoint& checkpoint) {
  ExperimentConfig config;
  apply_config(checkpoint.config, config);
  return config;
}

toynet::Model<float> restore_model(const Checkpoint& checkpoint) {
  auto model = toynet::Model<float>::zeros(checkpoint_config(checkpoint).model);
  auto slots = model.parameters();
  fill_slots(checkpoint, slots, "");
  return model;
}

std::optional<toynet::Model<float>> restore_velocity(const Checkpoint& checkpoint) {
  auto velocity = toynet::Model<float>::zeros(checkpoint_config(checkpoint).model);
  auto slots = velocity.parameters();
  if (slots.empty() || !checkpoint.find("opt." + slots.front().name)) return std::nullopt;
  fill_slots(checkpoint, slots, "opt.");
  return velocity;
}

}  // namespace ecrf::cli
