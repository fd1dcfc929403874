#include "ecrf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ecrf::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ParameterError("config: bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw ParameterError("config: bad boolean for " + key + ": '" + value + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<toynet::ConvSpec> parse_layers(const std::string& value) {
  std::vector<toynet::ConvSpec> layers;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto a = item.find(':'), b = item.rfind(':');
    if (a == std::string::npos || a == b) throw ParameterError("config: layer '" + item + "' is not C:K:S");
    layers.push_back({parse_number<int>("layers", item.substr(0, a)),
                      parse_number<int>("layers", item.substr(a + 1, b - a - 1)),
                      parse_number<int>("layers", item.substr(b + 1))});
  }
  if (layers.empty()) throw ParameterError("config: layers is empty");
  return layers;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["lr0"] = [](auto& c, auto& k, auto& v) { c.train.lr0 = parse_number<double>(k, v); };
    t["momentum"] = [](auto& c, auto& k, auto& v) { c.train.momentum = parse_number<double>(k, v); };
    t["weight_decay"] = [](auto& c, auto& k, auto& v) { c.train.weight_decay = parse_number<double>(k, v); };
    t["total_iters"] = [](auto& c, auto& k, auto& v) { c.train.total_iters = parse_number<int>(k, v); };
    t["poly_power"] = [](auto& c, auto& k, auto& v) { c.train.poly_power = parse_number<double>(k, v); };
    t["batch"] = [](auto& c, auto& k, auto& v) { c.train.batch = parse_number<int>(k, v); };
    t["seed"] = [](auto& c, auto& k, auto& v) { c.train.seed = parse_number<std::uint64_t>(k, v); };
    t["eval_every"] = [](auto& c, auto& k, auto& v) { c.train.eval_every = parse_number<int>(k, v); };
    t["mode"] = [](auto& c, auto&, auto& v) { c.model.mode = toynet::parse_mode(v); };
    t["num_classes"] = [](auto& c, auto& k, auto& v) { c.model.net.num_classes = parse_number<int>(k, v); };
    t["layers"] = [](auto& c, auto&, auto& v) { c.model.net.layers = parse_layers(v); };
    t["use_pairwise"] = [](auto& c, auto& k, auto& v) { c.model.ecrf.use_pairwise = parse_bool(k, v); };
    t["use_superpixel"] = [](auto& c, auto& k, auto& v) { c.model.ecrf.use_superpixel = parse_bool(k, v); };
    t["embed_dim"] = [](auto& c, auto& k, auto& v) { c.model.ecrf.embed_dim = parse_number<int>(k, v); };
    t["position_dim"] = [](auto& c, auto& k, auto& v) { c.model.ecrf.position_dim = parse_number<int>(k, v); };
    t["window_radius"] = [](auto& c, auto& k, auto& v) {
      if (v == "all") {
        c.model.ecrf.window_radius.reset();
      } else {
        c.model.ecrf.window_radius = parse_number<int>(k, v);
      }
    };
    t["position_base"] = [](auto& c, auto& k, auto& v) { c.model.ecrf.position_base = parse_number<double>(k, v); };
    t["embed_gain"] = [](auto& c, auto& k, auto& v) { c.model.ecrf.embed_gain = parse_number<double>(k, v); };
    t["joint_radius"] = [](auto& c, auto& k, auto& v) { c.model.joint.radius = parse_number<int>(k, v); };
    t["w1"] = [](auto& c, auto& k, auto& v) { c.model.joint.kernel.w1 = parse_number<double>(k, v); };
    t["w2"] = [](auto& c, auto& k, auto& v) { c.model.joint.kernel.w2 = parse_number<double>(k, v); };
    t["theta_alpha"] = [](auto& c, auto& k, auto& v) { c.model.joint.kernel.theta_alpha = parse_number<double>(k, v); };
    t["theta_beta"] = [](auto& c, auto& k, auto& v) { c.model.joint.kernel.theta_beta = parse_number<double>(k, v); };
    t["theta_gamma"] = [](auto& c, auto& k, auto& v) { c.model.joint.kernel.theta_gamma = parse_number<double>(k, v); };
    t["target_blocks"] = [](auto& c, auto& k, auto& v) { c.slic.target_blocks = parse_number<int>(k, v); };
    t["compactness"] = [](auto& c, auto& k, auto& v) { c.slic.compactness = parse_number<double>(k, v); };
    t["iterations"] = [](auto& c, auto& k, auto& v) { c.slic.iterations = parse_number<int>(k, v); };
    t["min_block_fraction"] = [](auto& c, auto& k, auto& v) {
      c.slic.min_block_fraction = parse_number<double>(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void ConfigMap::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

const std::string* ConfigMap::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::string ConfigMap::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line " + std::to_string(number) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError("config line " + std::to_string(number) + ": empty key");
    map.set(std::move(key), trim(line.substr(eq + 1)));
  }
  return map;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_config(const ConfigMap& map, ExperimentConfig& config) {
  for (const auto& [key, value] : map.entries()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ParameterError("config: unknown key '" + key + "'");
    it->second(config, key, value);
  }
}

ConfigMap describe(const ExperimentConfig& c) {
  ConfigMap m;
  m.set("mode", std::string(toynet::mode_name(c.model.mode)));
  m.set("num_classes", std::to_string(c.model.net.num_classes));
  std::string layers;
  for (const auto& l : c.model.net.layers) {
    if (!layers.empty()) layers += ",";
    layers += std::to_string(l.channels) + ":" + std::to_string(l.kernel) + ":" + std::to_string(l.stride);
  }
  m.set("layers", layers);
  m.set("use_pairwise", c.model.ecrf.use_pairwise ? "1" : "0");
  m.set("use_superpixel", c.model.ecrf.use_superpixel ? "1" : "0");
  m.set("embed_dim", std::to_string(c.model.ecrf.embed_dim));
  m.set("position_dim", std::to_string(c.model.ecrf.position_dim));
  m.set("window_radius", c.model.ecrf.window_radius ? std::to_string(*c.model.ecrf.window_radius) : "all");
  m.set("position_base", fmt(c.model.ecrf.position_base));
  m.set("embed_gain", fmt(c.model.ecrf.embed_gain));
  m.set("joint_radius", std::to_string(c.model.joint.radius));
  m.set("w1", fmt(c.model.joint.kernel.w1));
  m.set("w2", fmt(c.model.joint.kernel.w2));
  m.set("theta_alpha", fmt(c.model.joint.kernel.theta_alpha));
  m.set("theta_beta", fmt(c.model.joint.kernel.theta_beta));
  m.set("theta_gamma", fmt(c.model.joint.kernel.theta_gamma));
  m.set("lr0", fmt(c.train.lr0));
  m.set("momentum", fmt(c.train.momentum));
  m.set("weight_decay", fmt(c.train.weight_decay));
  m.set("total_iters", std::to_string(c.train.total_iters));
  m.set("poly_power", fmt(c.train.poly_power));
  m.set("batch", std::to_string(c.train.batch));
  m.set("seed", std::to_string(c.train.seed));
  m.set("eval_every", std::to_string(c.train.eval_every));
  m.set("target_blocks", std::to_string(c.slic.target_blocks));
  m.set("compactness", fmt(c.slic.compactness));
  m.set("iterations", std::to_string(c.slic.iterations));
  m.set("min_block_fraction", fmt(c.slic.min_block_fraction));
  return m;
}

}  // namespace ecrf::cli
