#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "ecrf/png_io.hpp"
#include "ecrf/superpixel.hpp"

namespace ecrf::superpixel {
namespace {

// Labels 4-connected components of equal block id in scan order.
std::vector<int> label_components(const SuperpixelMap& map, int& count) {
  const int h = map.height, w = map.width;
  std::vector<int> comp(map.block_ids.size(), -1);
  count = 0;
  std::deque<int> queue;
  for (int start = 0; start < h * w; ++start) {
    if (comp[start] >= 0) continue;
    const std::int32_t id = map.block_ids[start];
    comp[start] = count;
    queue.push_back(start);
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      const int y = p / w, x = p % w;
      const int nbr[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& q : nbr) {
        if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
        const int qi = q[0] * w + q[1];
        if (comp[qi] < 0 && map.block_ids[qi] == id) {
          comp[qi] = count;
          queue.push_back(qi);
        }
      }
    }
    ++count;
  }
  return comp;
}

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
};

void validate_map(const SuperpixelMap& map) {
  if (map.height <= 0 || map.width <= 0 ||
      map.block_ids.size() != static_cast<std::size_t>(map.height) * map.width) {
    throw DimensionError("superpixel map: inconsistent dimensions");
  }
}

}  // namespace

SuperpixelMap enforce_connectivity(const SuperpixelMap& map, double min_block_fraction,
                                   std::optional<int> target_blocks) {
  validate_map(map);
  const int cells = map.cells();
  const int target = std::max(1, target_blocks.value_or(map.block_count));
  const double min_size = min_block_fraction * cells / target;

  int count = 0;
  const std::vector<int> comp = label_components(map, count);

  std::vector<int> size(count, 0);
  for (int c : comp) ++size[c];
  std::vector<std::set<int>> adjacent(count);
  for (int p = 0; p < cells; ++p) {
    const int y = p / map.width, x = p % map.width;
    if (x + 1 < map.width && comp[p] != comp[p + 1]) {
      adjacent[comp[p]].insert(comp[p + 1]);
      adjacent[comp[p + 1]].insert(comp[p]);
    }
    if (y + 1 < map.height && comp[p] != comp[p + map.width]) {
      adjacent[comp[p]].insert(comp[p + map.width]);
      adjacent[comp[p + map.width]].insert(comp[p]);
    }
  }

  DisjointSets sets(count);
  int alive = count;
  // Absorbs root `small` into its largest adjacent root (ties to the smaller id).
  auto absorb = [&](int small) {
    int best = -1;
    for (int nb : adjacent[small]) {
      if (best < 0 || size[nb] > size[best] || (size[nb] == size[best] && nb < best)) best = nb;
    }
    if (best < 0) return false;
    sets.parent[small] = best;
    size[best] += size[small];
    adjacent[small].erase(best);
    for (int nb : adjacent[small]) {
      adjacent[nb].erase(small);
      adjacent[nb].insert(best);
      adjacent[best].insert(nb);
    }
    adjacent[best].erase(small);
    adjacent[small].clear();
    --alive;
    return true;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (int c = 0; c < count; ++c) {
      if (sets.find(c) != c || size[c] >= min_size) continue;
      changed = absorb(c) || changed;
    }
  }
  while (alive > 2 * target) {
    int smallest = -1;
    for (int c = 0; c < count; ++c) {
      if (sets.find(c) != c || adjacent[c].empty()) continue;
      if (smallest < 0 || size[c] < size[smallest]) smallest = c;
    }
    if (smallest < 0 || !absorb(smallest)) break;
  }

  SuperpixelMap out{map.height, map.width, std::vector<std::int32_t>(cells), 0};
  std::map<int, std::int32_t> renumber;
  for (int p = 0; p < cells; ++p) {
    const int root = sets.find(comp[p]);
    auto [it, inserted] = renumber.try_emplace(root, static_cast<std::int32_t>(renumber.size()));
    out.block_ids[p] = it->second;
  }
  out.block_count = static_cast<int>(renumber.size());
  return out;
}

SuperpixelMap resample_nearest(const SuperpixelMap& map, int out_height, int out_width) {
  validate_map(map);
  if (out_height <= 0 || out_width <= 0) throw DimensionError("resample_nearest: empty target");
  SuperpixelMap out{out_height, out_width,
                    std::vector<std::int32_t>(static_cast<std::size_t>(out_height) * out_width),
                    map.block_count};
  for (int y = 0; y < out_height; ++y) {
    const int sy = std::min(map.height - 1, static_cast<int>((y + 0.5) * map.height / out_height));
    for (int x = 0; x < out_width; ++x) {
      const int sx = std::min(map.width - 1, static_cast<int>((x + 0.5) * map.width / out_width));
      out.block_ids[static_cast<std::size_t>(y) * out_width + x] = map.at(sy, sx);
    }
  }
  return out;
}

template <typename T>
std::vector<BlockStat> block_stats(const SuperpixelMap& map, const Tensor3<T>& features) {
  if (map.height != features.height() || map.width != features.width()) {
    throw DimensionError("block_stats: superpixel map and features differ in resolution");
  }
  const int c = features.channels();
  std::vector<BlockStat> stats(map.block_count, BlockStat{0, std::vector<double>(c, 0.0)});
  for (int i = 0; i < map.cells(); ++i) {
    BlockStat& s = stats.at(map.block_ids[i]);
    ++s.size;
    auto f = features.cell(i);
    for (int k = 0; k < c; ++k) s.mean[k] += f[k];
  }
  for (BlockStat& s : stats) {
    if (s.size == 0) continue;
    for (double& v : s.mean) v /= s.size;
  }
  return stats;
}

template std::vector<BlockStat> block_stats(const SuperpixelMap&, const Tensor3<float>&);
template std::vector<BlockStat> block_stats(const SuperpixelMap&, const Tensor3<double>&);

bool is_partition(const SuperpixelMap& map) {
  if (map.block_ids.size() != static_cast<std::size_t>(map.height) * map.width) return false;
  return std::all_of(map.block_ids.begin(), map.block_ids.end(),
                     [&](std::int32_t id) { return id >= 0 && id < map.block_count; });
}

bool is_four_connected(const SuperpixelMap& map) {
  int count = 0;
  const std::vector<int> comp = label_components(map, count);
  std::vector<int> owner(map.block_count, -1);
  for (std::size_t p = 0; p < comp.size(); ++p) {
    int& o = owner[map.block_ids[p]];
    if (o < 0) o = comp[p];
    if (o != comp[p]) return false;
  }
  return true;
}

void save_superpixel_map(const std::filesystem::path& path, const SuperpixelMap& map,
                         const SlicParams& params) {
  validate_map(map);
  if (map.block_count > 65536) throw ParameterError("superpixel map: too many blocks for 16-bit PNG");
  io::GrayImage g{map.height, map.width, 16, {}};
  g.values.reserve(map.block_ids.size());
  for (std::int32_t id : map.block_ids) g.values.push_back(static_cast<std::uint16_t>(id));
  io::write_png_gray(path, g);

  std::ofstream meta(path.string() + ".txt");
  if (!meta) throw IoError("cannot write " + path.string() + ".txt");
  meta << "block_count=" << map.block_count << '\n'
       << "target_blocks=" << params.target_blocks << '\n'
       << "compactness=" << params.compactness << '\n'
       << "iterations=" << params.iterations << '\n'
       << "min_block_fraction=" << params.min_block_fraction << '\n';
}

SuperpixelMap load_superpixel_map(const std::filesystem::path& path) {
  io::GrayImage g = io::read_png_gray(path);
  std::ifstream meta(path.string() + ".txt");
  if (!meta) throw IoError("missing superpixel header " + path.string() + ".txt");
  int block_count = -1;
  std::string line;
  while (std::getline(meta, line)) {
    if (line.rfind("block_count=", 0) == 0) block_count = std::stoi(line.substr(12));
  }
  if (block_count <= 0) throw FormatError("superpixel header lacks block_count: " + path.string());
  SuperpixelMap map{g.height, g.width, std::vector<std::int32_t>(g.values.begin(), g.values.end()),
                    block_count};
  if (!is_partition(map)) throw FormatError("superpixel ids out of range: " + path.string());
  return map;
}

}  // namespace ecrf::superpixel
