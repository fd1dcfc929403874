#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ecrf::cli {

struct BenchRow {
  std::string op;
  int size = 0;  // grid side in cells
  double seconds = 0.0;
  double throughput = 0.0;  // cells per second
};

struct BenchOptions {
  int repeats = 3;  // best of
  int channels = 32;
  int classes = 8;
  int window_radius = 8;
  unsigned seed = 0;
};

// Times ecrf_forward (all pairs and window), ecrf_backward, mean_field_step
// and slic_segment on random size x size inputs.
std::vector<BenchRow> run_benchmark(const std::vector<int>& sizes, const BenchOptions& options = {});

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace ecrf::cli
