#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecrf/gradtheory.hpp"
#include "ecrf/gridcore.hpp"

namespace ecrf::metrics {

// counts[gt][pred]; kIgnoreLabel cells in gt are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(const LabelMap& pred, const LabelMap& gt);
  int num_classes() const { return n_; }
  std::int64_t operator()(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * n_ + pred]; }
  std::int64_t total() const;

  // NaN for classes absent from both maps.
  std::vector<double> iou() const;
  // Mean over classes with a nonzero union.
  double mean_iou() const;

 private:
  int n_;
  std::vector<std::int64_t> counts_;
};

struct IouResult {
  std::vector<double> per_class;
  double mean;
};

IouResult miou(const LabelMap& pred, const LabelMap& gt, int num_classes);

// Raw boundary match counts so several images can be pooled.
struct BoundaryCounts {
  std::int64_t pred_boundary = 0;
  std::int64_t pred_matched = 0;
  std::int64_t gt_boundary = 0;
  std::int64_t gt_matched = 0;

  BoundaryCounts& operator+=(const BoundaryCounts& o);
  double fscore() const;
};

// A cell is a boundary cell when a 4-neighbour carries a different label. A
// predicted boundary cell of class c counts as matched when a ground-truth
// boundary cell of class c lies within Chebyshev distance `tolerance`; recall
// is the same test with the roles swapped.
BoundaryCounts boundary_counts(const LabelMap& pred, const LabelMap& gt, int tolerance = 1);
double boundary_fscore(const LabelMap& pred, const LabelMap& gt, int tolerance = 1);

// Symmetric n x n count of 4-adjacent cell pairs with differing labels.
class AdjacencyCounts {
 public:
  explicit AdjacencyCounts(int num_classes);
  void add(const LabelMap& gt);
  int num_classes() const { return n_; }
  std::int64_t operator()(int a, int b) const { return counts_[static_cast<std::size_t>(a) * n_ + b]; }

 private:
  int n_;
  std::vector<std::int64_t> counts_;
};

AdjacencyCounts adjacency_counts(const LabelMap& gt, int num_classes);

struct BcwcRow {
  int class_a;
  int partner;
  std::int64_t count;
  double similarity;  // cosine(W_a, W_partner)
};

// One row per class with any adjacency: its most-adjacent partner (ties to the
// smaller id) and the cosine similarity of their weight columns. Sorted by
// count descending, then by class id.
std::vector<BcwcRow> bcwc_curve(const gradtheory::ClassifierWeights& w, const AdjacencyCounts& counts);

// Mean similarity over the first `top` rows.
double mean_top_similarity(const std::vector<BcwcRow>& curve, int top);

}  // namespace ecrf::metrics
