#include "ecrf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ecrf::metrics {
namespace {

void require_same_shape(const LabelMap& a, const LabelMap& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("metrics: prediction and ground truth differ in shape");
  }
}

std::vector<std::uint8_t> boundary_mask(const LabelMap& m) {
  const int h = m.height(), w = m.width();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int32_t id = m(y, x);
      const bool edge = (y > 0 && m(y - 1, x) != id) || (y + 1 < h && m(y + 1, x) != id) ||
                        (x > 0 && m(y, x - 1) != id) || (x + 1 < w && m(y, x + 1) != id);
      mask[static_cast<std::size_t>(y) * w + x] = edge ? 1 : 0;
    }
  }
  return mask;
}

// Counts boundary cells of `a` and how many have a same-class boundary cell of
// `b` within the tolerance window.
std::pair<std::int64_t, std::int64_t> match(const LabelMap& a, const std::vector<std::uint8_t>& mask_a,
                                            const LabelMap& b, const std::vector<std::uint8_t>& mask_b,
                                            int tolerance) {
  const int h = a.height(), w = a.width();
  std::int64_t total = 0, matched = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask_a[static_cast<std::size_t>(y) * w + x] || a(y, x) == kIgnoreLabel) continue;
      ++total;
      const std::int32_t id = a(y, x);
      bool found = false;
      for (int yy = std::max(0, y - tolerance); yy <= std::min(h - 1, y + tolerance) && !found; ++yy) {
        for (int xx = std::max(0, x - tolerance); xx <= std::min(w - 1, x + tolerance); ++xx) {
          if (mask_b[static_cast<std::size_t>(yy) * w + xx] && b(yy, xx) == id) {
            found = true;
            break;
          }
        }
      }
      if (found) ++matched;
    }
  }
  return {total, matched};
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int num_classes) : n_(num_classes) {
  if (num_classes < 1) throw ParameterError("ConfusionMatrix: need at least one class");
  counts_.assign(static_cast<std::size_t>(n_) * n_, 0);
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt) {
  require_same_shape(pred, gt);
  gt.validate(n_);
  pred.validate(n_);
  for (std::size_t k = 0; k < gt.labels().size(); ++k) {
    const std::int32_t g = gt.labels()[k], p = pred.labels()[k];
    if (g == kIgnoreLabel || p == kIgnoreLabel) continue;
    ++counts_[static_cast<std::size_t>(g) * n_ + p];
  }
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::vector<double> ConfusionMatrix::iou() const {
  std::vector<double> out(n_);
  for (int c = 0; c < n_; ++c) {
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < n_; ++k) {
      row += (*this)(c, k);
      col += (*this)(k, c);
    }
    const std::int64_t inter = (*this)(c, c);
    const std::int64_t uni = row + col - inter;
    out[c] = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni)
                     : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double ConfusionMatrix::mean_iou() const {
  double sum = 0.0;
  int count = 0;
  for (double v : iou()) {
    if (std::isnan(v)) continue;
    sum += v;
    ++count;
  }
  return count > 0 ? sum / count : 0.0;
}

IouResult miou(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt);
  return {cm.iou(), cm.mean_iou()};
}

BoundaryCounts& BoundaryCounts::operator+=(const BoundaryCounts& o) {
  pred_boundary += o.pred_boundary;
  pred_matched += o.pred_matched;
  gt_boundary += o.gt_boundary;
  gt_matched += o.gt_matched;
  return *this;
}

double BoundaryCounts::fscore() const {
  if (pred_boundary == 0 && gt_boundary == 0) return 1.0;
  const double precision = pred_boundary > 0 ? static_cast<double>(pred_matched) / pred_boundary : 0.0;
  const double recall = gt_boundary > 0 ? static_cast<double>(gt_matched) / gt_boundary : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

BoundaryCounts boundary_counts(const LabelMap& pred, const LabelMap& gt, int tolerance) {
  require_same_shape(pred, gt);
  if (tolerance < 0) throw ParameterError("boundary_fscore: negative tolerance");
  const auto pred_mask = boundary_mask(pred);
  const auto gt_mask = boundary_mask(gt);
  BoundaryCounts out;
  std::tie(out.pred_boundary, out.pred_matched) = match(pred, pred_mask, gt, gt_mask, tolerance);
  std::tie(out.gt_boundary, out.gt_matched) = match(gt, gt_mask, pred, pred_mask, tolerance);
  return out;
}

double boundary_fscore(const LabelMap& pred, const LabelMap& gt, int tolerance) {
  return boundary_counts(pred, gt, tolerance).fscore();
}

AdjacencyCounts::AdjacencyCounts(int num_classes) : n_(num_classes) {
  if (num_classes < 1) throw ParameterError("AdjacencyCounts: need at least one class");
  counts_.assign(static_cast<std::size_t>(n_) * n_, 0);
}

void AdjacencyCounts::add(const LabelMap& gt) {
  gt.validate(n_);
  auto bump = [&](std::int32_t a, std::int32_t b) {
    if (a == b || a == kIgnoreLabel || b == kIgnoreLabel) return;
    ++counts_[static_cast<std::size_t>(a) * n_ + b];
    ++counts_[static_cast<std::size_t>(b) * n_ + a];
  };
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (x + 1 < gt.width()) bump(gt(y, x), gt(y, x + 1));
      if (y + 1 < gt.height()) bump(gt(y, x), gt(y + 1, x));
    }
  }
}

AdjacencyCounts adjacency_counts(const LabelMap& gt, int num_classes) {
  AdjacencyCounts counts(num_classes);
  counts.add(gt);
  return counts;
}

std::vector<BcwcRow> bcwc_curve(const gradtheory::ClassifierWeights& w, const AdjacencyCounts& counts) {
  if (w.num_classes() != counts.num_classes()) throw DimensionError("bcwc_curve: class count mismatch");
  std::vector<BcwcRow> rows;
  for (int a = 0; a < counts.num_classes(); ++a) {
    int partner = -1;
    std::int64_t best = 0;
    for (int b = 0; b < counts.num_classes(); ++b) {
      if (b != a && counts(a, b) > best) {
        best = counts(a, b);
        partner = b;
      }
    }
    if (partner < 0) continue;
    rows.push_back({a, partner, best, gradtheory::cosine(w.column(a), w.column(partner))});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const BcwcRow& l, const BcwcRow& r) { return l.count > r.count; });
  return rows;
}

double mean_top_similarity(const std::vector<BcwcRow>& curve, int top) {
  const int k = std::min<int>(top, static_cast<int>(curve.size()));
  if (k <= 0) return 0.0;
  double sum = 0.0;
  for (int r = 0; r < k; ++r) sum += curve[r].similarity;
  return sum / k;
}

}  // namespace ecrf::metrics
