#include "ecrf/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace ecrf::cli {
namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void write_bcwc_csv(std::ostream& out, const std::vector<metrics::BcwcRow>& curve) {
  out << "rank,class,partner,adjacent_pairs,similarity\n";
  out.precision(10);
  for (std::size_t r = 0; r < curve.size(); ++r) {
    const auto& row = curve[r];
    out << r + 1 << ',' << row.class_a << ',' << row.partner << ',' << row.count << ',' << row.similarity << '\n';
  }
}

void write_bcwc_svg(std::ostream& out, const std::vector<std::vector<metrics::BcwcRow>>& curves,
                    const std::vector<std::string>& labels) {
  const double width = 480, height = 320, left = 50, right = 20, top = 20, bottom = 40;
  std::size_t ranks = 1;
  for (const auto& c : curves) ranks = std::max(ranks, c.size());
  auto px = [&](std::size_t r) { return left + (width - left - right) * (ranks == 1 ? 0.5 : double(r) / (ranks - 1)); };
  auto py = [&](double s) { return top + (height - top - bottom) * (1.0 - (std::clamp(s, -1.0, 1.0) + 1.0) / 2.0); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << width - right << "\" y2=\"" << py(0)
      << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  out << "<text x=\"" << left << "\" y=\"" << height - 10 << "\" font-size=\"12\">adjacency rank</text>\n";
  out << "<text x=\"4\" y=\"" << top + 10 << "\" font-size=\"12\">cos</text>\n";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t r = 0; r < curves[k].size(); ++r) out << num(px(r)) << ',' << num(py(curves[k][r].similarity)) << ' ';
    out << "\"/>\n";
    const std::string label = k < labels.size() ? labels[k] : "curve " + std::to_string(k);
    out << "<text x=\"" << width - right - 100 << "\" y=\"" << top + 14 * (k + 1) << "\" font-size=\"12\" fill=\""
        << color << "\">" << label << "</text>\n";
  }
  out << "</svg>\n";
}

void write_angles_csv(std::ostream& out, const std::vector<AngleRow>& rows) {
  out << "setup,initial,theta1_baseline,theta2_joint,theta3_ecrf\n";
  out.precision(12);
  for (const auto& r : rows) {
    out << r.setup << ',' << r.angles.initial << ',' << r.angles.baseline << ',' << r.angles.joint << ','
        << r.angles.ecrf << '\n';
  }
}

void write_angles_svg(std::ostream& out, const gradtheory::AngleSetup&, const gradtheory::AngleResult& result) {
  const double size = 320, cx = 40, cy = 280, len = 240;
  auto arrow = [&](double angle, const char* color, const std::string& label) {
    const double x = cx + len * std::cos(angle), y = cy - len * std::sin(angle);
    out << "<line x1=\"" << cx << "\" y1=\"" << cy << "\" x2=\"" << num(x) << "\" y2=\"" << num(y)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(x + 4) << "\" y=\"" << num(y) << "\" font-size=\"11\" fill=\"" << color << "\">"
        << label << "</text>\n";
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  arrow(0.0, "#000", "W2");
  arrow(result.initial, "#999", "W1");
  arrow(result.baseline, kPalette[0], "baseline");
  arrow(result.joint, kPalette[1], "joint");
  arrow(result.ecrf, kPalette[2], "ecrf");
  out << "</svg>\n";
}

}  // namespace ecrf::cli
