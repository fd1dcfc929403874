#pragma once

#include <ostream>
#include <vector>

#include "ecrf/gradtheory.hpp"
#include "ecrf/metrics.hpp"

namespace ecrf::cli {

void write_bcwc_csv(std::ostream& out, const std::vector<metrics::BcwcRow>& curve);
// Similarity per adjacency rank, one polyline per curve.
void write_bcwc_svg(std::ostream& out, const std::vector<std::vector<metrics::BcwcRow>>& curves,
                    const std::vector<std::string>& labels);

struct AngleRow {
  std::string setup;
  gradtheory::AngleResult angles;
};

void write_angles_csv(std::ostream& out, const std::vector<AngleRow>& rows);
// Initial and updated class weights of one setup drawn as arrows in the plane
// spanned by W1 and W2.
void write_angles_svg(std::ostream& out, const gradtheory::AngleSetup& setup, const gradtheory::AngleResult& result);

}  // namespace ecrf::cli
