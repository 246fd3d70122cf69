#pragma once

#include <cstdint>
#include <string>

#include "crffuse/fusion.hpp"

namespace crffuse {

// One randomized instance: random image, random positive side outputs and
// ground truth, betas away from the projection boundary. Analytic gradients
// of the square loss are compared against central finite differences for
// every beta entry and every side-output pixel.
struct GradCheckCase {
  ModelKind model = ModelKind::kUnified;
  StructureKind structure = StructureKind::kBottomUp;
  int width = 8;
  int height = 8;
  int levels = 3;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  int checks = 0;
  double worst_rel_error = 0.0;
  std::string worst_label;
};

// Relative error uses max(|analytic|, |numeric|, 1e-12) as denominator.
GradCheckReport run_gradcheck(const GradCheckCase& c, double step = 1e-4);

}  // namespace crffuse
