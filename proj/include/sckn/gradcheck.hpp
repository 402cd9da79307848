#pragma once

#include <cstdint>

#include "sckn/grad.hpp"

namespace sckn {

// Entrywise central-difference audit of the analytic gradients on a seeded
// 2-layer toy network (1x6x6 input, e=3, filters (4,8), subsampling
// (1, sqrt 2), eps = 1e-3, offset norms), run for both the squared hinge and
// the square loss. Errors are relative with a 1e-8 absolute floor.
struct GradcheckReport {
  double max_rel_z = 0.0;      // over every entry of every dZ_j, both losses
  double max_rel_alpha = 0.0;  // over dalpha_j, both losses
  double step = 1e-4;
  bool passed(double tol = 1e-3) const { return max_rel_z < tol && max_rel_alpha < tol; }
};

GradcheckReport run_gradcheck(uint64_t seed, double step = 1e-4);

}  // namespace sckn
