#pragma once

#include "switchsynth/types.hpp"

namespace switchsynth {

// Phase-one simplex (dense tableau, Bland's rule): is {x >= 0 : A x = b} nonempty?
bool lp_feasible(const Mat& A, const Vec& b, double tol = 1e-10);

}  // namespace switchsynth
