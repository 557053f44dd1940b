#pragma once

#include <string>
#include <vector>

#include "bipen/core.hpp"

namespace bipen {

// A bilevel instance with enough closed-form structure to verify every other
// module against. nondifferentiable_points lists x values where psi is known
// to be nonsmooth (1-D problems only; for box_active the kinks form curves,
// documented at the problem definition).
struct TestProblem {
    std::string name;
    BilevelProblem base;
    std::vector<Vec> nondifferentiable_points;
    double default_rho = 0.0;  // 0.9 / (4 * l_g1)
};

// Known instances:
//   bilinear_ll    f = x^2 + y^2, g = x*y on [-1,1]^2; lower level loses
//                  uniqueness at x = 0 (negative control for regularity).
//   constrained_sc f = -y, g = (y-x)^2, X = [-2,2], Y = [-1,1]; psi is the
//                  piecewise profile {1, -x, -1} with kinks at x = +-1.
//   quad_sc        f = (||y||^2 + ||x||^2)/2, g = ||y - A x||^2/2 on R^2,
//                  strongly convex lower level, everything smooth.
//   pl_multisol    f = c'y + ||y||^2/2, g = (a'y - x)^2/2 on Y = R^2; the
//                  lower-level solution set is a line (error-bound regime,
//                  rank-deficient Hessian).
//   box_active     quad_sc objectives with Y = [-1,1]^2; the lower-level
//                  solution hits a face as x grows (active-set regime).
TestProblem make_problem(const std::string& name);

// Copy with all closed-form hooks removed, for exercising the generic paths.
BilevelProblem without_analytic_extras(BilevelProblem problem);

struct GridResult {
    double l_value = 0.0;
    std::vector<Vec> argmin_set;
};

// Brute-force reference for l(x, sigma) and the lower-level solution set:
// exhaustive evaluation of h_sigma(x, .) on a uniform grid over a bounded
// box domain (d_y <= 3), each near-minimal point refined by 20 projected
// descent steps and the results deduplicated.
GridResult grid_oracle(const BilevelProblem& problem, const Vec& x, double sigma,
                       double resolution);

}  // namespace bipen
