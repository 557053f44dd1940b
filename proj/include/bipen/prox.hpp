#pragma once

#include "bipen/core.hpp"
#include "bipen/oracles.hpp"

namespace bipen {

// Parameters of one proximal subproblem
//   prox_{rho * h_sigma(x,.)}(anchor) = argmin_{w in Y} h_sigma(x,w) + ||w-anchor||^2/(2 rho).
struct ProxSpec {
    double rho = 0.0;
    double sigma = 0.0;
    Vec anchor;
    long inner_steps = 1;
    double inner_step_size = 0.0;
    double tolerance = 0.0;  // early-exit residual; 0 disables early exit
};

struct ProxResult {
    Vec w;
    double residual = 0.0;  // (1/gamma) * ||w - one further projected step||
    long steps_used = 0;
};

// One projected inner step on the proximal objective. Both solver algorithms
// and prox_solve route through this expression so that trajectories which are
// mathematically equal are also bitwise equal.
inline Vec prox_step_expression(const ConvexDomain& domain_y, const Vec& w, const Vec& anchor,
                                double gamma, double rho, const Vec& grad_y) {
    return project(domain_y, w - gamma * (grad_y + (w - anchor) / rho));
}

// Validates the proximal regime against declared constants: rho*l_g1 < 1/4
// (envelope smoothness regime) and sigma*l_f1 < l_g1 (penalty small enough
// that g's curvature dominates). Throws config_error outside the regime,
// std::invalid_argument for malformed fields.
void validate_prox_spec(const BilevelProblem& problem, const ProxSpec& spec);

// Projected gradient descent on the proximal objective, exactly the inner
// loop of the double-loop method. Optional stochastic oracle; inner step t
// seeds as (seed.stream, seed.k, seed.t + t).
ProxResult prox_solve(const BilevelProblem& problem, const Vec& x, const ProxSpec& spec,
                      const Vec& start, const OracleConfig* oracle = nullptr,
                      const SeedPath* seed = nullptr);

// Step size that keeps exact-gradient descent stable for this problem's
// declared constants (always < rho).
double stable_inner_step(const BilevelProblem& problem, double rho, double sigma);

// Diagnostic-accuracy prox: tolerance 1e-12, step budget 10^6, exact
// gradients. Never used inside solver iterations.
ProxResult prox_solve_high_accuracy(const BilevelProblem& problem, const Vec& x, double rho,
                                    double sigma, const Vec& anchor);

// Moreau envelope value h*_{sigma,rho}(x, anchor) evaluated at the prox
// output; high_accuracy switches to the diagnostic solve.
double envelope_value(const BilevelProblem& problem, const Vec& x, const ProxSpec& spec,
                      bool high_accuracy);

// Envelope gradient: grad_x = grad_x h_sigma(x, w*), grad_y = (anchor-w*)/rho
// with w* from the diagnostic-accuracy solve.
GradSample envelope_gradient(const BilevelProblem& problem, const Vec& x,
                             const ProxSpec& spec);

}  // namespace bipen
