#include "bipen/prox.hpp"

#include <cmath>

namespace bipen {

void validate_prox_spec(const BilevelProblem& problem, const ProxSpec& spec) {
    if (!(spec.rho > 0.0)) throw std::invalid_argument("prox: rho must be > 0");
    if (spec.sigma < 0.0) throw std::invalid_argument("prox: sigma must be >= 0");
    if (spec.inner_steps < 1) throw std::invalid_argument("prox: inner_steps must be >= 1");
    if (!(spec.inner_step_size > 0.0))
        throw std::invalid_argument("prox: inner_step_size must be > 0");
    if (spec.tolerance < 0.0) throw std::invalid_argument("prox: tolerance must be >= 0");
    if (spec.anchor.size() != problem.domain_y.dim())
        throw std::invalid_argument("prox: anchor dimension mismatch");
    if (spec.inner_step_size >= spec.rho)
        throw config_error("prox: step size must satisfy gamma < rho");
    const auto& c = problem.constants;
    if (c.l_g1 && spec.rho * *c.l_g1 >= 0.25)
        throw config_error("prox: rho * l_g1 must be < 1/4");
    if (c.l_g1 && c.l_f1 && spec.sigma * *c.l_f1 >= *c.l_g1)
        throw config_error("prox: sigma * l_f1 must be < l_g1");
}

namespace {

Vec prox_objective_grad(const BilevelProblem& problem, const Vec& x, const Vec& w,
                        const ProxSpec& spec, const OracleConfig* oracle,
                        const SeedPath* seed, long t) {
    if (oracle == nullptr || (oracle->noise_f == 0.0 && oracle->noise_g == 0.0)) {
        if (spec.sigma != 0.0) return problem.h_sigma_grad_y(x, w, spec.sigma);
        return problem.g_grad_y(x, w);
    }
    SeedPath path = *seed;
    path.t = seed->t + static_cast<uint32_t>(t);
    const Vec gg = sample_grad_g(problem, x, w, *oracle, path).grad_y;
    if (spec.sigma != 0.0)
        return spec.sigma * sample_grad_f(problem, x, w, *oracle, path).grad_y + gg;
    return gg;
}

}  // namespace

ProxResult prox_solve(const BilevelProblem& problem, const Vec& x, const ProxSpec& spec,
                      const Vec& start, const OracleConfig* oracle, const SeedPath* seed) {
    validate_prox_spec(problem, spec);
    if (x.size() != problem.domain_x.dim())
        throw std::invalid_argument("prox_solve: x dimension mismatch");
    if (!problem.domain_y.contains(start, 1e-8))
        throw std::invalid_argument("prox_solve: start not feasible");
    if (oracle != nullptr && seed == nullptr)
        throw std::invalid_argument("prox_solve: stochastic oracle needs a seed path");

    const double gamma = spec.inner_step_size;
    Vec w = start;
    long steps = 0;
    double residual = 0.0;
    while (steps < spec.inner_steps) {
        const Vec grad = prox_objective_grad(problem, x, w, spec, oracle, seed, steps);
        const Vec next = prox_step_expression(problem.domain_y, w, spec.anchor, gamma,
                                              spec.rho, grad);
        if (!next.allFinite())
            throw numerical_error("prox_solve: non-finite iterate", (w - next).norm());
        residual = (w - next).norm() / gamma;
        if (spec.tolerance > 0.0 && residual <= spec.tolerance) {
            // The residual certifies w itself, so w is the answer and the
            // probe step is discarded.
            return {std::move(w), residual, steps};
        }
        w = next;
        ++steps;
    }
    // Budget exhausted: certify the final point with one probe step.
    const Vec grad = prox_objective_grad(problem, x, w, spec, oracle, seed, steps);
    const Vec probe = prox_step_expression(problem.domain_y, w, spec.anchor, gamma, spec.rho,
                                           grad);
    residual = (w - probe).norm() / gamma;
    return {std::move(w), residual, steps};
}

double stable_inner_step(const BilevelProblem& problem, double rho, double sigma) {
    const auto& c = problem.constants;
    if (c.l_g1) {
        const double smooth = sigma * c.l_f1.value_or(0.0) + *c.l_g1 + 1.0 / rho;
        return 0.9 / smooth;  // 0.9 * rho / (1 + rho * L_h) < rho
    }
    return 0.5 * rho;
}

ProxResult prox_solve_high_accuracy(const BilevelProblem& problem, const Vec& x, double rho,
                                    double sigma, const Vec& anchor) {
    ProxSpec spec;
    spec.rho = rho;
    spec.sigma = sigma;
    spec.anchor = anchor;
    spec.inner_steps = 1000000;
    spec.inner_step_size = stable_inner_step(problem, rho, sigma);
    spec.tolerance = 1e-12;
    return prox_solve(problem, x, spec, project(problem.domain_y, anchor));
}

double envelope_value(const BilevelProblem& problem, const Vec& x, const ProxSpec& spec,
                      bool high_accuracy) {
    ProxResult r;
    if (high_accuracy) {
        r = prox_solve_high_accuracy(problem, x, spec.rho, spec.sigma, spec.anchor);
    } else {
        r = prox_solve(problem, x, spec, project(problem.domain_y, spec.anchor));
    }
    return problem.h_sigma(x, r.w, spec.sigma) +
           (r.w - spec.anchor).squaredNorm() / (2.0 * spec.rho);
}

GradSample envelope_gradient(const BilevelProblem& problem, const Vec& x,
                             const ProxSpec& spec) {
    const ProxResult r =
        prox_solve_high_accuracy(problem, x, spec.rho, spec.sigma, spec.anchor);
    return {problem.h_sigma_grad_x(x, r.w, spec.sigma), (spec.anchor - r.w) / spec.rho};
}

}  // namespace bipen
