#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "bipen/core.hpp"
#include "bipen/prox.hpp"

namespace bipen {

// KKT state of the lower-level problem min_{y in Y} h_sigma(x, y) at a
// candidate minimizer. lagrangian_hessian is the full second derivative of
// the restricted Lagrangian over the (lambda_I, nu, y) block order:
//
//   [ 0     0     G_I ]         G_I = stacked active inequality gradients
//   [ 0     0     E   ]         E   = stacked equality gradients
//   [ G_I'  E'    H   ]         H   = hess_yy of h_sigma + sum lambda_i
//                                     hess g_i + sum nu_j hess h_j
//
// s_min is the smallest singular value of [G_I; E] (+inf when no constraint
// is active), which is positive exactly when the active gradients are
// linearly independent.
struct LagrangianSnapshot {
    Vec y_star;
    std::vector<int> active_set;  // indices into domain_y.inequalities()
    Vec multipliers_ineq;         // aligned with active_set
    Vec multipliers_eq;
    Mat lagrangian_hessian;
    double s_min = std::numeric_limits<double>::infinity();
    bool strict_complementarity = true;
};

struct ImageCheck {
    bool holds = false;
    double worst_violation = 0.0;
};

struct EbProbe {
    double prox_residual = 0.0;
    double distance = 0.0;
    double ratio = 0.0;  // +inf sentinel when the probe sits on the solution set
};

// Residual groups of the constrained single-level reformulation at penalty
// multiplier 1/sigma: projected-gradient stationarity in x and y, and the
// lower-level value gap g(x,y) - min g(x,.).
struct KktResiduals {
    double upper_stationarity = 0.0;
    double lower_stationarity = 0.0;
    double value_feasibility = 0.0;
};

// One sweep record, as written by the landscape command. Absent entries stay
// empty (zero-size vectors / NaN-free optionals handled by the CLI layer).
struct LandscapeSample {
    Vec x;
    double sigma = 0.0;
    double psi_sigma = 0.0;
    std::optional<double> psi;
    std::optional<Vec> grad_fd;
    std::optional<Vec> grad_formula;
};

// Global lower-level minimum value min_{y in Y} h_sigma(x, y), via the
// closed-form hook when present, else multi-start projected descent (8
// deterministic starts) to the requested gradient-mapping accuracy. Throws
// numerical_error carrying the best residual when accuracy is not met.
double min_h_sigma(const BilevelProblem& problem, const Vec& x, double sigma,
                   double accuracy);

// Penalized hyper-objective (l(x, sigma) - l(x, 0)) / sigma. sigma must be
// positive; use eval_psi for the limit object.
double eval_psi_sigma(const BilevelProblem& problem, const Vec& x, double sigma,
                      double accuracy = 1e-10);

// Hyper-objective min_{y in S(x)} f(x, y), via the psi hook, the solution-set
// hook, or a grid sweep for bounded low-dimensional domains (in that order).
double eval_psi(const BilevelProblem& problem, const Vec& x);

// Active set, least-squares multipliers, restricted Lagrangian Hessian, and
// regularity indicators at a lower-level minimizer y_star (which must be
// optimal to roughly 1e-8; an inconsistent stationarity system raises
// kkt_error).
LagrangianSnapshot find_lagrangian_snapshot(const BilevelProblem& problem, const Vec& x,
                                            double sigma, const Vec& y_star,
                                            double active_tol = 1e-7);

// Implicit gradient of the penalized hyper-objective at a regular snapshot:
//   grad_x f(x, y*) - [0, hess_xy h_sigma] pinv(lagrangian_hessian) [0; grad_y f]
// with an eigenvalue-cutoff pseudo-inverse (|lambda| <= 1e-8 max|lambda|
// treated as zero).
Vec implicit_gradient(const BilevelProblem& problem, const Vec& x, double sigma,
                      const LagrangianSnapshot& snapshot);

// Central finite differences of eval_psi_sigma with inner accuracy 1e-12;
// falls back to one-sided differences at the boundary of X.
Vec grad_psi_sigma_fd(const BilevelProblem& problem, const Vec& x, double sigma, double h);

// Checks that span(Im(hess_yx h_sigma), grad_y f) is contained in the image
// of the restricted Lagrangian Hessian; the worst orthogonal component over
// an orthonormal basis of the span is reported, holds iff <= 1e-6.
ImageCheck image_condition_check(const BilevelProblem& problem, const Vec& x, double sigma,
                                 const LagrangianSnapshot& snapshot);

// Empirical proximal error-bound probes: scaled prox residual, distance to
// the solution set (via the projection hook), and their ratio.
std::vector<EbProbe> eb_ratio(const BilevelProblem& problem, const Vec& x, double sigma,
                              const std::vector<Vec>& probes, double rho);

KktResiduals kkt_residuals_pcon(const BilevelProblem& problem, const Vec& x, const Vec& y,
                                double sigma, double rho);

// Implicit gradient at every known lower-level minimizer; callers that need
// a single answer should check the results agree before using one.
std::vector<Vec> implicit_gradient_all(const BilevelProblem& problem, const Vec& x,
                                       double sigma);

}  // namespace bipen
