#include "bipen/landscape.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bipen/errors.hpp"
#include "bipen/oracles.hpp"
#include "bipen/testbed.hpp"

namespace bipen {

namespace {

constexpr double kPinvCutoff = 1e-8;
constexpr double kKktTol = 1e-6;
constexpr double kImageTol = 1e-6;
constexpr long kDescentCap = 200000;

// Fixed seed for the multi-start sampler so repeated evaluations at the same
// point produce bit-identical results.
constexpr uint64_t kStartSeed = 0x9E3779B97F4A7C15ull;

struct MinPoint {
    double value = std::numeric_limits<double>::infinity();
    Vec point;
    double residual = std::numeric_limits<double>::infinity();
};

Vec domain_center(const ConvexDomain& domain) {
    switch (domain.kind()) {
        case DomainKind::box:
            return 0.5 * (domain.box_lower() + domain.box_upper());
        case DomainKind::simplex:
            return Vec::Constant(domain.dim(), 1.0 / domain.dim());
        default:
            return project(domain, Vec::Zero(domain.dim()));
    }
}

std::vector<Vec> start_points(const ConvexDomain& domain) {
    std::vector<Vec> starts;
    starts.push_back(domain_center(domain));
    if (domain.kind() == DomainKind::box && domain.dim() <= 3) {
        const Vec lo = domain.box_lower();
        const Vec hi = domain.box_upper();
        const int corners = 1 << domain.dim();
        for (int c = 0; c < corners && starts.size() < 7; ++c) {
            Vec p(domain.dim());
            for (int i = 0; i < domain.dim(); ++i) p[i] = (c >> i) & 1 ? hi[i] : lo[i];
            starts.push_back(p);
        }
    }
    const double scale = domain.bounded() ? *domain.norm_bound() : 2.0;
    detail::CounterRng rng(kStartSeed, detail::tag_for(Stream::wy, 2), 0, 0);
    while (starts.size() < 8) {
        Vec p(domain.dim());
        for (int i = 0; i < domain.dim(); ++i) p[i] = scale * rng.normal();
        starts.push_back(project(domain, p));
    }
    return starts;
}

// Monotone projected descent from one start. Uses the declared smoothness
// constants for a fixed step when available, otherwise halves the step until
// the objective stops increasing.
MinPoint descend(const BilevelProblem& problem, const Vec& x, double sigma, const Vec& start,
                 double accuracy) {
    const auto& dom = problem.domain_y;
    const bool fixed_step =
        problem.constants.l_g1.has_value() && (sigma == 0.0 || problem.constants.l_f1.has_value());
    double gamma = fixed_step
                       ? 0.9 / (sigma * problem.constants.l_f1.value_or(0.0) + *problem.constants.l_g1)
                       : 1.0;
    Vec w = start;
    double value = problem.h_sigma(x, w, sigma);
    double residual = std::numeric_limits<double>::infinity();
    for (long step = 0; step < kDescentCap; ++step) {
        const Vec grad = problem.h_sigma_grad_y(x, w, sigma);
        Vec next = project(dom, w - gamma * grad);
        if (!next.allFinite()) throw numerical_error("projected descent produced a non-finite iterate");
        double next_value = problem.h_sigma(x, next, sigma);
        if (!fixed_step) {
            while (next_value > value && gamma > 1e-16) {
                gamma *= 0.5;
                next = project(dom, w - gamma * grad);
                next_value = problem.h_sigma(x, next, sigma);
            }
        }
        residual = (w - next).norm() / gamma;
        w = next;
        value = next_value;
        if (residual <= accuracy) break;
    }
    return {value, w, residual};
}

MinPoint multi_start_min(const BilevelProblem& problem, const Vec& x, double sigma,
                         double accuracy) {
    if (accuracy <= 0.0) throw std::invalid_argument("accuracy must be positive");
    if (sigma < 0.0) throw std::invalid_argument("sigma must be nonnegative");
    if (x.size() != problem.domain_x.dim()) throw std::invalid_argument("x dimension mismatch");
    MinPoint best;
    for (const Vec& start : start_points(problem.domain_y)) {
        MinPoint candidate = descend(problem, x, sigma, start, accuracy);
        if (candidate.value < best.value) best = candidate;
    }
    if (best.residual > accuracy)
        throw numerical_error("inner minimization missed the requested accuracy", best.residual);
    return best;
}

// Minimizers of the lower-level objective, preferring closed-form hooks.
std::vector<Vec> lower_solutions(const BilevelProblem& problem, const Vec& x, double sigma,
                                 double accuracy) {
    if (problem.extras.solution_points) return problem.extras.solution_points(x, sigma);
    return {multi_start_min(problem, x, sigma, accuracy).point};
}

Mat stacked_active_gradients(const std::vector<ScalarConstraint>& ineqs,
                             const std::vector<int>& active,
                             const std::vector<ScalarConstraint>& eqs, const Vec& y) {
    const long q = static_cast<long>(active.size() + eqs.size());
    Mat n(y.size(), q);
    long col = 0;
    for (int i : active) n.col(col++) = ineqs[static_cast<size_t>(i)].gradient(y);
    for (const auto& eq : eqs) n.col(col++) = eq.gradient(y);
    return n;  // columns are constraint gradients
}

}  // namespace

double min_h_sigma(const BilevelProblem& problem, const Vec& x, double sigma, double accuracy) {
    return multi_start_min(problem, x, sigma, accuracy).value;
}

double eval_psi_sigma(const BilevelProblem& problem, const Vec& x, double sigma,
                      double accuracy) {
    if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
    if (problem.extras.l_value)
        return (problem.extras.l_value(x, sigma) - problem.extras.l_value(x, 0.0)) / sigma;
    const double l_sigma = min_h_sigma(problem, x, sigma, accuracy);
    const double l_zero = min_h_sigma(problem, x, 0.0, accuracy);
    return (l_sigma - l_zero) / sigma;
}

double eval_psi(const BilevelProblem& problem, const Vec& x) {
    if (problem.extras.psi) return problem.extras.psi(x);
    if (problem.extras.solution_points) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec& y : problem.extras.solution_points(x, 0.0))
            best = std::min(best, problem.f(x, y));
        return best;
    }
    const double resolution = problem.domain_y.dim() == 1 ? 1e-3 : 1e-2;
    const GridResult grid = grid_oracle(problem, x, 0.0, resolution);
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& y : grid.argmin_set) best = std::min(best, problem.f(x, y));
    return best;
}

LagrangianSnapshot find_lagrangian_snapshot(const BilevelProblem& problem, const Vec& x,
                                            double sigma, const Vec& y_star,
                                            double active_tol) {
    if (active_tol <= 0.0) throw std::invalid_argument("active_tol must be positive");
    if (x.size() != problem.domain_x.dim() || y_star.size() != problem.domain_y.dim())
        throw std::invalid_argument("dimension mismatch");
    if (!problem.domain_y.contains(y_star, 1e-7))
        throw std::invalid_argument("y_star is not feasible");
    if (!problem.has_hessians())
        throw unsupported_error("problem does not provide second derivatives");

    const auto& ineqs = problem.domain_y.inequalities();
    const auto& eqs = problem.domain_y.equalities();

    LagrangianSnapshot snap;
    snap.y_star = y_star;
    for (size_t i = 0; i < ineqs.size(); ++i)
        if (ineqs[i].value(y_star) >= -active_tol) snap.active_set.push_back(static_cast<int>(i));

    const long d_y = y_star.size();
    const long q = static_cast<long>(snap.active_set.size() + eqs.size());
    const Vec grad = problem.h_sigma_grad_y(x, y_star, sigma);

    Mat n = stacked_active_gradients(ineqs, snap.active_set, eqs, y_star);
    Vec mu = Vec::Zero(q);
    double residual = grad.norm();
    if (q > 0) {
        mu = n.completeOrthogonalDecomposition().solve(-grad);
        residual = (grad + n * mu).norm();
    }
    if (residual > kKktTol)
        throw kkt_error("stationarity system at y_star is inconsistent", residual);
    snap.multipliers_ineq = mu.head(static_cast<long>(snap.active_set.size()));
    snap.multipliers_eq = mu.tail(static_cast<long>(eqs.size()));
    snap.strict_complementarity = (snap.multipliers_ineq.array() > active_tol).all();

    Mat hess = problem.h_sigma_hess_yy(x, y_star, sigma);
    long col = 0;
    for (int i : snap.active_set) {
        const auto& c = ineqs[static_cast<size_t>(i)];
        if (c.hessian) hess += mu[col] * c.hessian(y_star);
        ++col;
    }
    for (const auto& eq : eqs) {
        if (eq.hessian) hess += mu[col] * eq.hessian(y_star);
        ++col;
    }

    snap.lagrangian_hessian = Mat::Zero(q + d_y, q + d_y);
    snap.lagrangian_hessian.block(0, q, q, d_y) = n.transpose();
    snap.lagrangian_hessian.block(q, 0, d_y, q) = n;
    snap.lagrangian_hessian.block(q, q, d_y, d_y) = 0.5 * (hess + hess.transpose());

    if (q == 0) {
        snap.s_min = std::numeric_limits<double>::infinity();
    } else if (q > d_y) {
        snap.s_min = 0.0;  // more active gradients than dimensions, necessarily dependent
    } else {
        snap.s_min = n.jacobiSvd().singularValues().minCoeff();
    }
    return snap;
}

Vec implicit_gradient(const BilevelProblem& problem, const Vec& x, double sigma,
                      const LagrangianSnapshot& snapshot) {
    if (!problem.has_hessians())
        throw unsupported_error("problem does not provide second derivatives");
    const long d_y = snapshot.y_star.size();
    const Mat& m = snapshot.lagrangian_hessian;
    if (m.rows() != m.cols() || m.rows() < d_y)
        throw std::invalid_argument("snapshot Hessian has inconsistent shape");
    const long q = m.rows() - d_y;

    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    if (es.info() != Eigen::Success)
        throw numerical_error("eigendecomposition of the Lagrangian Hessian failed");
    const Vec vals = es.eigenvalues();
    const double cutoff = kPinvCutoff * vals.cwiseAbs().maxCoeff();

    Vec b = Vec::Zero(q + d_y);
    b.tail(d_y) = problem.f_grad_y(x, snapshot.y_star);
    Vec w = es.eigenvectors().transpose() * b;
    for (long i = 0; i < w.size(); ++i) w[i] = std::abs(vals[i]) > cutoff ? w[i] / vals[i] : 0.0;
    const Vec u = es.eigenvectors() * w;

    const Mat hess_xy = problem.h_sigma_hess_yx(x, snapshot.y_star, sigma).transpose();
    return problem.f_grad_x(x, snapshot.y_star) - hess_xy * u.tail(d_y);
}

Vec grad_psi_sigma_fd(const BilevelProblem& problem, const Vec& x, double sigma, double h) {
    if (h <= 0.0) throw std::invalid_argument("step must be positive");
    const auto& dom = problem.domain_x;
    Vec grad(x.size());
    std::optional<double> center;  // evaluated lazily, only one-sided stencils need it
    for (long i = 0; i < x.size(); ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const bool plus_ok = dom.contains(xp, 1e-12);
        const bool minus_ok = dom.contains(xm, 1e-12);
        if (plus_ok && minus_ok) {
            grad[i] = (eval_psi_sigma(problem, xp, sigma, 1e-12) -
                       eval_psi_sigma(problem, xm, sigma, 1e-12)) /
                      (2.0 * h);
            continue;
        }
        if (!plus_ok && !minus_ok)
            throw std::invalid_argument("finite-difference step exceeds the domain width");
        if (!center) center = eval_psi_sigma(problem, x, sigma, 1e-12);
        if (plus_ok)
            grad[i] = (eval_psi_sigma(problem, xp, sigma, 1e-12) - *center) / h;
        else
            grad[i] = (*center - eval_psi_sigma(problem, xm, sigma, 1e-12)) / h;
    }
    return grad;
}

ImageCheck image_condition_check(const BilevelProblem& problem, const Vec& x, double sigma,
                                 const LagrangianSnapshot& snapshot) {
    if (!problem.has_hessians())
        throw unsupported_error("problem does not provide second derivatives");
    const long d_y = snapshot.y_star.size();
    const Mat& m = snapshot.lagrangian_hessian;
    const long q = m.rows() - d_y;

    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    if (es.info() != Eigen::Success)
        throw numerical_error("eigendecomposition of the Lagrangian Hessian failed");
    const Vec vals = es.eigenvalues();
    const double cutoff = kPinvCutoff * vals.cwiseAbs().maxCoeff();
    Mat kept(m.rows(), 0);
    for (long i = 0; i < vals.size(); ++i) {
        if (std::abs(vals[i]) > cutoff) {
            kept.conservativeResize(Eigen::NoChange, kept.cols() + 1);
            kept.col(kept.cols() - 1) = es.eigenvectors().col(i);
        }
    }

    // Orthonormal basis of span(Im(hess_yx h_sigma), grad_y f).
    Mat span(d_y, x.size() + 1);
    span.leftCols(x.size()) = problem.h_sigma_hess_yx(x, snapshot.y_star, sigma);
    span.col(x.size()) = problem.f_grad_y(x, snapshot.y_star);
    Eigen::JacobiSVD<Mat> svd(span, Eigen::ComputeThinU);
    const double s_cut = 1e-12 * (svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0);

    ImageCheck check;
    check.worst_violation = 0.0;
    for (long i = 0; i < svd.singularValues().size(); ++i) {
        if (svd.singularValues()[i] <= s_cut) continue;
        Vec b = Vec::Zero(q + d_y);
        b.tail(d_y) = svd.matrixU().col(i);
        const double miss = (b - kept * (kept.transpose() * b)).norm();
        check.worst_violation = std::max(check.worst_violation, miss);
    }
    check.holds = check.worst_violation <= kImageTol;
    return check;
}

std::vector<EbProbe> eb_ratio(const BilevelProblem& problem, const Vec& x, double sigma,
                              const std::vector<Vec>& probes, double rho) {
    if (!problem.extras.project_solution_set)
        throw unsupported_error("problem does not expose a solution-set projection");
    if (rho <= 0.0) throw std::invalid_argument("rho must be positive");
    std::vector<EbProbe> out;
    out.reserve(probes.size());
    for (const Vec& y : probes) {
        if (!problem.domain_y.contains(y, 1e-8))
            throw std::invalid_argument("probe point is not feasible");
        const ProxResult prox = prox_solve_high_accuracy(problem, x, rho, sigma, y);
        EbProbe probe;
        probe.prox_residual = (y - prox.w).norm() / rho;
        probe.distance = (y - problem.extras.project_solution_set(x, sigma, y)).norm();
        probe.ratio = probe.distance > 0.0 ? probe.prox_residual / probe.distance
                                           : std::numeric_limits<double>::infinity();
        out.push_back(probe);
    }
    return out;
}

KktResiduals kkt_residuals_pcon(const BilevelProblem& problem, const Vec& x, const Vec& y,
                                double sigma, double rho) {
    if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
    if (rho <= 0.0) throw std::invalid_argument("rho must be positive");

    // A minimizer of the unpenalized lower objective, for the adjoint term.
    Vec z_star;
    if (problem.extras.project_solution_set) {
        z_star = problem.extras.project_solution_set(x, 0.0, y);
    } else if (problem.extras.solution_points) {
        z_star = problem.extras.solution_points(x, 0.0).front();
    } else {
        z_star = multi_start_min(problem, x, 0.0, 1e-10).point;
    }

    const double lambda_x = 1.0 / sigma;
    const Vec upper = problem.f_grad_x(x, y) +
                      lambda_x * (problem.g_grad_x(x, y) - problem.g_grad_x(x, z_star));
    const Vec lower = problem.f_grad_y(x, y) + lambda_x * problem.g_grad_y(x, y);

    KktResiduals res;
    res.upper_stationarity = normal_cone_residual(problem.domain_x, x, upper, rho);
    res.lower_stationarity = normal_cone_residual(problem.domain_y, y, lower, rho);
    const double l_zero = problem.extras.l_value ? problem.extras.l_value(x, 0.0)
                                                 : min_h_sigma(problem, x, 0.0, 1e-10);
    res.value_feasibility = problem.g(x, y) - l_zero;
    return res;
}

std::vector<Vec> implicit_gradient_all(const BilevelProblem& problem, const Vec& x,
                                       double sigma) {
    std::vector<Vec> grads;
    for (const Vec& y_star : lower_solutions(problem, x, sigma, 1e-10)) {
        const LagrangianSnapshot snap = find_lagrangian_snapshot(problem, x, sigma, y_star);
        grads.push_back(implicit_gradient(problem, x, sigma, snap));
    }
    return grads;
}

}  // namespace bipen
