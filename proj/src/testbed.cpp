#include "bipen/testbed.hpp"

#include <cmath>

namespace bipen {

namespace {

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

Vec scalar_vec(double v) {
    Vec out(1);
    out(0) = v;
    return out;
}

Mat scalar_mat(double v) {
    Mat out(1, 1);
    out(0, 0) = v;
    return out;
}

// f = x^2 + y^2, g = x*y on [-1,1]^2. The lower level is linear in y at
// sigma = 0, so its solution set collapses from [-1,1] (x = 0) to a single
// endpoint (x != 0); psi jumps at x = 0. Kept as the negative control for
// every regularity diagnostic.
TestProblem make_bilinear_ll() {
    TestProblem tp;
    tp.name = "bilinear_ll";
    BilevelProblem& p = tp.base;
    p.domain_x = ConvexDomain::box(scalar_vec(-1.0), scalar_vec(1.0));
    p.domain_y = ConvexDomain::box(scalar_vec(-1.0), scalar_vec(1.0));
    p.f = [](const Vec& x, const Vec& y) { return x(0) * x(0) + y(0) * y(0); };
    p.g = [](const Vec& x, const Vec& y) { return x(0) * y(0); };
    p.f_grad_x = [](const Vec& x, const Vec&) { return scalar_vec(2.0 * x(0)); };
    p.f_grad_y = [](const Vec&, const Vec& y) { return scalar_vec(2.0 * y(0)); };
    p.g_grad_x = [](const Vec&, const Vec& y) { return scalar_vec(y(0)); };
    p.g_grad_y = [](const Vec& x, const Vec&) { return scalar_vec(x(0)); };
    p.f_hess_yy = [](const Vec&, const Vec&) { return scalar_mat(2.0); };
    p.f_hess_yx = [](const Vec&, const Vec&) { return scalar_mat(0.0); };
    p.g_hess_yy = [](const Vec&, const Vec&) { return scalar_mat(0.0); };
    p.g_hess_yx = [](const Vec&, const Vec&) { return scalar_mat(1.0); };
    p.constants = {2.0, 2.0, 1.0, 2.0};

    // argmin_y sigma*(x^2 + y^2) + x*y: unconstrained stationary point
    // -x/(2 sigma), clamped; at sigma = 0 the minimum of x*y sits at the
    // endpoint opposing the sign of x, or everywhere when x = 0.
    auto best = [](double x, double sigma) { return clamp(-x / (2.0 * sigma), -1.0, 1.0); };
    p.extras.l_value = [best](const Vec& xv, double sigma) {
        const double x = xv(0);
        if (sigma > 0.0) {
            const double y = best(x, sigma);
            return sigma * (x * x + y * y) + x * y;
        }
        return -std::abs(x);
    };
    p.extras.solution_points = [best](const Vec& xv, double sigma) {
        const double x = xv(0);
        std::vector<Vec> pts;
        if (sigma > 0.0) {
            pts.push_back(scalar_vec(best(x, sigma)));
        } else if (x > 0.0) {
            pts.push_back(scalar_vec(-1.0));
        } else if (x < 0.0) {
            pts.push_back(scalar_vec(1.0));
        } else {
            pts.push_back(scalar_vec(-1.0));
            pts.push_back(scalar_vec(0.0));
            pts.push_back(scalar_vec(1.0));
        }
        return pts;
    };
    p.extras.project_solution_set = [best](const Vec& xv, double sigma, const Vec& y) {
        const double x = xv(0);
        if (sigma > 0.0) return scalar_vec(best(x, sigma));
        if (x > 0.0) return scalar_vec(-1.0);
        if (x < 0.0) return scalar_vec(1.0);
        return scalar_vec(clamp(y(0), -1.0, 1.0));
    };
    p.extras.psi = [](const Vec& xv) {
        const double x = xv(0);
        return x == 0.0 ? 0.0 : x * x + 1.0;
    };
    // psi is discontinuous at 0, so no grad_psi hook and no error-bound
    // constants: this instance exists to fail the regularity checks.
    tp.nondifferentiable_points.push_back(scalar_vec(0.0));
    tp.default_rho = 0.9 / (4.0 * 1.0);
    return tp;
}

// f = -y, g = (y-x)^2, X = [-2,2], Y = [-1,1]. Strongly convex lower level
// with an active bound for |x| > 1 - sigma/2; psi = {1, -x, -1} with kinks
// at x = +-1.
TestProblem make_constrained_sc() {
    TestProblem tp;
    tp.name = "constrained_sc";
    BilevelProblem& p = tp.base;
    p.domain_x = ConvexDomain::box(scalar_vec(-2.0), scalar_vec(2.0));
    p.domain_y = ConvexDomain::box(scalar_vec(-1.0), scalar_vec(1.0));
    p.f = [](const Vec&, const Vec& y) { return -y(0); };
    p.g = [](const Vec& x, const Vec& y) { return (y(0) - x(0)) * (y(0) - x(0)); };
    p.f_grad_x = [](const Vec&, const Vec&) { return scalar_vec(0.0); };
    p.f_grad_y = [](const Vec&, const Vec&) { return scalar_vec(-1.0); };
    p.g_grad_x = [](const Vec& x, const Vec& y) { return scalar_vec(-2.0 * (y(0) - x(0))); };
    p.g_grad_y = [](const Vec& x, const Vec& y) { return scalar_vec(2.0 * (y(0) - x(0))); };
    p.f_hess_yy = [](const Vec&, const Vec&) { return scalar_mat(0.0); };
    p.f_hess_yx = [](const Vec&, const Vec&) { return scalar_mat(0.0); };
    p.g_hess_yy = [](const Vec&, const Vec&) { return scalar_mat(2.0); };
    p.g_hess_yx = [](const Vec&, const Vec&) { return scalar_mat(-2.0); };
    p.constants = {1.0, 0.0, 4.0, 1.0};

    auto best = [](double x, double sigma) { return clamp(x + sigma / 2.0, -1.0, 1.0); };
    p.extras.l_value = [best, f = p.f, g = p.g](const Vec& xv, double sigma) {
        const Vec y = scalar_vec(best(xv(0), sigma));
        return sigma * f(xv, y) + g(xv, y);
    };
    p.extras.solution_points = [best](const Vec& xv, double sigma) {
        return std::vector<Vec>{scalar_vec(best(xv(0), sigma))};
    };
    p.extras.project_solution_set = [best](const Vec& xv, double sigma, const Vec&) {
        return scalar_vec(best(xv(0), sigma));
    };
    p.extras.psi = [](const Vec& xv) { return -clamp(xv(0), -1.0, 1.0); };
    // Kink convention: report the interior slope -1 only strictly inside.
    p.extras.grad_psi = [](const Vec& xv) {
        return scalar_vec(std::abs(xv(0)) < 1.0 ? -1.0 : 0.0);
    };
    p.extras.mu = 1.0;
    p.extras.delta = 1.0;
    tp.nondifferentiable_points.push_back(scalar_vec(-1.0));
    tp.nondifferentiable_points.push_back(scalar_vec(1.0));
    tp.default_rho = 0.9 / (4.0 * 4.0);
    return tp;
}

Mat quad_matrix() {
    Mat A(2, 2);
    A << 1.0, 0.5, 0.0, 1.0;
    return A;
}

void install_quad_objectives(BilevelProblem& p, const Mat& A) {
    p.f = [](const Vec& x, const Vec& y) {
        return 0.5 * y.squaredNorm() + 0.5 * x.squaredNorm();
    };
    p.g = [A](const Vec& x, const Vec& y) { return 0.5 * (y - A * x).squaredNorm(); };
    p.f_grad_x = [](const Vec& x, const Vec&) { return x; };
    p.f_grad_y = [](const Vec&, const Vec& y) { return y; };
    p.g_grad_x = [A](const Vec& x, const Vec& y) { return Vec(-A.transpose() * (y - A * x)); };
    p.g_grad_y = [A](const Vec& x, const Vec& y) { return Vec(y - A * x); };
    p.f_hess_yy = [](const Vec&, const Vec&) { return Mat(Mat::Identity(2, 2)); };
    p.f_hess_yx = [](const Vec&, const Vec&) { return Mat(Mat::Zero(2, 2)); };
    p.g_hess_yy = [](const Vec&, const Vec&) { return Mat(Mat::Identity(2, 2)); };
    p.g_hess_yx = [A](const Vec&, const Vec&) { return Mat(-A); };
}

// f = (||y||^2 + ||x||^2)/2, g = ||y - A x||^2/2 on R^2 x R^2. Unique lower
// solution A x/(1+sigma); psi = (||x||^2 + ||A x||^2)/2. l_f0 and C_f are
// regional bounds for the ||x||, ||y|| <= 4 region all experiments stay in.
TestProblem make_quad_sc() {
    TestProblem tp;
    tp.name = "quad_sc";
    BilevelProblem& p = tp.base;
    const Mat A = quad_matrix();
    p.domain_x = ConvexDomain::full_space(2);
    p.domain_y = ConvexDomain::full_space(2);
    install_quad_objectives(p, A);
    p.constants = {4.0, 1.0, 2.65, 4.0};

    p.extras.l_value = [A, f = p.f, g = p.g](const Vec& x, double sigma) {
        const Vec y = A * x / (1.0 + sigma);
        return sigma * f(x, y) + g(x, y);
    };
    p.extras.solution_points = [A](const Vec& x, double sigma) {
        return std::vector<Vec>{Vec(A * x / (1.0 + sigma))};
    };
    p.extras.project_solution_set = [A](const Vec& x, double sigma, const Vec&) {
        return Vec(A * x / (1.0 + sigma));
    };
    p.extras.psi = [A](const Vec& x) {
        return 0.5 * x.squaredNorm() + 0.5 * (A * x).squaredNorm();
    };
    p.extras.grad_psi = [A](const Vec& x) { return Vec(x + A.transpose() * (A * x)); };
    p.extras.mu = 0.5;
    p.extras.delta = 1.0;
    tp.default_rho = 0.9 / (4.0 * 2.65);
    return tp;
}

// f = c'y + ||y||^2/2 with c = (0,1), g = (a'y - x)^2/2 with a = (1,0) on
// Y = R^2, X = R. At sigma = 0 the solution set is the whole line y_1 = x
// (rank-one Hessian a a'), on which f picks y = (x,-1); for sigma > 0 the
// penalty breaks the tie toward (x/(1+sigma), -1). psi = x^2/2 - 1/2.
TestProblem make_pl_multisol() {
    TestProblem tp;
    tp.name = "pl_multisol";
    BilevelProblem& p = tp.base;
    p.domain_x = ConvexDomain::full_space(1);
    p.domain_y = ConvexDomain::full_space(2);
    Vec a(2), c(2);
    a << 1.0, 0.0;
    c << 0.0, 1.0;
    p.f = [c](const Vec&, const Vec& y) { return c.dot(y) + 0.5 * y.squaredNorm(); };
    p.g = [a](const Vec& x, const Vec& y) {
        const double r = a.dot(y) - x(0);
        return 0.5 * r * r;
    };
    p.f_grad_x = [](const Vec&, const Vec&) { return Vec(Vec::Zero(1)); };
    p.f_grad_y = [c](const Vec&, const Vec& y) { return Vec(c + y); };
    p.g_grad_x = [a](const Vec& x, const Vec& y) { return scalar_vec(-(a.dot(y) - x(0))); };
    p.g_grad_y = [a](const Vec& x, const Vec& y) { return Vec((a.dot(y) - x(0)) * a); };
    p.f_hess_yy = [](const Vec&, const Vec&) { return Mat(Mat::Identity(2, 2)); };
    p.f_hess_yx = [](const Vec&, const Vec&) { return Mat(Mat::Zero(2, 1)); };
    p.g_hess_yy = [a](const Vec&, const Vec&) { return Mat(a * a.transpose()); };
    p.g_hess_yx = [a](const Vec&, const Vec&) { return Mat(-a); };
    p.constants = {4.0, 1.0, 2.0, 2.0};

    auto best = [](double x, double sigma) {
        Vec y(2);
        y << x / (1.0 + sigma), -1.0;
        return y;
    };
    p.extras.l_value = [best, f = p.f, g = p.g](const Vec& x, double sigma) {
        if (sigma == 0.0) return 0.0;  // g vanishes on the solution line
        const Vec y = best(x(0), sigma);
        return sigma * f(x, y) + g(x, y);
    };
    p.extras.solution_points = [best](const Vec& x, double sigma) {
        std::vector<Vec> pts;
        if (sigma > 0.0) {
            pts.push_back(best(x(0), sigma));
        } else {
            for (double t : {-1.0, 0.0, 1.0}) {
                Vec y(2);
                y << x(0), t;
                pts.push_back(y);
            }
        }
        return pts;
    };
    p.extras.project_solution_set = [best](const Vec& x, double sigma, const Vec& y) {
        if (sigma > 0.0) return best(x(0), sigma);
        Vec out(2);
        out << x(0), y(1);
        return out;
    };
    p.extras.psi = [](const Vec& x) { return 0.5 * x(0) * x(0) - 0.5; };
    p.extras.grad_psi = [](const Vec& x) { return scalar_vec(x(0)); };
    p.extras.mu = 0.5;
    p.extras.delta = 0.5;
    tp.default_rho = 0.9 / (4.0 * 2.0);
    return tp;
}

// quad_sc objectives with Y = [-1,1]^2. With A = [[1, 0.5], [0, 1]] the
// unconstrained lower solution A x/(1+sigma) leaves the box across the
// y_1 face on the line x_1 + 0.5 x_2 = +-(1+sigma) and across the y_2 face
// on x_2 = +-(1+sigma); at those crossings psi picks up kinks, and the
// active-set/pseudo-inverse path of the implicit gradient engages.
TestProblem make_box_active() {
    TestProblem tp;
    tp.name = "box_active";
    BilevelProblem& p = tp.base;
    const Mat A = quad_matrix();
    p.domain_x = ConvexDomain::full_space(2);
    Vec lo(2), hi(2);
    lo << -1.0, -1.0;
    hi << 1.0, 1.0;
    p.domain_y = ConvexDomain::box(lo, hi);
    install_quad_objectives(p, A);
    p.constants = {1.5, 1.0, 2.65, 4.0};

    auto best = [A](const Vec& x, double sigma) {
        Vec y = A * x / (1.0 + sigma);
        y(0) = clamp(y(0), -1.0, 1.0);
        y(1) = clamp(y(1), -1.0, 1.0);
        return y;
    };
    p.extras.l_value = [best, f = p.f, g = p.g](const Vec& x, double sigma) {
        const Vec y = best(x, sigma);
        return sigma * f(x, y) + g(x, y);
    };
    p.extras.solution_points = [best](const Vec& x, double sigma) {
        return std::vector<Vec>{best(x, sigma)};
    };
    p.extras.project_solution_set = [best](const Vec& x, double sigma, const Vec&) {
        return best(x, sigma);
    };
    p.extras.psi = [best](const Vec& x) {
        const Vec y = best(x, 0.0);
        return 0.5 * x.squaredNorm() + 0.5 * y.squaredNorm();
    };
    p.extras.grad_psi = [A, best](const Vec& x) {
        const Vec u = A * x;
        Vec y = best(x, 0.0);
        for (int i = 0; i < 2; ++i)
            if (std::abs(u(i)) >= 1.0) y(i) = 0.0;  // clamped coordinate, zero slope
        return Vec(x + A.transpose() * y);
    };
    p.extras.mu = 0.5;
    p.extras.delta = 1.0;
    tp.default_rho = 0.9 / (4.0 * 2.65);
    return tp;
}

}  // namespace

TestProblem make_problem(const std::string& name) {
    if (name == "bilinear_ll") return make_bilinear_ll();
    if (name == "constrained_sc") return make_constrained_sc();
    if (name == "quad_sc") return make_quad_sc();
    if (name == "pl_multisol") return make_pl_multisol();
    if (name == "box_active") return make_box_active();
    throw std::invalid_argument("make_problem: unknown problem '" + name + "'");
}

BilevelProblem without_analytic_extras(BilevelProblem problem) {
    problem.extras = AnalyticExtras{};
    return problem;
}

GridResult grid_oracle(const BilevelProblem& problem, const Vec& x, double sigma,
                       double resolution) {
    const ConvexDomain& dy = problem.domain_y;
    if (dy.kind() != DomainKind::box || dy.dim() > 3)
        throw unsupported_error("grid_oracle: needs a bounded box domain with d_y <= 3");
    if (!(resolution > 0.0)) throw std::invalid_argument("grid_oracle: resolution must be > 0");
    if (sigma < 0.0) throw std::invalid_argument("grid_oracle: sigma must be >= 0");

    const Vec& lo = dy.box_lower();
    const Vec& hi = dy.box_upper();
    const int d = dy.dim();
    std::vector<long> counts(static_cast<size_t>(d));
    long total = 1;
    for (int i = 0; i < d; ++i) {
        counts[static_cast<size_t>(i)] =
            std::max<long>(1, std::lround((hi(i) - lo(i)) / resolution)) + 1;
        total *= counts[static_cast<size_t>(i)];
    }

    auto point_at = [&](long flat) {
        Vec y(d);
        for (int i = 0; i < d; ++i) {
            const long n = counts[static_cast<size_t>(i)];
            const long idx = flat % n;
            flat /= n;
            y(i) = n == 1 ? lo(i) : lo(i) + (hi(i) - lo(i)) * static_cast<double>(idx) /
                                                static_cast<double>(n - 1);
        }
        return y;
    };

    double min_val = std::numeric_limits<double>::infinity();
    std::vector<double> values(static_cast<size_t>(total));
    for (long flat = 0; flat < total; ++flat) {
        const double v = problem.h_sigma(x, point_at(flat), sigma);
        values[static_cast<size_t>(flat)] = v;
        min_val = std::min(min_val, v);
    }

    // Candidates within one resolution of the minimum, each polished by 20
    // projected descent steps so boundary minimizers land exactly.
    const auto& c = problem.constants;
    const double smooth = sigma * c.l_f1.value_or(0.0) + c.l_g1.value_or(1.0 / resolution);
    const double step = 0.9 / std::max(smooth, 1e-12);
    GridResult result;
    result.l_value = std::numeric_limits<double>::infinity();
    std::vector<Vec> refined;
    for (long flat = 0; flat < total; ++flat) {
        if (values[static_cast<size_t>(flat)] > min_val + resolution) continue;
        Vec w = point_at(flat);
        for (int it = 0; it < 20; ++it) {
            Vec grad = sigma != 0.0 ? problem.h_sigma_grad_y(x, w, sigma)
                                    : problem.g_grad_y(x, w);
            w = project(dy, Vec(w - step * grad));
        }
        result.l_value = std::min(result.l_value, problem.h_sigma(x, w, sigma));
        refined.push_back(std::move(w));
    }
    for (const Vec& w : refined) {
        bool dup = false;
        for (const Vec& kept : result.argmin_set)
            if ((w - kept).norm() < 0.5 * resolution) {
                dup = true;
                break;
            }
        if (!dup) result.argmin_set.push_back(w);
    }
    return result;
}

}  // namespace bipen
