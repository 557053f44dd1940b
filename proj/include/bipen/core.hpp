#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bipen/errors.hpp"

namespace bipen {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// A finite real vector. The only job of this wrapper is to reject NaN/Inf at
// construction so downstream code never has to re-check.
class Point {
public:
    Point() = default;
    Point(Vec v) : v_(std::move(v)) {  // NOLINT: implicit by design
        if (!v_.allFinite()) throw std::invalid_argument("point has non-finite entries");
    }
    const Vec& vec() const { return v_; }
    Eigen::Index size() const { return v_.size(); }
    double operator[](Eigen::Index i) const { return v_(i); }

private:
    Vec v_;
};

enum class DomainKind { full_space, box, ball, simplex, polyhedron };

// One smooth scalar constraint c(y) with derivatives. Inequalities mean
// c(y) <= 0, equalities c(y) = 0. Equalities must be affine; inequality
// constraints must declare convexity (affine implies convex).
struct ScalarConstraint {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    std::function<Mat(const Vec&)> hessian;  // may be empty when unused
    bool affine = false;
    bool convex = false;
};

// Closed convex set with exact projections for the structured kinds and an
// iterative scheme for general smooth-convex constraint systems. Immutable
// after construction.
class ConvexDomain {
public:
    static ConvexDomain full_space(int dim);
    static ConvexDomain box(Vec lower, Vec upper);
    static ConvexDomain ball(Vec center, double radius);
    static ConvexDomain simplex(int dim);
    static ConvexDomain polyhedron(int dim, std::vector<ScalarConstraint> inequalities,
                                   std::vector<ScalarConstraint> equalities,
                                   std::optional<double> norm_bound = std::nullopt);

    DomainKind kind() const { return kind_; }
    int dim() const { return dim_; }
    bool bounded() const { return norm_bound_.has_value(); }
    // Bound on max_{y in D} ||y||, when the kind implies one (D_Y).
    std::optional<double> norm_bound() const { return norm_bound_; }

    bool contains(const Vec& p, double tol = 1e-10) const;

    // Constraint-function view of the set, used by the KKT machinery. Boxes,
    // balls, and simplices synthesize their defining constraints here so all
    // kinds look alike to the landscape module.
    const std::vector<ScalarConstraint>& inequalities() const { return ineqs_; }
    const std::vector<ScalarConstraint>& equalities() const { return eqs_; }

    // Box data accessors (throws for other kinds); used by grid sweeps.
    const Vec& box_lower() const;
    const Vec& box_upper() const;

private:
    ConvexDomain() = default;

    DomainKind kind_ = DomainKind::full_space;
    int dim_ = 0;
    std::optional<double> norm_bound_;
    std::vector<ScalarConstraint> ineqs_;
    std::vector<ScalarConstraint> eqs_;

    // kind-specific data
    Vec lower_, upper_;   // box
    Vec center_;          // ball
    double radius_ = 0.0;

    friend Vec project(const ConvexDomain&, const Vec&);
};

// Euclidean projection. Exact for full_space/box/ball/simplex; iterative for
// polyhedron (feasibility tolerance 1e-10, iteration cap 10^4, throws
// numerical_error carrying the residual on failure).
Vec project(const ConvexDomain& domain, const Vec& p);

// Projected-gradient residual (1/step) * ||p - project(p - step*v)||, the
// computable surrogate for -v lying in the normal cone at p.
double normal_cone_residual(const ConvexDomain& domain, const Vec& p, const Vec& v,
                            double step);

// Declared smoothness/boundedness constants. These are problem data supplied
// by whoever defines the instance, not estimates.
struct ProblemConstants {
    std::optional<double> l_f0;  // sup ||grad_y f||
    std::optional<double> l_f1;  // Lipschitz constant of grad f
    std::optional<double> l_g1;  // Lipschitz constant of grad g
    std::optional<double> C_f;   // bound on |f| over the region of interest
};

// Closed-form hooks testbed problems expose so evaluations and diagnostics
// have exact references. All members are optional (empty std::function).
struct AnalyticExtras {
    // min_y h_sigma(x, y) over domain_y; accepts sigma = 0.
    std::function<double(const Vec& x, double sigma)> l_value;
    // Representative minimizers of h_sigma(x, .); singleton when unique.
    std::function<std::vector<Vec>(const Vec& x, double sigma)> solution_points;
    // Nearest point of the solution set T(x, sigma) to a query y.
    std::function<Vec(const Vec& x, double sigma, const Vec& y)> project_solution_set;
    std::function<double(const Vec& x)> psi;
    std::function<Vec(const Vec& x)> grad_psi;  // empty where psi is nonsmooth
    std::optional<double> mu;     // proximal error-bound modulus
    std::optional<double> delta;  // proximal error-bound radius
};

// Upper objective f, lower objective g, their first derivatives, and the
// second-derivative blocks the implicit-gradient formula needs. Hessian
// members may be left empty for problems that never reach that code path.
struct BilevelProblem {
    ConvexDomain domain_x{ConvexDomain::full_space(0)};
    ConvexDomain domain_y{ConvexDomain::full_space(0)};

    std::function<double(const Vec&, const Vec&)> f, g;
    std::function<Vec(const Vec&, const Vec&)> f_grad_x, f_grad_y;
    std::function<Vec(const Vec&, const Vec&)> g_grad_x, g_grad_y;

    // hess_yy: d_y x d_y; hess_yx: d_y x d_x (grad_y differentiated in x).
    std::function<Mat(const Vec&, const Vec&)> f_hess_yy, f_hess_yx;
    std::function<Mat(const Vec&, const Vec&)> g_hess_yy, g_hess_yx;

    ProblemConstants constants;
    AnalyticExtras extras;

    bool has_hessians() const {
        return static_cast<bool>(f_hess_yy) && static_cast<bool>(f_hess_yx) &&
               static_cast<bool>(g_hess_yy) && static_cast<bool>(g_hess_yx);
    }

    // h_sigma(x, .) = sigma * f(x, .) + g(x, .)
    double h_sigma(const Vec& x, const Vec& y, double sigma) const {
        return sigma * f(x, y) + g(x, y);
    }
    Vec h_sigma_grad_y(const Vec& x, const Vec& y, double sigma) const {
        return sigma * f_grad_y(x, y) + g_grad_y(x, y);
    }
    Vec h_sigma_grad_x(const Vec& x, const Vec& y, double sigma) const {
        return sigma * f_grad_x(x, y) + g_grad_x(x, y);
    }
    Mat h_sigma_hess_yy(const Vec& x, const Vec& y, double sigma) const {
        return sigma * f_hess_yy(x, y) + g_hess_yy(x, y);
    }
    Mat h_sigma_hess_yx(const Vec& x, const Vec& y, double sigma) const {
        return sigma * f_hess_yx(x, y) + g_hess_yx(x, y);
    }
};

}  // namespace bipen
