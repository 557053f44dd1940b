#include "bipen/core.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace bipen {

namespace {

void require_dim(const ConvexDomain& d, const Vec& p, const char* who) {
    if (p.size() != d.dim())
        throw std::invalid_argument(std::string(who) + ": dimension mismatch (point " +
                                    std::to_string(p.size()) + ", domain " +
                                    std::to_string(d.dim()) + ")");
}

ScalarConstraint affine_row(Vec a, double b) {
    // c(y) = a'y + b
    ScalarConstraint c;
    auto av = std::make_shared<Vec>(std::move(a));
    c.value = [av, b](const Vec& y) { return av->dot(y) + b; };
    c.gradient = [av](const Vec&) { return *av; };
    c.hessian = [n = av->size()](const Vec&) { return Mat::Zero(n, n); };
    c.affine = true;
    c.convex = true;
    return c;
}

}  // namespace

ConvexDomain ConvexDomain::full_space(int dim) {
    if (dim < 0) throw std::invalid_argument("full_space: negative dimension");
    ConvexDomain d;
    d.kind_ = DomainKind::full_space;
    d.dim_ = dim;
    return d;
}

ConvexDomain ConvexDomain::box(Vec lower, Vec upper) {
    if (lower.size() != upper.size()) throw std::invalid_argument("box: bound sizes differ");
    if (!lower.allFinite() || !upper.allFinite())
        throw std::invalid_argument("box: bounds must be finite");
    if ((lower.array() > upper.array()).any())
        throw std::invalid_argument("box: lower > upper in some coordinate");
    ConvexDomain d;
    d.kind_ = DomainKind::box;
    d.dim_ = static_cast<int>(lower.size());
    d.lower_ = std::move(lower);
    d.upper_ = std::move(upper);
    d.norm_bound_ = std::sqrt(d.lower_.array().square().max(d.upper_.array().square()).sum());
    for (int i = 0; i < d.dim_; ++i) {
        Vec e = Vec::Zero(d.dim_);
        e(i) = 1.0;
        d.ineqs_.push_back(affine_row(e, -d.upper_(i)));   // y_i - u_i <= 0
        d.ineqs_.push_back(affine_row(-e, d.lower_(i)));   // l_i - y_i <= 0
    }
    return d;
}

ConvexDomain ConvexDomain::ball(Vec center, double radius) {
    if (!center.allFinite()) throw std::invalid_argument("ball: center must be finite");
    if (!(radius > 0.0) || !std::isfinite(radius))
        throw std::invalid_argument("ball: radius must be positive");
    ConvexDomain d;
    d.kind_ = DomainKind::ball;
    d.dim_ = static_cast<int>(center.size());
    d.center_ = std::move(center);
    d.radius_ = radius;
    d.norm_bound_ = d.center_.norm() + radius;
    auto c = std::make_shared<Vec>(d.center_);
    ScalarConstraint sc;
    sc.value = [c, radius](const Vec& y) {
        return 0.5 * ((y - *c).squaredNorm() - radius * radius);
    };
    sc.gradient = [c](const Vec& y) { return Vec(y - *c); };
    sc.hessian = [n = d.dim_](const Vec&) { return Mat::Identity(n, n); };
    sc.convex = true;
    d.ineqs_.push_back(std::move(sc));
    return d;
}

ConvexDomain ConvexDomain::simplex(int dim) {
    if (dim < 1) throw std::invalid_argument("simplex: dimension must be >= 1");
    ConvexDomain d;
    d.kind_ = DomainKind::simplex;
    d.dim_ = dim;
    d.norm_bound_ = 1.0;  // max norm attained at a vertex
    for (int i = 0; i < dim; ++i) {
        Vec e = Vec::Zero(dim);
        e(i) = -1.0;
        d.ineqs_.push_back(affine_row(e, 0.0));  // -y_i <= 0
    }
    d.eqs_.push_back(affine_row(Vec::Ones(dim), -1.0));  // sum y - 1 = 0
    return d;
}

ConvexDomain ConvexDomain::polyhedron(int dim, std::vector<ScalarConstraint> inequalities,
                                      std::vector<ScalarConstraint> equalities,
                                      std::optional<double> norm_bound) {
    if (dim < 1) throw std::invalid_argument("polyhedron: dimension must be >= 1");
    for (const auto& c : inequalities)
        if (!c.convex) throw std::invalid_argument("polyhedron: inequality not declared convex");
    for (const auto& c : equalities)
        if (!c.affine) throw std::invalid_argument("polyhedron: equality not affine");
    ConvexDomain d;
    d.kind_ = DomainKind::polyhedron;
    d.dim_ = dim;
    d.ineqs_ = std::move(inequalities);
    d.eqs_ = std::move(equalities);
    d.norm_bound_ = norm_bound;
    try {
        project(d, Vec::Zero(dim));  // nonempty check
    } catch (const numerical_error& e) {
        throw std::invalid_argument(std::string("polyhedron: feasibility check failed: ") +
                                    e.what());
    }
    return d;
}

bool ConvexDomain::contains(const Vec& p, double tol) const {
    if (p.size() != dim_) return false;
    switch (kind_) {
        case DomainKind::full_space:
            return true;
        case DomainKind::box:
            return (p.array() >= lower_.array() - tol).all() &&
                   (p.array() <= upper_.array() + tol).all();
        case DomainKind::ball:
            return (p - center_).norm() <= radius_ + tol;
        case DomainKind::simplex:
            return (p.array() >= -tol).all() && std::abs(p.sum() - 1.0) <= tol;
        case DomainKind::polyhedron: {
            for (const auto& c : ineqs_)
                if (c.value(p) > tol) return false;
            for (const auto& c : eqs_)
                if (std::abs(c.value(p)) > tol) return false;
            return true;
        }
    }
    return false;
}

const Vec& ConvexDomain::box_lower() const {
    if (kind_ != DomainKind::box) throw std::invalid_argument("box_lower: not a box");
    return lower_;
}

const Vec& ConvexDomain::box_upper() const {
    if (kind_ != DomainKind::box) throw std::invalid_argument("box_upper: not a box");
    return upper_;
}

namespace {

Vec project_simplex(const Vec& p) {
    // Sort-based exact projection onto {y >= 0, sum y = 1}.
    const Eigen::Index n = p.size();
    std::vector<double> u(p.data(), p.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0, theta = 0.0;
    int support = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        cumsum += u[static_cast<size_t>(j)];
        const double t = (1.0 - cumsum) / static_cast<double>(j + 1);
        if (u[static_cast<size_t>(j)] + t > 0.0) {
            theta = t;
            support = static_cast<int>(j + 1);
        }
    }
    (void)support;
    return (p.array() + theta).max(0.0).matrix();
}

struct LinearizedSystem {
    Mat A;   // inequality rows, A w <= c
    Vec c;
    Mat E;   // equality rows, E w = e
    Vec e;
};

LinearizedSystem linearize_at(const ConvexDomain& d, const Vec& z) {
    LinearizedSystem s;
    const auto& ineqs = d.inequalities();
    const auto& eqs = d.equalities();
    const int n = d.dim();
    s.A.resize(static_cast<Eigen::Index>(ineqs.size()), n);
    s.c.resize(static_cast<Eigen::Index>(ineqs.size()));
    for (size_t i = 0; i < ineqs.size(); ++i) {
        const Vec gi = ineqs[i].gradient(z);
        s.A.row(static_cast<Eigen::Index>(i)) = gi.transpose();
        s.c(static_cast<Eigen::Index>(i)) = gi.dot(z) - ineqs[i].value(z);
    }
    s.E.resize(static_cast<Eigen::Index>(eqs.size()), n);
    s.e.resize(static_cast<Eigen::Index>(eqs.size()));
    for (size_t j = 0; j < eqs.size(); ++j) {
        const Vec gj = eqs[j].gradient(z);
        s.E.row(static_cast<Eigen::Index>(j)) = gj.transpose();
        s.e(static_cast<Eigen::Index>(j)) = gj.dot(z) - eqs[j].value(z);
    }
    return s;
}

double max_violation(const ConvexDomain& d, const Vec& z) {
    double v = 0.0;
    for (const auto& c : d.inequalities()) v = std::max(v, c.value(z));
    for (const auto& c : d.equalities()) v = std::max(v, std::abs(c.value(z)));
    return v;
}

bool all_affine(const ConvexDomain& d) {
    return std::all_of(d.inequalities().begin(), d.inequalities().end(),
                       [](const ScalarConstraint& c) { return c.affine; });
}

// Exact KKT solve on a guessed active set; returns false when the guess does
// not certify (negative multiplier or violated inactive constraint).
bool polish_active_set(const ConvexDomain& d, const Vec& p, const LinearizedSystem& s,
                       const Vec& lambda, Vec& out) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        if (lambda(i) > 1e-12) active.push_back(i);
    const Eigen::Index q = static_cast<Eigen::Index>(active.size()) + s.E.rows();
    if (q == 0) {
        out = p;
        return max_violation(d, out) <= 1e-12;
    }
    Mat N(q, p.size());
    Vec rhs(q);
    for (size_t i = 0; i < active.size(); ++i) {
        N.row(static_cast<Eigen::Index>(i)) = s.A.row(active[i]);
        rhs(static_cast<Eigen::Index>(i)) = s.c(active[i]);
    }
    N.bottomRows(s.E.rows()) = s.E;
    rhs.tail(s.E.rows()) = s.e;
    // z = p - N' mu with N z = rhs  =>  (N N') mu = N p - rhs
    Eigen::LDLT<Mat> ldlt(N * N.transpose());
    if (ldlt.info() != Eigen::Success) return false;
    Vec mu = ldlt.solve(N * p - rhs);
    Vec z = p - N.transpose() * mu;
    for (size_t i = 0; i < active.size(); ++i)
        if (mu(static_cast<Eigen::Index>(i)) < -1e-12) return false;
    if (max_violation(d, z) > 1e-12) return false;
    out = std::move(z);
    return true;
}

Vec project_polyhedron(const ConvexDomain& d, const Vec& p) {
    if (d.contains(p, 1e-13)) return p;

    constexpr int kIterCap = 10000;
    constexpr double kTol = 1e-10;

    Vec z = p;
    Vec lambda = Vec::Zero(static_cast<Eigen::Index>(d.inequalities().size()));
    Vec nu = Vec::Zero(static_cast<Eigen::Index>(d.equalities().size()));
    int spent = 0;
    double viol = max_violation(d, z);
    const bool affine_only = all_affine(d);

    while (spent < kIterCap) {
        // Convexity makes the feasible set a subset of every linearization,
        // so the fixed point of repeated linearized projection is the exact
        // projection. Affine systems converge in one outer pass.
        LinearizedSystem s = linearize_at(d, z);
        Mat M(s.A.rows() + s.E.rows(), p.size());
        M.topRows(s.A.rows()) = s.A;
        M.bottomRows(s.E.rows()) = s.E;
        const double mnorm2 = M.squaredNorm();  // Frobenius bound on ||M||_2^2
        const double step = mnorm2 > 0.0 ? 1.0 / mnorm2 : 1.0;

        // Dual projected-gradient ascent on the linearized projection QP.
        Vec w = z;
        for (; spent < kIterCap; ++spent) {
            w = p - s.A.transpose() * lambda - s.E.transpose() * nu;
            const Vec ri = s.A * w - s.c;
            const Vec re = s.E * w - s.e;
            double stat = 0.0;  // complementarity + infeasibility of the QP
            for (Eigen::Index i = 0; i < ri.size(); ++i)
                stat = std::max(stat, lambda(i) > 0.0 ? std::abs(ri(i)) : std::max(ri(i), 0.0));
            for (Eigen::Index j = 0; j < re.size(); ++j)
                stat = std::max(stat, std::abs(re(j)));
            if (stat <= kTol * 0.1) break;
            lambda = (lambda + step * ri).cwiseMax(0.0);
            nu += step * re;
        }

        const double moved = (w - z).norm();
        z = w;
        viol = max_violation(d, z);
        if (viol <= kTol && (affine_only || moved <= kTol * 0.1)) {
            if (affine_only) {
                Vec polished;
                if (polish_active_set(d, p, s, lambda, polished)) return polished;
            }
            return z;
        }
    }
    throw numerical_error("polyhedron projection did not converge", viol);
}

}  // namespace

Vec project(const ConvexDomain& domain, const Vec& p) {
    require_dim(domain, p, "project");
    if (!p.allFinite()) throw std::invalid_argument("project: non-finite point");
    switch (domain.kind()) {
        case DomainKind::full_space:
            return p;
        case DomainKind::box:
            return p.cwiseMax(domain.lower_).cwiseMin(domain.upper_);
        case DomainKind::ball: {
            const Vec r = p - domain.center_;
            const double nr = r.norm();
            if (nr <= domain.radius_) return p;
            return domain.center_ + (domain.radius_ / nr) * r;
        }
        case DomainKind::simplex:
            return project_simplex(p);
        case DomainKind::polyhedron:
            return project_polyhedron(domain, p);
    }
    throw std::logic_error("project: unreachable");
}

double normal_cone_residual(const ConvexDomain& domain, const Vec& p, const Vec& v,
                            double step) {
    if (!(step > 0.0)) throw std::invalid_argument("normal_cone_residual: step must be > 0");
    require_dim(domain, p, "normal_cone_residual");
    if (v.size() != p.size())
        throw std::invalid_argument("normal_cone_residual: vector dimension mismatch");
    if (!domain.contains(p, 1e-8))
        throw std::invalid_argument("normal_cone_residual: point not feasible");
    return (p - project(domain, p - step * v)).norm() / step;
}

}  // namespace bipen
