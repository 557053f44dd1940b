#include <cmath>

#include "bipen/testbed.hpp"
#include "doctest.h"

using bipen::Vec;

namespace {

Vec v1(double a) {
    Vec v(1);
    v << a;
    return v;
}

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_SUITE("testbed") {

TEST_CASE("catalog and declared constants") {
    struct Expect {
        const char* name;
        double l_f0, l_f1, l_g1, C_f;
    };
    const Expect table[] = {
        {"bilinear_ll", 2.0, 2.0, 1.0, 2.0},   {"constrained_sc", 1.0, 0.0, 4.0, 1.0},
        {"quad_sc", 4.0, 1.0, 2.65, 4.0},      {"pl_multisol", 4.0, 1.0, 2.0, 2.0},
        {"box_active", 1.5, 1.0, 2.65, 4.0},
    };
    for (const auto& e : table) {
        const auto tp = bipen::make_problem(e.name);
        CHECK(tp.name == e.name);
        CHECK(*tp.base.constants.l_f0 == e.l_f0);
        CHECK(*tp.base.constants.l_f1 == e.l_f1);
        CHECK(*tp.base.constants.l_g1 == e.l_g1);
        CHECK(*tp.base.constants.C_f == e.C_f);
        CHECK(tp.default_rho == doctest::Approx(0.9 / (4.0 * e.l_g1)).epsilon(1e-15));
        CHECK(tp.default_rho * e.l_g1 < 0.25);
        CHECK(tp.base.has_hessians());
    }
    CHECK_THROWS_AS(bipen::make_problem("no_such_problem"), std::invalid_argument);
}

TEST_CASE("hyper-objective hooks at pinned points") {
    const auto bilinear = bipen::make_problem("bilinear_ll");
    CHECK(bilinear.base.extras.psi(v1(0.5)) == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(bilinear.base.extras.psi(v1(-0.5)) == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(bilinear.base.extras.psi(v1(0.0)) == 0.0);

    const auto constrained = bipen::make_problem("constrained_sc");
    CHECK(constrained.base.extras.psi(v1(-2.0)) == 1.0);
    CHECK(constrained.base.extras.psi(v1(-0.5)) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(constrained.base.extras.psi(v1(2.0)) == -1.0);
    REQUIRE(constrained.nondifferentiable_points.size() == 2);
    CHECK(std::abs(constrained.nondifferentiable_points[0](0)) == 1.0);
    CHECK(std::abs(constrained.nondifferentiable_points[1](0)) == 1.0);

    const auto quad = bipen::make_problem("quad_sc");
    CHECK(quad.base.extras.psi(v2(1.0, 1.0)) == doctest::Approx(2.625).epsilon(1e-12));
    const Vec g = quad.base.extras.grad_psi(v2(1.0, 1.0));
    CHECK(g(0) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(g(1) == doctest::Approx(2.75).epsilon(1e-12));

    const auto pl = bipen::make_problem("pl_multisol");
    CHECK(pl.base.extras.psi(v1(2.0)) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(pl.base.extras.grad_psi(v1(2.0))(0) == doctest::Approx(2.0).epsilon(1e-12));

    const auto box = bipen::make_problem("box_active");
    CHECK(box.base.extras.psi(v2(2.0, 0.0)) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("lower value hooks at pinned points") {
    const auto constrained = bipen::make_problem("constrained_sc");
    // Interior minimizer y = x + sigma/2.
    CHECK(constrained.base.extras.l_value(v1(0.5), 0.1) ==
          doctest::Approx(-0.0525).epsilon(1e-12));
    CHECK(constrained.base.extras.l_value(v1(0.5), 0.0) == 0.0);

    const auto quad = bipen::make_problem("quad_sc");
    CHECK(quad.base.extras.l_value(v2(1.0, 1.0), 0.1) ==
          doctest::Approx(0.1 + 0.1 * 3.25 / 2.2).epsilon(1e-12));
    CHECK(quad.base.extras.l_value(v2(1.0, 1.0), 0.0) == 0.0);

    const auto pl = bipen::make_problem("pl_multisol");
    CHECK(pl.base.extras.l_value(v1(2.0), 0.1) ==
          doctest::Approx(-0.05 + 0.1 * 4.0 / 2.2).epsilon(1e-12));
}

TEST_CASE("solution hooks") {
    const auto quad = bipen::make_problem("quad_sc");
    const auto pts = quad.base.extras.solution_points(v2(1.0, 1.0), 0.1);
    REQUIRE(pts.size() == 1);
    CHECK((pts[0] - v2(1.5 / 1.1, 1.0 / 1.1)).norm() <= 1e-12);

    const auto constrained = bipen::make_problem("constrained_sc");
    const auto boundary = constrained.base.extras.solution_points(v1(1.5), 0.1);
    REQUIRE(boundary.size() == 1);
    CHECK(boundary[0](0) == 1.0);

    const auto pl = bipen::make_problem("pl_multisol");
    const Vec proj = pl.base.extras.project_solution_set(v1(1.0), 0.0, v2(5.0, 7.0));
    CHECK(proj(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(proj(1) == doctest::Approx(7.0).epsilon(1e-14));

    const auto bilinear = bipen::make_problem("bilinear_ll");
    const auto corner = bilinear.base.extras.solution_points(v1(0.5), 0.05);
    REQUIRE(corner.size() == 1);
    CHECK(corner[0](0) == -1.0);
}

TEST_CASE("brute-force grid reference on the bilinear instance") {
    const auto tp = bipen::make_problem("bilinear_ll");

    auto r = grid_oracle(tp.base, v1(0.5), 0.0, 1e-3);
    CHECK(r.l_value == doctest::Approx(-0.5).epsilon(1e-9));
    REQUIRE(r.argmin_set.size() == 1);
    CHECK(r.argmin_set[0](0) == doctest::Approx(-1.0).epsilon(1e-9));

    // Flat lower level: every feasible point is optimal and the grid keeps
    // the whole sweep.
    r = grid_oracle(tp.base, v1(0.0), 0.0, 1e-3);
    CHECK(r.l_value == 0.0);
    CHECK(r.argmin_set.size() > 100);
    double lo = 1e9, hi = -1e9;
    for (const auto& p : r.argmin_set) {
        lo = std::min(lo, p(0));
        hi = std::max(hi, p(0));
    }
    CHECK(lo == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(hi == doctest::Approx(1.0).epsilon(1e-6));

    r = grid_oracle(tp.base, v1(0.5), 0.05, 1e-3);
    CHECK(r.l_value == doctest::Approx(-0.4375).epsilon(1e-9));
}

TEST_CASE("grid reference agrees with the value hooks") {
    for (const char* name : {"bilinear_ll", "constrained_sc"}) {
        const auto tp = bipen::make_problem(name);
        for (const double sigma : {0.0, 0.05}) {
            for (const double xv : {-0.8, 0.3, 1.0}) {
                if (!tp.base.domain_x.contains(v1(xv), 1e-12)) continue;
                const auto r = grid_oracle(tp.base, v1(xv), sigma, 1e-3);
                CHECK(std::abs(r.l_value - tp.base.extras.l_value(v1(xv), sigma)) <= 2e-3);
            }
        }
    }

    const auto box = bipen::make_problem("box_active");
    const auto r = grid_oracle(box.base, v2(2.0, 0.0), 0.05, 1e-2);
    CHECK(r.l_value == doctest::Approx(0.625).epsilon(1e-6));
    CHECK((r.argmin_set.front() - v2(1.0, 0.0)).norm() <= 2e-2);
}

TEST_CASE("grid reference refuses unbounded domains") {
    const auto quad = bipen::make_problem("quad_sc");
    CHECK_THROWS_AS(grid_oracle(quad.base, v2(0.0, 0.0), 0.1, 1e-2), bipen::unsupported_error);
}

TEST_CASE("hook removal leaves the smooth data intact") {
    const auto tp = bipen::make_problem("bilinear_ll");
    const auto bare = bipen::without_analytic_extras(tp.base);
    CHECK_FALSE(static_cast<bool>(bare.extras.l_value));
    CHECK_FALSE(static_cast<bool>(bare.extras.psi));
    CHECK_FALSE(static_cast<bool>(bare.extras.solution_points));
    CHECK(bare.has_hessians());
    CHECK(bare.f(v1(0.5), v1(-1.0)) == tp.base.f(v1(0.5), v1(-1.0)));
}

}  // TEST_SUITE
