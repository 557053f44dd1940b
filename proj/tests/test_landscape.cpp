#include <cmath>

#include "bipen/landscape.hpp"
#include "bipen/testbed.hpp"
#include "doctest.h"

using bipen::Mat;
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

// Minimal instance for the error-bound probes: g = ||y||^2/2 with solution
// set {0}, no declared constants, so the generic descent path is exercised.
bipen::BilevelProblem tiny_quadratic() {
    bipen::BilevelProblem p;
    p.domain_x = bipen::ConvexDomain::full_space(1);
    p.domain_y = bipen::ConvexDomain::full_space(1);
    p.f = [](const Vec&, const Vec&) { return 0.0; };
    p.g = [](const Vec&, const Vec& y) { return 0.5 * y.squaredNorm(); };
    p.f_grad_x = [](const Vec&, const Vec&) { return Vec(Vec::Zero(1)); };
    p.f_grad_y = [](const Vec&, const Vec&) { return Vec(Vec::Zero(1)); };
    p.g_grad_x = [](const Vec&, const Vec&) { return Vec(Vec::Zero(1)); };
    p.g_grad_y = [](const Vec&, const Vec& y) { return y; };
    p.extras.project_solution_set = [](const Vec&, double, const Vec& y) {
        return Vec(Vec::Zero(y.size()));
    };
    return p;
}

}  // namespace

TEST_SUITE("landscape") {

TEST_CASE("penalized value through hooks and through descent") {
    const auto tp = bipen::make_problem("quad_sc");
    const Vec x = v2(1.0, 1.0);
    const double sigma = 0.01;

    CHECK(eval_psi_sigma(tp.base, x, sigma) ==
          doctest::Approx(2.608910891089109).epsilon(1e-12));

    const auto bare = bipen::without_analytic_extras(tp.base);
    CHECK(eval_psi_sigma(bare, x, sigma, 1e-10) ==
          doctest::Approx(2.608910891089109).epsilon(1e-6));
}

TEST_CASE("hyper-objective evaluation falls back by capability") {
    const auto quad = bipen::make_problem("quad_sc");
    CHECK(eval_psi(quad.base, v2(1.0, 1.0)) == doctest::Approx(2.625).epsilon(1e-12));

    const auto bilinear = bipen::make_problem("bilinear_ll");
    const auto bare = bipen::without_analytic_extras(bilinear.base);
    CHECK(eval_psi(bare, v1(0.5)) == doctest::Approx(1.25).epsilon(1e-3));

    const auto quad_bare = bipen::without_analytic_extras(quad.base);
    CHECK_THROWS_AS(eval_psi(quad_bare, v2(0.0, 0.0)), bipen::unsupported_error);
}

TEST_CASE("finite differences match the quadratic gradient") {
    const auto tp = bipen::make_problem("quad_sc");
    const Vec g = grad_psi_sigma_fd(tp.base, v2(1.0, 1.0), 0.01, 1e-4);
    CHECK(g(0) == doctest::Approx(2.4851485148514851).epsilon(1e-6));
    CHECK(g(1) == doctest::Approx(2.7326732673267324).epsilon(1e-6));
}

TEST_CASE("finite differences go one-sided at the boundary") {
    const auto tp = bipen::make_problem("constrained_sc");
    const Vec g = grad_psi_sigma_fd(tp.base, v1(-2.0), 1e-3, 1e-5);
    CHECK(std::abs(g(0)) <= 1e-2);  // flat plateau
}

TEST_CASE("active-face snapshot on the scalar constrained instance") {
    const auto tp = bipen::make_problem("constrained_sc");
    const double sigma = 0.1;
    const Vec x = v1(1.5);
    const Vec y_star = tp.base.extras.solution_points(x, sigma).front();
    REQUIRE(y_star(0) == 1.0);

    const auto snap = find_lagrangian_snapshot(tp.base, x, sigma, y_star);
    REQUIRE(snap.active_set.size() == 1);
    CHECK(snap.multipliers_ineq(0) == doctest::Approx(1.1).epsilon(1e-9));
    CHECK(snap.strict_complementarity);
    CHECK(snap.s_min == doctest::Approx(1.0).epsilon(1e-12));

    REQUIRE(snap.lagrangian_hessian.rows() == 2);
    Mat expected(2, 2);
    expected << 0.0, 1.0, 1.0, 2.0;
    CHECK((snap.lagrangian_hessian - expected).norm() <= 1e-12);

    // On the clamped plateau the hyper-objective is locally constant.
    const Vec grad = implicit_gradient(tp.base, x, sigma, snap);
    CHECK(std::abs(grad(0)) <= 1e-12);
}

TEST_CASE("interior snapshot reproduces the smooth branch slope") {
    const auto tp = bipen::make_problem("constrained_sc");
    const double sigma = 0.1;
    const Vec x = v1(0.5);
    const Vec y_star = v1(0.55);  // x + sigma/2

    const auto snap = find_lagrangian_snapshot(tp.base, x, sigma, y_star);
    CHECK(snap.active_set.empty());
    CHECK(snap.s_min == std::numeric_limits<double>::infinity());
    REQUIRE(snap.lagrangian_hessian.rows() == 1);
    CHECK(snap.lagrangian_hessian(0, 0) == doctest::Approx(2.0).epsilon(1e-12));

    const Vec grad = implicit_gradient(tp.base, x, sigma, snap);
    CHECK(grad(0) == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("implicit gradient on the smooth quadratic") {
    const auto tp = bipen::make_problem("quad_sc");
    const auto all = implicit_gradient_all(tp.base, v2(1.0, 1.0), 0.01);
    REQUIRE(all.size() == 1);
    CHECK(all[0](0) == doctest::Approx(2.4704440741103815).epsilon(1e-9));
    CHECK(all[0](1) == doctest::Approx(2.7155180864621116).epsilon(1e-9));
}

TEST_CASE("pseudo-inverse path gives one slope across the solution line") {
    const auto tp = bipen::make_problem("pl_multisol");
    const auto all = implicit_gradient_all(tp.base, v1(1.0), 0.0);
    REQUIRE(all.size() == 3);
    for (const Vec& g : all) CHECK(g(0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("snapshot rejects points that are not minimizers") {
    const auto tp = bipen::make_problem("constrained_sc");
    CHECK_THROWS_AS(find_lagrangian_snapshot(tp.base, v1(0.5), 0.1, v1(0.9)),
                    bipen::kkt_error);
}

TEST_CASE("image condition separates regular and irregular instances") {
    const auto bilinear = bipen::make_problem("bilinear_ll");
    auto snap = find_lagrangian_snapshot(bilinear.base, v1(0.0), 0.0, v1(0.0));
    CHECK_FALSE(image_condition_check(bilinear.base, v1(0.0), 0.0, snap).holds);

    const auto quad = bipen::make_problem("quad_sc");
    snap = find_lagrangian_snapshot(quad.base, v2(1.0, 1.0), 0.1,
                                    quad.base.extras.solution_points(v2(1.0, 1.0), 0.1).front());
    CHECK(image_condition_check(quad.base, v2(1.0, 1.0), 0.1, snap).holds);

    // Degenerate lower level: holds at the f-optimal solution, fails at a
    // solution far out on the line where grad_y f leaves the Hessian image.
    const auto pl = bipen::make_problem("pl_multisol");
    snap = find_lagrangian_snapshot(pl.base, v1(1.0), 0.0, v2(1.0, -1.0));
    CHECK(image_condition_check(pl.base, v1(1.0), 0.0, snap).holds);
    snap = find_lagrangian_snapshot(pl.base, v1(1.0), 0.0, v2(1.0, 5.0));
    CHECK_FALSE(image_condition_check(pl.base, v1(1.0), 0.0, snap).holds);
}

TEST_CASE("global lower minimum through multi-start descent") {
    const auto tp = bipen::make_problem("bilinear_ll");
    const auto bare = bipen::without_analytic_extras(tp.base);
    CHECK(bipen::min_h_sigma(bare, v1(0.5), 0.0, 1e-8) == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("error-bound probes on a hand-built quadratic") {
    const auto p = tiny_quadratic();
    const auto probes = eb_ratio(p, v1(0.0), 0.0, {v1(2.0), v1(0.0)}, 1.0);
    REQUIRE(probes.size() == 2);
    CHECK(probes[0].prox_residual == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(probes[0].distance == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(probes[0].ratio == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(std::isinf(probes[1].ratio));  // sitting on the solution set
}

TEST_CASE("single-level reformulation residuals vanish at the solution") {
    const auto tp = bipen::make_problem("pl_multisol");
    const double rho = tp.default_rho;

    const auto at_opt = kkt_residuals_pcon(tp.base, v1(0.0), v2(0.0, -1.0), 0.1, rho);
    CHECK(at_opt.upper_stationarity <= 1e-6);
    CHECK(at_opt.lower_stationarity <= 1e-6);
    CHECK(std::abs(at_opt.value_feasibility) <= 1e-9);

    // With y on the solution set the x-misfit hides behind the cancelling
    // multiplier terms; the violation surfaces in the y-block instead.
    const auto off_opt = kkt_residuals_pcon(tp.base, v1(1.0), v2(1.0, -1.0), 0.1, rho);
    CHECK(off_opt.upper_stationarity <= 1e-9);
    CHECK(off_opt.lower_stationarity > 0.5);
}

}  // TEST_SUITE
