#include "bipen/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bipen/core.hpp"
#include "bipen/errors.hpp"
#include "bipen/landscape.hpp"
#include "bipen/metrics_io.hpp"
#include "bipen/oracles.hpp"
#include "bipen/prox.hpp"
#include "bipen/solvers.hpp"
#include "bipen/testbed.hpp"

namespace bipen {

namespace {

constexpr uint64_t kVerifySeed = 0x5eedf00dULL;

std::string vec_str(const Vec& v) {
    std::ostringstream s;
    s << "(";
    for (long i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    s << ")";
    return s.str();
}

detail::CounterRng make_rng(uint32_t salt) {
    return detail::CounterRng(kVerifySeed, detail::tag_for(Stream::wy, 2), salt, 0);
}

VerifyCheck philox_known_answers() {
    VerifyCheck check{"philox_known_answers", true, "3 reference counters match"};
    struct Case {
        std::array<uint32_t, 4> ctr, expect;
        std::array<uint32_t, 2> key;
    };
    const std::vector<Case> cases = {
        {{0u, 0u, 0u, 0u}, {0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}, {0u, 0u}},
        {{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
         {0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu},
         {0xffffffffu, 0xffffffffu}},
        {{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
         {0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u},
         {0xa4093822u, 0x299f31d0u}},
    };
    for (const Case& c : cases) {
        const auto got = detail::philox4x32(c.ctr, c.key);
        if (got != c.expect) {
            check.passed = false;
            std::ostringstream s;
            s << std::hex << "ctr[0]=0x" << c.ctr[0] << " got[0]=0x" << got[0] << " want[0]=0x"
              << c.expect[0];
            check.detail = s.str();
            return check;
        }
    }
    return check;
}

VerifyCheck projection_geometry(long cases) {
    VerifyCheck check{"projection_geometry", true, ""};
    auto rng = make_rng(1);
    double worst = 0.0;
    for (long i = 0; i < cases; ++i) {
        const int dim = 1 + static_cast<int>(rng.uniform() * 3.0);
        ConvexDomain dom = ConvexDomain::full_space(dim);
        const double which = rng.uniform();
        if (which < 0.4) {
            Vec lo(dim), hi(dim);
            for (int j = 0; j < dim; ++j) {
                const double a = 4.0 * rng.normal(), b = 4.0 * rng.normal();
                lo[j] = std::min(a, b);
                hi[j] = std::max(a, b) + 0.1;
            }
            dom = ConvexDomain::box(lo, hi);
        } else if (which < 0.7) {
            Vec c(dim);
            for (int j = 0; j < dim; ++j) c[j] = rng.normal();
            dom = ConvexDomain::ball(c, 0.5 + 2.0 * rng.uniform());
        } else {
            dom = ConvexDomain::simplex(dim);
        }
        Vec p(dim), q(dim);
        for (int j = 0; j < dim; ++j) {
            p[j] = 5.0 * rng.normal();
            q[j] = 5.0 * rng.normal();
        }
        const Vec pp = project(dom, p);
        const Vec qq = project(dom, q);
        const double idem = (project(dom, pp) - pp).norm();
        const double expand = (pp - qq).norm() - (p - q).norm();
        worst = std::max({worst, idem, expand});
        if (idem > 1e-12 || expand > 1e-12 || !dom.contains(pp, 1e-9)) {
            check.passed = false;
            check.detail = "case " + std::to_string(i) + ": p=" + vec_str(p) +
                           " idempotence_gap=" + std::to_string(idem) +
                           " expansion=" + std::to_string(expand);
            return check;
        }
    }
    check.detail = "worst deviation " + std::to_string(worst) + " over " +
                   std::to_string(cases) + " cases";
    return check;
}

VerifyCheck oracle_noise_moments() {
    VerifyCheck check{"oracle_noise_moments", true, ""};
    const TestProblem tp = make_problem("quad_sc");
    const Vec x = Vec::Constant(2, 0.7), y = Vec::Constant(2, -0.3);
    const Vec exact_x = tp.base.f_grad_x(x, y), exact_y = tp.base.f_grad_y(x, y);
    const long draws = 20000;
    for (const NoiseModel model : {NoiseModel::additive_gaussian, NoiseModel::additive_uniform}) {
        OracleConfig cfg;
        cfg.noise_f = 0.3;
        cfg.noise_model = model;
        double sum_sq = 0.0;
        Vec mean = Vec::Zero(4);
        for (long t = 0; t < draws; ++t) {
            const GradSample s = sample_grad_f(tp.base, x, y, cfg,
                                               {kVerifySeed, Stream::wy, 7, (uint32_t)t});
            Vec n(4);
            n << s.grad_x - exact_x, s.grad_y - exact_y;
            sum_sq += n.squaredNorm();
            mean += n;
        }
        const double second = sum_sq / draws;
        const double mean_norm = (mean / draws).norm();
        if (std::abs(second - 0.09) > 0.05 * 0.09 || mean_norm > 0.01) {
            check.passed = false;
            check.detail = std::string("model=") +
                           (model == NoiseModel::additive_gaussian ? "gaussian" : "uniform") +
                           " E|n|^2=" + std::to_string(second) +
                           " (want 0.09) |mean|=" + std::to_string(mean_norm);
            return check;
        }
    }
    check.detail = "gaussian and uniform second moments within 5% over 20000 draws";
    return check;
}

VerifyCheck paired_difference_exact() {
    VerifyCheck check{"paired_difference_exact", true, ""};
    const TestProblem tp = make_problem("quad_sc");
    OracleConfig cfg;
    cfg.noise_f = 0.5;
    cfg.noise_g = 0.5;
    const Vec x1 = Vec::Constant(2, 0.4), y1 = Vec::Constant(2, 0.9);
    const Vec x2 = Vec::Constant(2, -0.2), y2 = Vec::Constant(2, 0.1);
    double worst = 0.0;
    for (uint32_t t = 0; t < 50; ++t) {
        const auto [a, b] = sample_grad_g_paired(tp.base, x1, y1, x2, y2, cfg,
                                                 {kVerifySeed, Stream::x_gy, 3, t});
        const Vec want_x = tp.base.g_grad_x(x1, y1) - tp.base.g_grad_x(x2, y2);
        const Vec want_y = tp.base.g_grad_y(x1, y1) - tp.base.g_grad_y(x2, y2);
        worst = std::max({worst, (a.grad_x - b.grad_x - want_x).norm(),
                          (a.grad_y - b.grad_y - want_y).norm()});
    }
    if (worst > 1e-12) {
        check.passed = false;
        check.detail = "paired difference deviates from exact by " + std::to_string(worst);
    } else {
        check.detail = "paired differences exact to 1e-12 over 50 seeds";
    }
    return check;
}

VerifyCheck prox_contraction(long cases, double step_sign) {
    VerifyCheck check{"prox_contraction", true, ""};
    const TestProblem tp = make_problem("quad_sc");
    const double rho = tp.default_rho;
    const Mat a = (Mat(2, 2) << 1.0, 0.5, 0.0, 1.0).finished();
    auto rng = make_rng(2);
    double worst_margin = -1.0;
    for (long i = 0; i < cases; ++i) {
        Vec x(2), anchor(2), w(2);
        for (int j = 0; j < 2; ++j) {
            x[j] = 4.0 * rng.uniform() - 2.0;
            anchor[j] = 4.0 * rng.uniform() - 2.0;
            w[j] = 4.0 * rng.uniform() - 2.0;
        }
        const double sigma = std::pow(10.0, -4.0 * rng.uniform());
        const double gamma = rho * (0.05 + 0.9 * rng.uniform());
        // Closed-form prox point of sigma f + g anchored at `anchor`.
        const Vec w_star = (a * x + anchor / rho) / (1.0 + sigma + 1.0 / rho);
        const Vec grad = tp.base.h_sigma_grad_y(x, w, sigma);
        const Vec next =
            step_sign == 1.0
                ? prox_step_expression(tp.base.domain_y, w, anchor, gamma, rho, grad)
                : project(tp.base.domain_y,
                          w - step_sign * gamma * (grad + (w - anchor) / rho));
        const double before = (w - w_star).norm();
        if (before < 1e-9) continue;
        const double ratio = (next - w_star).norm() / before;
        const double bound = 1.0 - gamma / (4.0 * rho) + 1e-10;
        worst_margin = std::max(worst_margin, ratio - bound);
        if (ratio > bound) {
            check.passed = false;
            std::ostringstream s;
            s << "x=" << vec_str(x) << " anchor=" << vec_str(anchor) << " w=" << vec_str(w)
              << " sigma=" << sigma << " gamma=" << gamma << " ratio=" << ratio
              << " bound=" << bound;
            check.detail = s.str();
            return check;
        }
    }
    check.detail = "worst ratio-bound margin " + std::to_string(worst_margin) + " over " +
                   std::to_string(cases) + " configs";
    return check;
}

VerifyCheck hooks_vs_grid(long points) {
    VerifyCheck check{"testbed_hooks_vs_grid", true, ""};
    struct Entry {
        const char* name;
        double resolution;
    };
    const std::vector<Entry> entries = {{"bilinear_ll", 1e-3}, {"constrained_sc", 1e-3},
                                        {"box_active", 1e-2}};
    auto rng = make_rng(3);
    for (const Entry& e : entries) {
        const TestProblem tp = make_problem(e.name);
        for (long i = 0; i < points; ++i) {
            Vec x(tp.base.domain_x.dim());
            for (long j = 0; j < x.size(); ++j) x[j] = 4.0 * rng.uniform() - 2.0;
            x = project(tp.base.domain_x, x);
            for (const double sigma : {0.0, 0.05}) {
                const double hook = tp.base.extras.l_value(x, sigma);
                const double grid = grid_oracle(tp.base, x, sigma, e.resolution).l_value;
                if (std::abs(hook - grid) > 2.0 * e.resolution) {
                    check.passed = false;
                    std::ostringstream s;
                    s << e.name << " x=" << vec_str(x) << " sigma=" << sigma << " hook=" << hook
                      << " grid=" << grid;
                    check.detail = s.str();
                    return check;
                }
            }
        }
    }
    check.detail = "l hooks within 2x resolution of the grid on " + std::to_string(points) +
                   " points per problem";
    return check;
}

VerifyCheck psi_sigma_le_psi() {
    VerifyCheck check{"psi_sigma_below_psi", true, ""};
    auto rng = make_rng(4);
    for (const char* name :
         {"bilinear_ll", "constrained_sc", "quad_sc", "pl_multisol", "box_active"}) {
        const TestProblem tp = make_problem(name);
        for (long i = 0; i < 10; ++i) {
            Vec x(tp.base.domain_x.dim());
            for (long j = 0; j < x.size(); ++j) x[j] = 4.0 * rng.uniform() - 2.0;
            x = project(tp.base.domain_x, x);
            const double psi = eval_psi(tp.base, x);
            for (const double sigma : {1e-1, 1e-2, 1e-3}) {
                const double psi_s = eval_psi_sigma(tp.base, x, sigma);
                if (psi_s > psi + 1e-8) {
                    check.passed = false;
                    std::ostringstream s;
                    s << name << " x=" << vec_str(x) << " sigma=" << sigma << " psi_sigma=" << psi_s
                      << " psi=" << psi;
                    check.detail = s.str();
                    return check;
                }
            }
        }
    }
    check.detail = "psi_sigma <= psi + 1e-8 on 10 points x 3 sigmas per problem";
    return check;
}

VerifyCheck eb_ratio_pl() {
    VerifyCheck check{"eb_ratio_pl_multisol", true, ""};
    const TestProblem tp = make_problem("pl_multisol");
    const double rho = tp.default_rho;
    auto rng = make_rng(5);
    double worst = std::numeric_limits<double>::infinity();
    for (long i = 0; i < 20; ++i) {
        const Vec x = Vec::Constant(1, 4.0 * rng.uniform() - 2.0);
        std::vector<Vec> probes;
        for (int p = 0; p < 5; ++p) {
            Vec y(2);
            y << 3.0 * rng.normal(), 3.0 * rng.normal();
            probes.push_back(y);
        }
        for (const EbProbe& probe : eb_ratio(tp.base, x, 0.0, probes, rho)) {
            if (std::isfinite(probe.ratio)) worst = std::min(worst, probe.ratio);
        }
    }
    const double floor = 0.5 * *tp.base.extras.mu;
    check.passed = worst >= floor;
    check.detail = "min empirical ratio " + std::to_string(worst) + ", floor " +
                   std::to_string(floor);
    return check;
}

VerifyCheck schedule_presets() {
    VerifyCheck check{"schedule_presets", true, ""};
    const TestProblem tp = make_problem("quad_sc");
    const double rho = tp.default_rho;
    const auto expect = [&](SchedulePreset preset, double a, double b, double c, double s,
                            double n, double t, double m) {
        const Schedule sched = make_schedule(preset, rho, tp.base.constants);
        const ScheduleParams& p = sched.params();
        return p.a == a && p.b == b && p.c == c && p.s == s && p.n == n && p.t == t && p.m == m;
    };
    if (!expect(SchedulePreset::stoch_both, 0, 0, 4.0 / 3.0, 1.0 / 3.0, 0, 4.0 / 3.0, 4.0 / 3.0))
        check.detail = "stoch_both exponents wrong";
    else if (!expect(SchedulePreset::mom_both, 0.4, 0.4, 0.4, 0.2, 0.8, 0, 0))
        check.detail = "mom_both exponents wrong";
    else if (!expect(SchedulePreset::mom_det, 0, 0, 0, 1.0 / 3.0, 0, 0, 0))
        check.detail = "mom_det exponents wrong";
    else if (!expect(SchedulePreset::det, 0, 0, 0, 1.0 / 3.0, 0, 0, 0))
        check.detail = "det exponents wrong";
    else {
        // Construction-time structural checks hold for every preset.
        for (const auto preset :
             {SchedulePreset::det, SchedulePreset::stoch_upper, SchedulePreset::stoch_both,
              SchedulePreset::mom_det, SchedulePreset::mom_upper, SchedulePreset::mom_both}) {
            const Schedule sched = make_schedule(preset, rho, tp.base.constants);
            const ScheduleValues v = sched.at(0);
            if (!(static_cast<double>(v.T) * v.gamma < rho / 4.0 && v.beta <= 1.0 &&
                  v.alpha <= rho && v.eta == 1.0)) {
                check.detail = "k=0 structure violated for preset " + preset_name(preset);
                break;
            }
        }
    }
    check.passed = check.detail.empty();
    if (check.passed) check.detail = "all six presets load the documented exponents";
    return check;
}

VerifyCheck algorithm_equivalence(bool all_problems) {
    VerifyCheck check{"algorithm_equivalence", true, ""};
    const std::vector<const char*> names =
        all_problems
            ? std::vector<const char*>{"bilinear_ll", "constrained_sc", "quad_sc", "pl_multisol",
                                       "box_active"}
            : std::vector<const char*>{"quad_sc"};
    for (const char* name : names) {
        const TestProblem tp = make_problem(name);
        const double rho = tp.default_rho;
        ScheduleParams p;
        p.alpha0 = rho / 10.0;
        p.gamma0 = rho / 10.0;
        p.sigma0 = 0.05;
        p.s = 1.0 / 3.0;
        const Schedule sched(p, rho);
        const OracleConfig oracle;  // zero noise
        const Vec x0 = project(tp.base.domain_x, Vec::Ones(tp.base.domain_x.dim()));
        const Vec y0 = project(tp.base.domain_y, Vec::Zero(tp.base.domain_y.dim()));
        SolverState one = init_state(tp.base, x0, y0, y0);
        SolverState two = init_state(tp.base, x0, y0, y0);
        for (long k = 0; k < 100; ++k) {
            double_loop_step(tp.base, one, sched, oracle, 11);
            single_loop_step(tp.base, two, sched, oracle, 11);
            if (one.x != two.x || one.y != two.y || one.z != two.z || one.w_y != two.w_y ||
                one.w_z != two.w_z) {
                check.passed = false;
                check.detail = std::string(name) + " diverged at k=" + std::to_string(k) +
                               ": |x1-x2|=" + std::to_string((one.x - two.x).norm());
                return check;
            }
        }
    }
    check.detail = "trajectories bit-identical for 100 steps on " +
                   std::to_string(names.size()) + " problem(s)";
    return check;
}

VerifyCheck run_determinism() {
    VerifyCheck check{"run_determinism", true, ""};
    const TestProblem tp = make_problem("quad_sc");
    const Schedule sched =
        make_schedule(SchedulePreset::stoch_both, tp.default_rho, tp.base.constants, 1e-2, 30);
    OracleConfig oracle;
    oracle.noise_f = 0.1;
    oracle.noise_g = 0.1;
    RunOptions opts;
    opts.compute_psi = false;
    const RunResult a = run(tp.base, Algorithm::double_loop, sched, oracle, 30, 99, opts);
    const RunResult b = run(tp.base, Algorithm::double_loop, sched, oracle, 30, 99, opts);
    if (a.state.x != b.state.x || a.reports.size() != b.reports.size()) {
        check.passed = false;
        check.detail = "final states differ between identical runs";
        return check;
    }
    for (size_t i = 0; i < a.reports.size(); ++i) {
        if (a.reports[i].epsilon_level != b.reports[i].epsilon_level ||
            a.reports[i].potential != b.reports[i].potential) {
            check.passed = false;
            check.detail = "report " + std::to_string(i) + " differs between identical runs";
            return check;
        }
    }
    check.detail = "two seeded noisy runs agree bit for bit (30 steps)";
    return check;
}

VerifyCheck bilinear_negative_control() {
    VerifyCheck check{"bilinear_negative_control", true, ""};
    const TestProblem tp = make_problem("bilinear_ll");
    const Vec x0 = Vec::Zero(1);
    const LagrangianSnapshot snap = find_lagrangian_snapshot(tp.base, x0, 0.0, Vec::Zero(1));
    const ImageCheck image = image_condition_check(tp.base, x0, 0.0, snap);
    if (image.holds) {
        check.passed = false;
        check.detail = "image condition unexpectedly holds at the degenerate point";
        return check;
    }
    // Scaled residuals at a fixed candidate blow up as sigma decreases.
    const Vec x = Vec::Constant(1, 0.02);
    const Vec y = Vec::Zero(1);
    const double rho = tp.default_rho;
    const double eps_hi = stationarity(tp.base, x, y, y, 1e-1, rho).epsilon_level;
    const double eps_lo = stationarity(tp.base, x, y, y, 1e-3, rho).epsilon_level;
    if (eps_lo < 5.0 * eps_hi) {
        check.passed = false;
        check.detail = "expected diverging scaled residuals: eps(1e-3)=" + std::to_string(eps_lo) +
                       " vs eps(1e-1)=" + std::to_string(eps_hi);
        return check;
    }
    check.detail = "image condition fails and eps_level grows " +
                   std::to_string(eps_lo / eps_hi) + "x from sigma 1e-1 to 1e-3";
    return check;
}

VerifyCheck potential_descent() {
    VerifyCheck check{"potential_descent", true, ""};
    const TestProblem tp = make_problem("quad_sc");
    const double rho = tp.default_rho;
    Schedule sched = [&] {
        ScheduleParams p = make_schedule(SchedulePreset::det, rho, tp.base.constants, 1e-2, 1000)
                               .params();
        p.alpha0 = rho;  // the descent window needs the full stable outer step
        return Schedule(p, rho);
    }();
    const RunResult result = run(tp.base, Algorithm::double_loop, sched, OracleConfig{}, 1000, 1);
    const double c_f = *tp.base.constants.C_f;
    double positive_sum = 0.0;
    for (size_t i = 0; i < result.reports.size(); ++i) {
        if (result.reports[i].potential < -c_f) {
            check.passed = false;
            check.detail = "potential " + std::to_string(result.reports[i].potential) +
                           " fell below -C_f at row " + std::to_string(i);
            return check;
        }
        if (i > 0)
            positive_sum +=
                std::max(0.0, result.reports[i].potential - result.reports[i - 1].potential);
    }
    const double budget = 20.0 * c_f * std::log(1000.0);
    if (positive_sum > budget) {
        check.passed = false;
        check.detail = "positive increments " + std::to_string(positive_sum) + " exceed budget " +
                       std::to_string(budget);
        return check;
    }
    check.detail = "positive increments " + std::to_string(positive_sum) + " within budget " +
                   std::to_string(budget) + ", floor respected";
    return check;
}

VerifyCheck lemma_bridge() {
    VerifyCheck check{"gradient_bound_bridge", true, ""};
    const TestProblem tp = make_problem("quad_sc");
    const double rho = tp.default_rho;
    Schedule sched = [&] {
        ScheduleParams p = make_schedule(SchedulePreset::det, rho, tp.base.constants, 1e-2, 2000)
                               .params();
        p.alpha0 = rho;
        return Schedule(p, rho);
    }();
    RunOptions opts;
    opts.metrics_stride = 2000;
    opts.compute_potential = false;
    const RunResult result = run(tp.base, Algorithm::double_loop, sched, OracleConfig{}, 2000, 1,
                                 opts);
    const double sigma = sched.at(result.state.k).sigma;
    const double eps = result.reports.back().epsilon_level;
    const Vec grad = tp.base.extras.grad_psi(result.state.x);  // grad psi = grad psi_sigma limit
    const double psi_sigma_grad =
        grad_psi_sigma_fd(tp.base, result.state.x, sigma, sigma / 100.0).norm();
    const double bound = (1.0 + *tp.base.constants.l_g1 / *tp.base.extras.mu) * eps * 1.1;
    if (psi_sigma_grad > bound) {
        check.passed = false;
        check.detail = "|grad psi_sigma|=" + std::to_string(psi_sigma_grad) + " exceeds bound " +
                       std::to_string(bound) + " (analytic |grad psi|=" +
                       std::to_string(grad.norm()) + ")";
        return check;
    }
    check.detail = "|grad psi_sigma|=" + std::to_string(psi_sigma_grad) + " <= " +
                   std::to_string(bound);
    return check;
}

VerifyCheck kkt_at_converged_iterate() {
    VerifyCheck check{"kkt_residuals_converged", true, ""};
    const TestProblem tp = make_problem("quad_sc");
    const double rho = tp.default_rho;
    Schedule sched = [&] {
        ScheduleParams p = make_schedule(SchedulePreset::det, rho, tp.base.constants, 1e-2, 2000)
                               .params();
        p.alpha0 = rho;
        return Schedule(p, rho);
    }();
    RunOptions opts;
    opts.metrics_stride = 2000;
    opts.compute_potential = false;
    const RunResult result = run(tp.base, Algorithm::double_loop, sched, OracleConfig{}, 2000, 1,
                                 opts);
    const double sigma = sched.at(result.state.k).sigma;
    const double eps = result.reports.back().epsilon_level;
    const KktResiduals kkt =
        kkt_residuals_pcon(tp.base, result.state.x, result.state.w_y, sigma, rho);
    const double bound = 10.0 * (eps + sigma);
    const double worst =
        std::max({kkt.upper_stationarity, kkt.lower_stationarity, kkt.value_feasibility});
    if (worst > bound) {
        check.passed = false;
        check.detail = "residuals (" + std::to_string(kkt.upper_stationarity) + ", " +
                       std::to_string(kkt.lower_stationarity) + ", " +
                       std::to_string(kkt.value_feasibility) + ") exceed 10(eps+sigma)=" +
                       std::to_string(bound);
        return check;
    }
    check.detail = "worst residual " + std::to_string(worst) + " within " + std::to_string(bound);
    return check;
}

VerifyCheck stochastic_ordering() {
    VerifyCheck check{"stochastic_rate_ordering", true, ""};
    const TestProblem tp = make_problem("quad_sc");
    const double rho = tp.default_rho;
    OracleConfig oracle;
    oracle.noise_f = 0.1;
    oracle.noise_g = 0.1;
    const long budget = 1000000;

    long k_double = 0, used = 0;
    {
        const Schedule probe = make_schedule(SchedulePreset::stoch_both, rho, tp.base.constants);
        while (true) {
            const ScheduleValues v = probe.at(k_double);
            const long cost = 3 * v.T + 3 * v.M;
            if (used + cost > budget) break;
            used += cost;
            ++k_double;
        }
    }
    const long k_single = (budget + 6) / 12;  // 12K - 6 <= budget

    std::vector<double> eps_double, eps_single;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        RunOptions opts;
        opts.metrics_stride = std::max(k_double, k_single);
        opts.compute_potential = false;
        opts.compute_psi = false;
        const Schedule sd =
            make_schedule(SchedulePreset::stoch_both, rho, tp.base.constants, 1e-2, k_double);
        eps_double.push_back(run(tp.base, Algorithm::double_loop, sd, oracle, k_double, seed, opts)
                                 .reports.back()
                                 .epsilon_level);
        const Schedule ss =
            make_schedule(SchedulePreset::mom_both, rho, tp.base.constants, 1e-2, k_single);
        eps_single.push_back(run(tp.base, Algorithm::single_loop, ss, oracle, k_single, seed, opts)
                                 .reports.back()
                                 .epsilon_level);
    }
    std::sort(eps_double.begin(), eps_double.end());
    std::sort(eps_single.begin(), eps_single.end());
    const double med_double = 0.5 * (eps_double[9] + eps_double[10]);
    const double med_single = 0.5 * (eps_single[9] + eps_single[10]);
    check.passed = med_single <= med_double;
    check.detail = "median eps: momentum " + std::to_string(med_single) + " vs double-loop " +
                   std::to_string(med_double) + " at 1e6 oracle calls (K=" +
                   std::to_string(k_single) + "/" + std::to_string(k_double) + ")";
    return check;
}

}  // namespace

std::vector<VerifyCheck> run_verification(const VerifyOptions& options) {
    const bool full = options.level == VerifyLevel::full;
    std::vector<VerifyCheck> checks;
    checks.push_back(philox_known_answers());
    checks.push_back(projection_geometry(full ? 1000 : 200));
    checks.push_back(oracle_noise_moments());
    checks.push_back(paired_difference_exact());
    checks.push_back(prox_contraction(full ? 1000 : 200, options.step_sign));
    checks.push_back(hooks_vs_grid(full ? 50 : 5));
    checks.push_back(psi_sigma_le_psi());
    checks.push_back(eb_ratio_pl());
    checks.push_back(schedule_presets());
    checks.push_back(algorithm_equivalence(full));
    checks.push_back(run_determinism());
    checks.push_back(bilinear_negative_control());
    if (full) {
        checks.push_back(potential_descent());
        checks.push_back(lemma_bridge());
        checks.push_back(kkt_at_converged_iterate());
        checks.push_back(stochastic_ordering());
    }
    return checks;
}

}  // namespace bipen
