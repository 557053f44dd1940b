#include "bipen/solvers.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bipen/errors.hpp"
#include "bipen/landscape.hpp"
#include "bipen/prox.hpp"

namespace bipen {

namespace {

double decay(double base, double exponent, long k, long k0) {
    return base * std::pow(static_cast<double>(k + k0), -exponent);
}

long ceil_pow(double exponent, long k, long k0) {
    if (exponent == 0.0) return 1;
    return static_cast<long>(std::ceil(std::pow(static_cast<double>(k + k0), exponent)));
}

[[noreturn]] void throw_state_dump(const char* where, const SolverState& state) {
    std::ostringstream msg;
    msg << "non-finite iterate in " << where << " at k=" << state.k << ": |x|=" << state.x.norm()
        << " |y|=" << state.y.norm() << " |z|=" << state.z.norm() << " |w_y|=" << state.w_y.norm()
        << " |w_z|=" << state.w_z.norm();
    throw numerical_error(msg.str());
}

void check_finite(const Vec& v, const char* where, const SolverState& state) {
    if (!v.allFinite()) throw_state_dump(where, state);
}

// High-accuracy prox point with a certified residual; used by all
// diagnostics so stationarity and potential agree bit for bit.
ProxResult certified_prox(const BilevelProblem& problem, const Vec& x, double rho, double sigma,
                          const Vec& anchor, double accuracy) {
    ProxSpec spec;
    spec.rho = rho;
    spec.sigma = sigma;
    spec.anchor = anchor;
    spec.inner_steps = 1000000;
    spec.inner_step_size = stable_inner_step(problem, rho, sigma);
    spec.tolerance = accuracy;
    ProxResult result = prox_solve(problem, x, spec, project(problem.domain_y, anchor));
    if (result.residual > accuracy)
        throw numerical_error("diagnostic prox solve missed the requested accuracy",
                              result.residual);
    return result;
}

double lower_value(const BilevelProblem& problem, const Vec& x, double accuracy) {
    if (problem.extras.l_value) return problem.extras.l_value(x, 0.0);
    return min_h_sigma(problem, x, 0.0, std::max(accuracy, 1e-10));
}

}  // namespace

Schedule::Schedule(ScheduleParams params, double rho) : params_(params), rho_(rho) {
    if (rho <= 0.0) throw config_error("rho must be positive");
    if (params.alpha0 <= 0.0 || params.gamma0 <= 0.0 || params.sigma0 <= 0.0)
        throw config_error("schedule constants must be positive");
    if (params.beta0 <= 0.0 || params.beta0 > 1.0)
        throw config_error("beta0 must lie in (0, 1]");
    if (params.c_eta <= 0.0) throw config_error("c_eta must be positive");
    if (params.k0 < 1) throw config_error("k0 must be a positive integer");
    if (params.a < 0 || params.b < 0 || params.c < 0 || params.s < 0 || params.n < 0 ||
        params.t < 0 || params.m < 0)
        throw config_error("schedule exponents must be nonnegative");
    if (params.pot_c < 4.0) throw config_error("potential constant C must be at least 4");
    const ScheduleValues first = at(0);
    if (first.alpha > rho) throw config_error("alpha_0 must not exceed rho");
    if (static_cast<double>(first.T) * first.gamma >= rho / 4.0)
        throw config_error("T_0 gamma_0 must stay below rho/4");
}

ScheduleValues Schedule::at(long k) const {
    if (k < 0) throw std::invalid_argument("schedule index must be nonnegative");
    ScheduleValues v;
    v.alpha = decay(params_.alpha0, params_.a, k, params_.k0);
    v.beta = decay(params_.beta0, params_.b, k, params_.k0);
    v.gamma = decay(params_.gamma0, params_.c, k, params_.k0);
    v.sigma = decay(params_.sigma0, params_.s, k, params_.k0);
    v.eta = k == 0 ? 1.0 : std::min(1.0, decay(params_.c_eta, params_.n, k, params_.k0));
    v.T = ceil_pow(params_.t, k, params_.k0);
    v.M = ceil_pow(params_.m, k, params_.k0);
    return v;
}

Schedule make_schedule(SchedulePreset preset, double rho, const ProblemConstants& constants,
                       double target_eps, long horizon) {
    if (target_eps <= 0.0) throw std::invalid_argument("target_eps must be positive");
    if (horizon < 1) throw std::invalid_argument("horizon must be positive");
    if (constants.l_g1 && rho * *constants.l_g1 >= 0.25)
        throw config_error("rho exceeds the envelope smoothness range 1/(4 l_g1)");
    ScheduleParams p;
    p.alpha0 = rho / 10.0;
    p.beta0 = 0.5;
    p.gamma0 = rho / 10.0;
    p.k0 = 10;
    switch (preset) {
        case SchedulePreset::det:
            p.s = 1.0 / 3.0;
            break;
        case SchedulePreset::stoch_upper:
            p.s = 1.0 / 3.0;
            p.c = p.t = p.m = 2.0 / 3.0;
            break;
        case SchedulePreset::stoch_both:
            p.s = 1.0 / 3.0;
            p.c = p.t = p.m = 4.0 / 3.0;
            break;
        case SchedulePreset::mom_det:
            p.s = 1.0 / 3.0;
            p.n = 0.0;
            break;
        case SchedulePreset::mom_upper:
            p.a = p.b = p.c = 1.0 / 4.0;
            p.s = 1.0 / 4.0;
            p.n = 1.0 / 2.0;
            break;
        case SchedulePreset::mom_both:
            p.a = p.b = p.c = 2.0 / 5.0;
            p.s = 1.0 / 5.0;
            p.n = 4.0 / 5.0;
            break;
        default:
            throw std::invalid_argument("unknown schedule preset");
    }
    p.sigma0 = target_eps * std::pow(static_cast<double>(horizon + p.k0), p.s);
    return Schedule(p, rho);
}

SchedulePreset parse_preset(const std::string& name) {
    if (name == "det") return SchedulePreset::det;
    if (name == "stoch_upper") return SchedulePreset::stoch_upper;
    if (name == "stoch_both") return SchedulePreset::stoch_both;
    if (name == "mom_det") return SchedulePreset::mom_det;
    if (name == "mom_upper") return SchedulePreset::mom_upper;
    if (name == "mom_both") return SchedulePreset::mom_both;
    throw std::invalid_argument("unknown schedule preset: " + name);
}

std::string preset_name(SchedulePreset preset) {
    switch (preset) {
        case SchedulePreset::det: return "det";
        case SchedulePreset::stoch_upper: return "stoch_upper";
        case SchedulePreset::stoch_both: return "stoch_both";
        case SchedulePreset::mom_det: return "mom_det";
        case SchedulePreset::mom_upper: return "mom_upper";
        case SchedulePreset::mom_both: return "mom_both";
    }
    throw std::invalid_argument("unknown schedule preset");
}

SolverState init_state(const BilevelProblem& problem, const Vec& x0, const Vec& y0,
                       const Vec& z0) {
    if (x0.size() != problem.domain_x.dim() || y0.size() != problem.domain_y.dim() ||
        z0.size() != problem.domain_y.dim())
        throw std::invalid_argument("init point dimension mismatch");
    if (!problem.domain_x.contains(x0, 1e-10) || !problem.domain_y.contains(y0, 1e-10) ||
        !problem.domain_y.contains(z0, 1e-10))
        throw std::invalid_argument("init point is not feasible");
    SolverState state;
    state.x = x0;
    state.y = y0;
    state.z = z0;
    state.w_y = y0;
    state.w_z = z0;
    return state;
}

void double_loop_step(const BilevelProblem& problem, SolverState& state,
                      const Schedule& schedule, const OracleConfig& oracle, uint64_t run_seed) {
    const ScheduleValues v = schedule.at(state.k);
    const double rho = schedule.rho();
    if (v.gamma >= rho) throw config_error("inner step gamma_k must stay below rho");
    const auto k32 = static_cast<uint32_t>(state.k);

    // Inner loops: T_k projected steps toward the prox points anchored at y, z.
    Vec u = state.w_y;
    Vec w = state.w_z;
    for (long t = 0; t < v.T; ++t) {
        const SeedPath path{run_seed, Stream::wy, k32, static_cast<uint32_t>(t)};
        const GradSample gf = sample_grad_f(problem, state.x, u, oracle, path);
        const GradSample gg = sample_grad_g(problem, state.x, u, oracle, path);
        u = prox_step_expression(problem.domain_y, u, state.y, v.gamma, rho,
                                 v.sigma * gf.grad_y + gg.grad_y);

        const SeedPath path_z{run_seed, Stream::wz, k32, static_cast<uint32_t>(t)};
        const GradSample gz = sample_grad_g(problem, state.x, w, oracle, path_z);
        w = prox_step_expression(problem.domain_y, w, state.z, v.gamma, rho, gz.grad_y);
    }
    state.oracle_calls.wy += 2 * v.T;
    state.oracle_calls.wz += v.T;
    check_finite(u, "double_loop_step (w_y)", state);
    check_finite(w, "double_loop_step (w_z)", state);

    const Vec y_next = (1.0 - v.beta) * state.y + v.beta * u;
    const Vec z_next = (1.0 - v.beta) * state.z + v.beta * w;

    // Outer step: batch-averaged envelope-difference gradient in x.
    Vec dir = Vec::Zero(state.x.size());
    for (long m = 0; m < v.M; ++m) {
        const auto m32 = static_cast<uint32_t>(m);
        const GradSample gf = sample_grad_f(problem, state.x, u, oracle,
                                            {run_seed, Stream::x_f, k32, m32});
        const GradSample gy = sample_grad_g(problem, state.x, u, oracle,
                                            {run_seed, Stream::x_gy, k32, m32});
        const GradSample gz = sample_grad_g(problem, state.x, w, oracle,
                                            {run_seed, Stream::x_gz, k32, m32});
        dir += v.sigma * gf.grad_x + gy.grad_x - gz.grad_x;
    }
    dir /= static_cast<double>(v.M);
    state.oracle_calls.x_f += v.M;
    state.oracle_calls.x_gy += v.M;
    state.oracle_calls.x_gz += v.M;

    const Vec x_next = project(problem.domain_x, state.x - v.alpha * dir);
    check_finite(x_next, "double_loop_step (x)", state);

    state.x_prev = state.x;
    state.w_y_prev = state.w_y;
    state.w_z_prev = state.w_z;
    state.x = x_next;
    state.y = y_next;
    state.z = z_next;
    state.w_y = u;
    state.w_z = w;
    state.sigma_k = v.sigma;
    state.gamma_k = v.gamma;
    state.k += 1;
}

void single_loop_step(const BilevelProblem& problem, SolverState& state,
                      const Schedule& schedule, const OracleConfig& oracle, uint64_t run_seed) {
    if (!oracle.mean_squared_smooth)
        throw config_error("the momentum method requires a mean-squared smooth oracle");
    const ScheduleValues v = schedule.at(state.k);
    const double rho = schedule.rho();
    if (v.gamma >= rho) throw config_error("inner step gamma_k must stay below rho");
    const bool fresh = v.eta >= 1.0 || state.est_f_wy.size() == 0;
    const double carry = 1.0 - v.eta;
    const auto k32 = static_cast<uint32_t>(state.k);

    // Phase 1: refresh the w-direction estimators at (x_k, w_k), paired with
    // the previous points under the same seed.
    {
        const SeedPath path{run_seed, Stream::wy, k32, 0};
        if (fresh) {
            state.est_f_wy = sample_grad_f(problem, state.x, state.w_y, oracle, path).grad_y;
            state.est_g_wy = sample_grad_g(problem, state.x, state.w_y, oracle, path).grad_y;
            state.oracle_calls.wy += 2;
        } else {
            const auto [f_new, f_old] = sample_grad_f_paired(problem, state.x, state.w_y,
                                                             state.x_prev, state.w_y_prev,
                                                             oracle, path);
            const auto [g_new, g_old] = sample_grad_g_paired(problem, state.x, state.w_y,
                                                             state.x_prev, state.w_y_prev,
                                                             oracle, path);
            state.est_f_wy = f_new.grad_y + carry * (state.est_f_wy - f_old.grad_y);
            state.est_g_wy = g_new.grad_y + carry * (state.est_g_wy - g_old.grad_y);
            state.oracle_calls.wy += 4;
        }
        const SeedPath path_z{run_seed, Stream::wz, k32, 0};
        if (fresh) {
            state.est_g_wz = sample_grad_g(problem, state.x, state.w_z, oracle, path_z).grad_y;
            state.oracle_calls.wz += 1;
        } else {
            const auto [g_new, g_old] = sample_grad_g_paired(problem, state.x, state.w_z,
                                                             state.x_prev, state.w_z_prev,
                                                             oracle, path_z);
            state.est_g_wz = g_new.grad_y + carry * (state.est_g_wz - g_old.grad_y);
            state.oracle_calls.wz += 2;
        }
    }

    // Phase 2: single inner steps and smoothing.
    const Vec w_y_next = prox_step_expression(problem.domain_y, state.w_y, state.y, v.gamma, rho,
                                              v.sigma * state.est_f_wy + state.est_g_wy);
    const Vec w_z_next = prox_step_expression(problem.domain_y, state.w_z, state.z, v.gamma, rho,
                                              state.est_g_wz);
    check_finite(w_y_next, "single_loop_step (w_y)", state);
    check_finite(w_z_next, "single_loop_step (w_z)", state);
    const Vec y_next = (1.0 - v.beta) * state.y + v.beta * w_y_next;
    const Vec z_next = (1.0 - v.beta) * state.z + v.beta * w_z_next;

    // Phase 3: refresh the x-direction estimators at the fresh w points; the
    // paired old evaluation reuses the previous fresh points (x_{k-1}, w_k).
    {
        const SeedPath path{run_seed, Stream::x_f, k32, 0};
        const SeedPath path_gy{run_seed, Stream::x_gy, k32, 0};
        const SeedPath path_gz{run_seed, Stream::x_gz, k32, 0};
        if (fresh) {
            state.est_f_x = sample_grad_f(problem, state.x, w_y_next, oracle, path).grad_x;
            state.est_g_xy = sample_grad_g(problem, state.x, w_y_next, oracle, path_gy).grad_x;
            state.est_g_xz = sample_grad_g(problem, state.x, w_z_next, oracle, path_gz).grad_x;
            state.oracle_calls.x_f += 1;
            state.oracle_calls.x_gy += 1;
            state.oracle_calls.x_gz += 1;
        } else {
            const auto [f_new, f_old] = sample_grad_f_paired(problem, state.x, w_y_next,
                                                             state.x_prev, state.w_y, oracle,
                                                             path);
            const auto [gy_new, gy_old] = sample_grad_g_paired(problem, state.x, w_y_next,
                                                               state.x_prev, state.w_y, oracle,
                                                               path_gy);
            const auto [gz_new, gz_old] = sample_grad_g_paired(problem, state.x, w_z_next,
                                                               state.x_prev, state.w_z, oracle,
                                                               path_gz);
            state.est_f_x = f_new.grad_x + carry * (state.est_f_x - f_old.grad_x);
            state.est_g_xy = gy_new.grad_x + carry * (state.est_g_xy - gy_old.grad_x);
            state.est_g_xz = gz_new.grad_x + carry * (state.est_g_xz - gz_old.grad_x);
            state.oracle_calls.x_f += 2;
            state.oracle_calls.x_gy += 2;
            state.oracle_calls.x_gz += 2;
        }
    }

    const Vec dir = v.sigma * state.est_f_x + state.est_g_xy - state.est_g_xz;
    const Vec x_next = project(problem.domain_x, state.x - v.alpha * dir);
    check_finite(x_next, "single_loop_step (x)", state);

    state.x_prev = state.x;
    state.w_y_prev = state.w_y;
    state.w_z_prev = state.w_z;
    state.x = x_next;
    state.y = y_next;
    state.z = z_next;
    state.w_y = w_y_next;
    state.w_z = w_z_next;
    state.sigma_k = v.sigma;
    state.gamma_k = v.gamma;
    state.k += 1;
}

StationarityReport stationarity(const BilevelProblem& problem, const Vec& x, const Vec& y,
                                const Vec& z, double sigma, double rho, double accuracy) {
    if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");
    if (rho <= 0.0) throw std::invalid_argument("rho must be positive");
    const ProxResult py = certified_prox(problem, x, rho, sigma, y, accuracy);
    const ProxResult pz = certified_prox(problem, x, rho, 0.0, z, accuracy);

    StationarityReport report;
    report.delta_y_norm = (y - py.w).norm() / rho;
    report.delta_z_norm = (z - pz.w).norm() / rho;
    const Vec v = problem.h_sigma_grad_x(x, py.w, sigma) - problem.g_grad_x(x, pz.w);
    const Vec probe = project(problem.domain_x, x - rho * v);
    report.delta_x_norm = (x - probe).norm() / rho;
    report.epsilon_level =
        std::max({report.delta_x_norm, report.delta_y_norm, report.delta_z_norm}) / sigma;
    return report;
}

double potential(const BilevelProblem& problem, const SolverState& state,
                 const Schedule& schedule, PotentialVariant variant, double accuracy) {
    const ScheduleValues v = schedule.at(state.k);
    const double sigma = v.sigma;
    const double rho = schedule.rho();
    const ProxResult py = certified_prox(problem, state.x, rho, sigma, state.y, accuracy);
    const ProxResult pz = certified_prox(problem, state.x, rho, 0.0, state.z, accuracy);

    const double h_env = problem.h_sigma(state.x, py.w, sigma) +
                         (py.w - state.y).squaredNorm() / (2.0 * rho);
    const double g_env =
        problem.g(state.x, pz.w) + (pz.w - state.z).squaredNorm() / (2.0 * rho);
    const double g_star = lower_value(problem, state.x, accuracy);

    const ScheduleParams& p = schedule.params();
    double value = (h_env - g_env) / sigma + (p.pot_c / sigma) * (g_env - g_star);

    const double w_err =
        (state.w_y - py.w).squaredNorm() + (state.w_z - pz.w).squaredNorm();
    if (variant == PotentialVariant::double_loop) {
        const double lambda = static_cast<double>(v.T) * v.gamma / (4.0 * rho);
        value += p.pot_c_w * lambda / (sigma * rho) * w_err;
        return value;
    }

    value += p.pot_c_w / (sigma * rho) * w_err;
    if (state.k >= 1 && state.est_f_wy.size() > 0) {
        // Estimator errors against exact gradients at the points the tracks
        // were formed at during the last completed step (penalty sigma_k).
        const double s = state.sigma_k;
        const Vec e_wy = s * state.est_f_wy + state.est_g_wy -
                         (s * problem.f_grad_y(state.x_prev, state.w_y_prev) +
                          problem.g_grad_y(state.x_prev, state.w_y_prev));
        const Vec e_wz = state.est_g_wz - problem.g_grad_y(state.x_prev, state.w_z_prev);
        const Vec e_x = s * state.est_f_x + state.est_g_xy - state.est_g_xz -
                        (s * problem.f_grad_x(state.x_prev, state.w_y) +
                         problem.g_grad_x(state.x_prev, state.w_y) -
                         problem.g_grad_x(state.x_prev, state.w_z));
        value += p.pot_c_eta * rho * rho / (sigma * state.gamma_k) *
                 (e_x.squaredNorm() + e_wy.squaredNorm() + e_wz.squaredNorm());
    }
    return value;
}

RunResult run(const BilevelProblem& problem, Algorithm algorithm, const Schedule& schedule,
              const OracleConfig& oracle, long K, uint64_t run_seed,
              const RunOptions& options) {
    if (K < 1) throw std::invalid_argument("K must be at least 1");
    if (options.metrics_stride < 1) throw std::invalid_argument("metrics_stride must be positive");

    const Vec x0 = options.x0 ? *options.x0
                              : project(problem.domain_x, Vec::Ones(problem.domain_x.dim()));
    const Vec y0 = options.y0 ? *options.y0
                              : project(problem.domain_y, Vec::Zero(problem.domain_y.dim()));
    const Vec z0 = options.z0 ? *options.z0 : y0;

    RunResult result;
    result.state = init_state(problem, x0, y0, z0);
    const PotentialVariant variant = algorithm == Algorithm::double_loop
                                         ? PotentialVariant::double_loop
                                         : PotentialVariant::momentum;

    const auto report_boundary = [&](const SolverState& state) {
        const ScheduleValues vals = schedule.at(state.k);
        StationarityReport report = stationarity(problem, state.x, state.y, state.z, vals.sigma,
                                                 schedule.rho(), options.diag_accuracy);
        if (options.compute_potential)
            report.potential = potential(problem, state, schedule, variant,
                                         options.diag_accuracy);
        if (options.compute_psi && problem.extras.l_value)
            report.psi_sigma = eval_psi_sigma(problem, state.x, vals.sigma);
        result.report_steps.push_back(state.k);
        result.reports.push_back(report);
        if (options.on_report) options.on_report(state, vals, report);
    };

    report_boundary(result.state);
    for (long k = 0; k < K; ++k) {
        if (algorithm == Algorithm::double_loop)
            double_loop_step(problem, result.state, schedule, oracle, run_seed);
        else
            single_loop_step(problem, result.state, schedule, oracle, run_seed);
        if (result.state.k % options.metrics_stride == 0 || result.state.k == K)
            report_boundary(result.state);
    }
    return result;
}

}  // namespace bipen
