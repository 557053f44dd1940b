#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bipen/core.hpp"
#include "bipen/oracles.hpp"

namespace bipen {

enum class SchedulePreset { det, stoch_upper, stoch_both, mom_det, mom_upper, mom_both };
enum class Algorithm { double_loop, single_loop };
enum class PotentialVariant { double_loop, momentum };

// Polynomial step-size schedule:
//   alpha_k = alpha0 (k+k0)^-a     beta_k  = beta0 (k+k0)^-b
//   gamma_k = gamma0 (k+k0)^-c     sigma_k = sigma0 (k+k0)^-s
//   eta_k   = min(1, c_eta (k+k0)^-n), with eta_0 = 1 always
//   T_k     = ceil((k+k0)^t)       M_k     = ceil((k+k0)^m)
struct ScheduleParams {
    double alpha0 = 0.0, beta0 = 0.5, gamma0 = 0.0, sigma0 = 0.0, c_eta = 1.0;
    long k0 = 10;
    double a = 0.0, b = 0.0, c = 0.0, s = 1.0 / 3.0, n = 0.0, t = 0.0, m = 0.0;
    // Potential-function constants (the update rules never read these).
    double pot_c = 4.0, pot_c_w = 1.0, pot_c_eta = 1.0;
};

struct ScheduleValues {
    double alpha = 0.0, beta = 0.0, gamma = 0.0, sigma = 0.0, eta = 1.0;
    long T = 1, M = 1;
};

class Schedule {
  public:
    // Checks the step-size structure at k = 0: T_0 gamma_0 < rho/4,
    // beta_0 <= 1, alpha_0 <= rho, all constants positive.
    Schedule(ScheduleParams params, double rho);

    ScheduleValues at(long k) const;
    const ScheduleParams& params() const { return params_; }
    double rho() const { return rho_; }

  private:
    ScheduleParams params_;
    double rho_;
};

// Preset exponent sets. sigma0 is sized so that sigma_K equals target_eps
// after horizon steps; the remaining constants use alpha0 = gamma0 = rho/10,
// beta0 = 1/2, k0 = 10.
Schedule make_schedule(SchedulePreset preset, double rho, const ProblemConstants& constants,
                       double target_eps = 1e-2, long horizon = 10000);

SchedulePreset parse_preset(const std::string& name);
std::string preset_name(SchedulePreset preset);

struct OracleCounters {
    long wy = 0, wz = 0, x_f = 0, x_gy = 0, x_gz = 0;
    long total() const { return wy + wz + x_f + x_gy + x_gz; }
};

// Iterate state shared by both methods. The est_* members are the momentum
// gradient tracks of the single-loop method (empty vectors for the double
// loop); f and g contributions are tracked separately so the penalty weight
// can change between iterations. x_prev / w_y_prev / w_z_prev hold the points
// the current estimators were formed against, and sigma_k / gamma_k the
// parameters of the most recent completed step.
struct SolverState {
    long k = 0;
    Vec x, y, z, w_y, w_z;
    Vec est_f_wy, est_g_wy, est_g_wz;  // grad_y tracks
    Vec est_f_x, est_g_xy, est_g_xz;   // grad_x tracks
    Vec x_prev, w_y_prev, w_z_prev;
    double sigma_k = 0.0, gamma_k = 0.0;
    OracleCounters oracle_calls;
};

SolverState init_state(const BilevelProblem& problem, const Vec& x0, const Vec& y0,
                       const Vec& z0);

struct StationarityReport {
    double delta_x_norm = 0.0, delta_y_norm = 0.0, delta_z_norm = 0.0;
    double potential = 0.0;  // filled by the runner, not by stationarity()
    std::optional<double> psi_sigma;
    double epsilon_level = 0.0;
};

// One outer iteration of the double-loop method: T_k inner projected steps
// for each of w_y (on sigma f + g) and w_z (on g), anchored at y_k / z_k,
// smoothing updates for y and z, then one projected x step averaging M_k
// samples of sigma grad_x f + grad_x g(., w_y) - grad_x g(., w_z).
void double_loop_step(const BilevelProblem& problem, SolverState& state,
                      const Schedule& schedule, const OracleConfig& oracle, uint64_t run_seed);

// One iteration of the momentum single-loop method. Requires a mean-squared
// smooth oracle. Estimators refresh fully whenever eta_k = 1 (always at
// k = 0), costing 6 gradient evaluations instead of 12.
void single_loop_step(const BilevelProblem& problem, SolverState& state,
                      const Schedule& schedule, const OracleConfig& oracle, uint64_t run_seed);

// Scaled prox residuals at (x, y, z): delta_y and delta_z compare the anchors
// against high-accuracy prox points of sigma f + g and of g; delta_x is the
// projected-gradient residual of the envelope difference with step rho.
// epsilon_level = max of the three norms divided by sigma.
StationarityReport stationarity(const BilevelProblem& problem, const Vec& x, const Vec& y,
                                const Vec& z, double sigma, double rho,
                                double accuracy = 1e-12);

// Potential value at the state's iterate boundary k, using sigma_k, the
// double-loop weight lambda_k = T_k gamma_k / (4 rho), or the momentum form
// whose estimator-error terms compare the stored tracks against exact
// gradients at the points they were formed at (zero before the first step).
double potential(const BilevelProblem& problem, const SolverState& state,
                 const Schedule& schedule, PotentialVariant variant, double accuracy = 1e-12);

struct RunOptions {
    std::optional<Vec> x0, y0, z0;  // defaults: project(X, ones), project(Y, zeros)
    long metrics_stride = 1;
    double diag_accuracy = 1e-12;
    bool compute_potential = true;
    bool compute_psi = true;  // only honored when the problem has value hooks
    std::function<void(const SolverState&, const ScheduleValues&, const StationarityReport&)>
        on_report;
};

struct RunResult {
    SolverState state;
    std::vector<long> report_steps;  // boundary indices, 0 = initial state
    std::vector<StationarityReport> reports;
};

// Runs K outer steps, reporting the initial boundary and then every
// metrics_stride-th boundary (always including K). Every iterate is logged;
// the random-index convention of the rate statements is applied by whoever
// consumes the trace.
RunResult run(const BilevelProblem& problem, Algorithm algorithm, const Schedule& schedule,
              const OracleConfig& oracle, long K, uint64_t run_seed,
              const RunOptions& options = {});

}  // namespace bipen
