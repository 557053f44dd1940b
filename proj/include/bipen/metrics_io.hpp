#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace bipen {

// One trace record per iterate boundary: schedule values at index k, the
// stationarity diagnostics of the state, and cumulative oracle usage.
struct MetricRow {
    long k = 0;
    double sigma = 0.0, alpha = 0.0, beta = 0.0, gamma = 0.0, eta = 1.0;
    long T = 1, M = 1;
    double delta_x = 0.0, delta_y = 0.0, delta_z = 0.0;
    double eps_level = 0.0;
    std::optional<double> potential;
    std::optional<double> psi_sigma;
    long oracle_calls = 0;
    double wall_ms = 0.0;
};

// CSV serialization. Layout: a `# schema=1` comment line, the fixed header
// `k,sigma,alpha,beta,gamma,eta,T,M,delta_x,delta_y,delta_z,eps_level,potential,psi_sigma,oracle_calls,wall_ms`,
// then one row per record. Reals carry 17 significant digits so reading a
// written trace reproduces every value bit for bit; absent optionals are
// empty fields; line endings are LF.
void write_trace(const std::vector<MetricRow>& rows, const std::string& path);
std::vector<MetricRow> read_trace(const std::string& path);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 1.0;
};

// Least-squares fit of log(min-so-far of the column) against log k over rows
// with k in [k_min, k_max]. The running minimum starts at the first trace row
// regardless of the window. Needs at least 10 rows in the window and positive
// column values; column names are the CSV header names.
RateFit fit_rate(const std::vector<MetricRow>& rows, const std::string& column, long k_min = 1,
                 long k_max = std::numeric_limits<long>::max());

}  // namespace bipen
