#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bipen/verify.hpp"

namespace bipen {

// Flat key=value run configuration shared by the landscape and solve
// commands. Optionals override the preset-derived schedule constants.
struct RunConfig {
    std::string problem = "quad_sc";
    std::string algorithm = "double_loop";
    std::string preset = "det";
    std::optional<double> rho;  // default: the problem's documented rho
    long K = 1000;
    uint64_t seed = 0;
    double noise_f = 0.0;
    double noise_g = 0.0;
    std::string noise_model = "additive_gaussian";
    std::string output_path = "out";
    long replicas = 1;
    double target_eps = 1e-2;
    long metrics_stride = 1;

    // Landscape sweep range (first coordinate of x; other coordinates 0).
    double x_min = -1.0;
    double x_max = 1.0;
    long x_steps = 41;
    std::vector<double> sigmas = {1e-2};

    // Explicit schedule overrides.
    std::optional<double> alpha0, beta0, gamma0, sigma0, c_eta;
    std::optional<long> k0;
    std::optional<double> exp_a, exp_b, exp_c, exp_s, exp_n, exp_t, exp_m;
};

// One `key = value` per line, `#` comments, unknown keys rejected with the
// offending line number. parse_config(serialize_config(c)) == c.
RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& config);
RunConfig load_config_file(const std::string& path);

bool operator==(const RunConfig& a, const RunConfig& b);

// Exit codes across all commands: 0 success, 1 internal or verification
// failure, 2 configuration/usage problem, 3 numerical failure.
int cmd_landscape(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_solve(const RunConfig& config, long jobs, std::ostream& out, std::ostream& err);
int cmd_verify(VerifyLevel level, double step_sign, std::ostream& out, std::ostream& err);

}  // namespace bipen
