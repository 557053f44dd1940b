// Command line front end: landscape sweeps, solver runs, self-verification.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bipen/cli.hpp"
#include "bipen/errors.hpp"

namespace {

long jobs_from_env() {
    const char* env = std::getenv("BIPEN_JOBS");
    if (env == nullptr) return 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return 0;
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bipen: penalty-based bilevel optimization experiments"};
    app.require_subcommand(1);

    std::string landscape_config;
    std::string landscape_output;
    std::optional<double> x_min, x_max;
    std::optional<long> x_steps;
    std::vector<double> sigmas;
    CLI::App* landscape = app.add_subcommand(
        "landscape", "Sweep the penalized hyper-objective over a line in the upper domain");
    landscape->add_option("--config", landscape_config, "key = value run configuration file");
    landscape->add_option("--x-min", x_min, "override sweep lower end");
    landscape->add_option("--x-max", x_max, "override sweep upper end");
    landscape->add_option("--x-steps", x_steps, "override sweep point count");
    landscape->add_option("--sigmas", sigmas, "override penalty levels (comma separated)")
        ->delimiter(',');
    landscape->add_option("--output", landscape_output, "override the output directory");

    std::string solve_config;
    std::string solve_output;
    long jobs = jobs_from_env();
    CLI::App* solve = app.add_subcommand("solve", "Run a solver and write per-replica traces");
    solve->add_option("--config", solve_config, "key = value run configuration file");
    solve->add_option("--jobs", jobs, "worker threads (default: BIPEN_JOBS or all cores)");
    solve->add_option("--output", solve_output, "override the output directory");

    std::string level = "fast";
    double step_sign = 1.0;
    CLI::App* verify = app.add_subcommand("verify", "Run the built-in verification checks");
    verify->add_option("--level", level, "check depth")
        ->check(CLI::IsMember({"fast", "full"}));
    verify->add_option("--step-sign", step_sign, "internal test seam")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (landscape->parsed()) {
            bipen::RunConfig config =
                landscape_config.empty() ? bipen::RunConfig{}
                                         : bipen::load_config_file(landscape_config);
            if (x_min) config.x_min = *x_min;
            if (x_max) config.x_max = *x_max;
            if (x_steps) config.x_steps = *x_steps;
            if (!sigmas.empty()) config.sigmas = sigmas;
            if (!landscape_output.empty()) config.output_path = landscape_output;
            return bipen::cmd_landscape(config, std::cout, std::cerr);
        }
        if (solve->parsed()) {
            bipen::RunConfig config = solve_config.empty()
                                          ? bipen::RunConfig{}
                                          : bipen::load_config_file(solve_config);
            if (!solve_output.empty()) config.output_path = solve_output;
            return bipen::cmd_solve(config, jobs, std::cout, std::cerr);
        }
        const bipen::VerifyLevel verify_level =
            level == "full" ? bipen::VerifyLevel::full : bipen::VerifyLevel::fast;
        return bipen::cmd_verify(verify_level, step_sign, std::cout, std::cerr);
    } catch (const bipen::parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const bipen::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const bipen::numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
