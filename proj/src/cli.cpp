#include "bipen/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "bipen/errors.hpp"
#include "bipen/landscape.hpp"
#include "bipen/metrics_io.hpp"
#include "bipen/solvers.hpp"
#include "bipen/testbed.hpp"

namespace bipen {

namespace {

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

double to_real(const std::string& v, int line) {
    char* end = nullptr;
    const double r = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') throw parse_error("malformed real '" + v + "'", line);
    return r;
}

long to_int(const std::string& v, int line) {
    char* end = nullptr;
    const long r = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') throw parse_error("malformed integer '" + v + "'", line);
    return r;
}

uint64_t to_uint(const std::string& v, int line) {
    char* end = nullptr;
    const unsigned long long r = std::strtoull(v.c_str(), &end, 10);
    // strtoull silently negates "-3"; reject any sign character outright.
    if (end == v.c_str() || *end != '\0' || v.find_first_of("+-") != std::string::npos)
        throw parse_error("malformed unsigned integer '" + v + "'", line);
    return r;
}

std::vector<double> to_real_list(const std::string& v, int line) {
    std::vector<double> out;
    std::string current;
    std::istringstream in(v);
    while (std::getline(in, current, ',')) out.push_back(to_real(trim(current), line));
    if (out.empty()) throw parse_error("empty list", line);
    return out;
}

// Central exception -> exit-code mapping shared by all commands: usage and
// configuration problems exit 2, numerical failures 3, everything else 1.
int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const config_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const parse_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const unsupported_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const kkt_error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

NoiseModel parse_noise_model(const std::string& name) {
    if (name == "additive_gaussian") return NoiseModel::additive_gaussian;
    if (name == "additive_uniform") return NoiseModel::additive_uniform;
    if (name == "coordinate_dropout") return NoiseModel::coordinate_dropout;
    throw std::invalid_argument("unknown noise model: " + name);
}

OracleConfig build_oracle(const RunConfig& config) {
    OracleConfig oracle;
    oracle.noise_f = config.noise_f;
    oracle.noise_g = config.noise_g;
    oracle.noise_model = parse_noise_model(config.noise_model);
    oracle.mean_squared_smooth = oracle.noise_model != NoiseModel::coordinate_dropout;
    return oracle;
}

Schedule build_schedule(const RunConfig& config, double rho, const ProblemConstants& constants) {
    ScheduleParams p =
        make_schedule(parse_preset(config.preset), rho, constants, config.target_eps, config.K)
            .params();
    if (config.alpha0) p.alpha0 = *config.alpha0;
    if (config.beta0) p.beta0 = *config.beta0;
    if (config.gamma0) p.gamma0 = *config.gamma0;
    if (config.sigma0) p.sigma0 = *config.sigma0;
    if (config.c_eta) p.c_eta = *config.c_eta;
    if (config.k0) p.k0 = *config.k0;
    if (config.exp_a) p.a = *config.exp_a;
    if (config.exp_b) p.b = *config.exp_b;
    if (config.exp_c) p.c = *config.exp_c;
    if (config.exp_s) p.s = *config.exp_s;
    if (config.exp_n) p.n = *config.exp_n;
    if (config.exp_t) p.t = *config.exp_t;
    if (config.exp_m) p.m = *config.exp_m;
    return Schedule(p, rho);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const size_t hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw parse_error("expected 'key = value'", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) throw parse_error("empty key or value", line_no);

        if (key == "problem") c.problem = value;
        else if (key == "algorithm") c.algorithm = value;
        else if (key == "preset") c.preset = value;
        else if (key == "rho") c.rho = to_real(value, line_no);
        else if (key == "K") c.K = to_int(value, line_no);
        else if (key == "seed") c.seed = to_uint(value, line_no);
        else if (key == "noise_f") c.noise_f = to_real(value, line_no);
        else if (key == "noise_g") c.noise_g = to_real(value, line_no);
        else if (key == "noise_model") c.noise_model = value;
        else if (key == "output_path") c.output_path = value;
        else if (key == "replicas") c.replicas = to_int(value, line_no);
        else if (key == "target_eps") c.target_eps = to_real(value, line_no);
        else if (key == "metrics_stride") c.metrics_stride = to_int(value, line_no);
        else if (key == "x_min") c.x_min = to_real(value, line_no);
        else if (key == "x_max") c.x_max = to_real(value, line_no);
        else if (key == "x_steps") c.x_steps = to_int(value, line_no);
        else if (key == "sigmas") c.sigmas = to_real_list(value, line_no);
        else if (key == "alpha0") c.alpha0 = to_real(value, line_no);
        else if (key == "beta0") c.beta0 = to_real(value, line_no);
        else if (key == "gamma0") c.gamma0 = to_real(value, line_no);
        else if (key == "sigma0") c.sigma0 = to_real(value, line_no);
        else if (key == "c_eta") c.c_eta = to_real(value, line_no);
        else if (key == "k0") c.k0 = to_int(value, line_no);
        else if (key == "exp_a") c.exp_a = to_real(value, line_no);
        else if (key == "exp_b") c.exp_b = to_real(value, line_no);
        else if (key == "exp_c") c.exp_c = to_real(value, line_no);
        else if (key == "exp_s") c.exp_s = to_real(value, line_no);
        else if (key == "exp_n") c.exp_n = to_real(value, line_no);
        else if (key == "exp_t") c.exp_t = to_real(value, line_no);
        else if (key == "exp_m") c.exp_m = to_real(value, line_no);
        else throw parse_error("unknown key '" + key + "'", line_no);
    }
    return c;
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out << "problem = " << c.problem << "\n";
    out << "algorithm = " << c.algorithm << "\n";
    out << "preset = " << c.preset << "\n";
    if (c.rho) out << "rho = " << format_real(*c.rho) << "\n";
    out << "K = " << c.K << "\n";
    out << "seed = " << c.seed << "\n";
    out << "noise_f = " << format_real(c.noise_f) << "\n";
    out << "noise_g = " << format_real(c.noise_g) << "\n";
    out << "noise_model = " << c.noise_model << "\n";
    out << "output_path = " << c.output_path << "\n";
    out << "replicas = " << c.replicas << "\n";
    out << "target_eps = " << format_real(c.target_eps) << "\n";
    out << "metrics_stride = " << c.metrics_stride << "\n";
    out << "x_min = " << format_real(c.x_min) << "\n";
    out << "x_max = " << format_real(c.x_max) << "\n";
    out << "x_steps = " << c.x_steps << "\n";
    out << "sigmas = ";
    for (size_t i = 0; i < c.sigmas.size(); ++i) out << (i ? "," : "") << format_real(c.sigmas[i]);
    out << "\n";
    const auto opt_real = [&](const char* key, const std::optional<double>& v) {
        if (v) out << key << " = " << format_real(*v) << "\n";
    };
    opt_real("alpha0", c.alpha0);
    opt_real("beta0", c.beta0);
    opt_real("gamma0", c.gamma0);
    opt_real("sigma0", c.sigma0);
    opt_real("c_eta", c.c_eta);
    if (c.k0) out << "k0 = " << *c.k0 << "\n";
    opt_real("exp_a", c.exp_a);
    opt_real("exp_b", c.exp_b);
    opt_real("exp_c", c.exp_c);
    opt_real("exp_s", c.exp_s);
    opt_real("exp_n", c.exp_n);
    opt_real("exp_t", c.exp_t);
    opt_real("exp_m", c.exp_m);
    return out.str();
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.problem == b.problem && a.algorithm == b.algorithm && a.preset == b.preset &&
           a.rho == b.rho && a.K == b.K && a.seed == b.seed && a.noise_f == b.noise_f &&
           a.noise_g == b.noise_g && a.noise_model == b.noise_model &&
           a.output_path == b.output_path && a.replicas == b.replicas &&
           a.target_eps == b.target_eps && a.metrics_stride == b.metrics_stride &&
           a.x_min == b.x_min && a.x_max == b.x_max && a.x_steps == b.x_steps &&
           a.sigmas == b.sigmas && a.alpha0 == b.alpha0 && a.beta0 == b.beta0 &&
           a.gamma0 == b.gamma0 && a.sigma0 == b.sigma0 && a.c_eta == b.c_eta && a.k0 == b.k0 &&
           a.exp_a == b.exp_a && a.exp_b == b.exp_b && a.exp_c == b.exp_c && a.exp_s == b.exp_s &&
           a.exp_n == b.exp_n && a.exp_t == b.exp_t && a.exp_m == b.exp_m;
}

int cmd_landscape(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() -> int {
        const TestProblem tp = make_problem(config.problem);
        if (config.x_steps < 1) throw config_error("x_steps must be at least 1");
        if (config.x_min > config.x_max) throw config_error("x_min must not exceed x_max");
        if (config.sigmas.empty()) throw config_error("sigma list must not be empty");
        for (const double s : config.sigmas)
            if (s <= 0.0) throw config_error("landscape sigmas must be positive");

        const long d_x = tp.base.domain_x.dim();
        std::filesystem::create_directories(config.output_path);
        const std::string path = config.output_path + "/landscape.csv";
        std::ofstream file(path, std::ios::binary);
        if (!file) throw io_error("cannot open for writing: " + path);

        file << "# schema=1\n";
        for (long i = 0; i < d_x; ++i) file << "x_" << i << ",";
        file << "sigma,psi_sigma,psi";
        for (long i = 0; i < d_x; ++i) file << ",grad_fd_" << i;
        for (long i = 0; i < d_x; ++i) file << ",grad_formula_" << i;
        file << "\n";

        long rows = 0;
        for (const double sigma : config.sigmas) {
            for (long step = 0; step < config.x_steps; ++step) {
                Vec x = Vec::Zero(d_x);
                x[0] = config.x_steps == 1
                           ? config.x_min
                           : config.x_min + (config.x_max - config.x_min) *
                                                static_cast<double>(step) /
                                                static_cast<double>(config.x_steps - 1);
                if (!tp.base.domain_x.contains(x, 1e-12))
                    throw config_error("sweep point leaves the upper-level domain");

                const double psi_sigma = eval_psi_sigma(tp.base, x, sigma);
                const double psi = eval_psi(tp.base, x);
                const Vec grad_fd = grad_psi_sigma_fd(tp.base, x, sigma, sigma / 100.0);
                std::optional<Vec> formula;
                try {
                    const std::vector<Vec> all = implicit_gradient_all(tp.base, x, sigma);
                    bool agree = !all.empty();
                    for (size_t i = 1; i < all.size(); ++i)
                        if ((all[i] - all[0]).norm() > 1e-6) agree = false;
                    if (agree) formula = all[0];
                } catch (const kkt_error&) {
                } catch (const numerical_error&) {
                } catch (const unsupported_error&) {
                }

                for (long i = 0; i < d_x; ++i) file << format_real(x[i]) << ",";
                file << format_real(sigma) << "," << format_real(psi_sigma) << ","
                     << format_real(psi);
                for (long i = 0; i < d_x; ++i) file << "," << format_real(grad_fd[i]);
                for (long i = 0; i < d_x; ++i)
                    file << "," << (formula ? format_real((*formula)[i]) : std::string());
                file << "\n";
                ++rows;
            }
        }
        file.flush();
        if (!file) throw io_error("write failure on " + path);
        out << "landscape: wrote " << rows << " rows to " << path << "\n";
        return 0;
    });
}

int cmd_solve(const RunConfig& config, long jobs, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() -> int {
        const TestProblem tp = make_problem(config.problem);
        if (config.replicas < 1) throw config_error("replicas must be at least 1");
        if (config.K < 1) throw config_error("K must be at least 1");
        if (config.metrics_stride < 1) throw config_error("metrics_stride must be at least 1");
        const Algorithm algorithm = [&] {
            if (config.algorithm == "double_loop") return Algorithm::double_loop;
            if (config.algorithm == "single_loop") return Algorithm::single_loop;
            throw config_error("unknown algorithm: " + config.algorithm);
        }();
        const double rho = config.rho ? *config.rho : tp.default_rho;
        const Schedule schedule = build_schedule(config, rho, tp.base.constants);
        const OracleConfig oracle = build_oracle(config);
        if (algorithm == Algorithm::single_loop && !oracle.mean_squared_smooth)
            throw config_error("single_loop requires a mean-squared smooth noise model");
        std::filesystem::create_directories(config.output_path);

        const long worker_count =
            std::max<long>(1, std::min<long>(config.replicas,
                                             jobs > 0 ? jobs
                                                      : static_cast<long>(
                                                            std::thread::hardware_concurrency())));
        std::atomic<long> next{0};
        std::vector<int> codes(static_cast<size_t>(config.replicas), 0);
        std::mutex io_mutex;

        const auto worker = [&]() {
            while (true) {
                const long r = next.fetch_add(1);
                if (r >= config.replicas) return;
                std::vector<MetricRow> rows;
                int code = 0;
                std::string summary;
                const auto t0 = std::chrono::steady_clock::now();
                try {
                    RunOptions opts;
                    opts.metrics_stride = config.metrics_stride;
                    opts.on_report = [&rows](const SolverState& state, const ScheduleValues& vals,
                                             const StationarityReport& report) {
                        MetricRow row;
                        row.k = state.k;
                        row.sigma = vals.sigma;
                        row.alpha = vals.alpha;
                        row.beta = vals.beta;
                        row.gamma = vals.gamma;
                        row.eta = vals.eta;
                        row.T = vals.T;
                        row.M = vals.M;
                        row.delta_x = report.delta_x_norm;
                        row.delta_y = report.delta_y_norm;
                        row.delta_z = report.delta_z_norm;
                        row.eps_level = report.epsilon_level;
                        row.potential = report.potential;
                        row.psi_sigma = report.psi_sigma;
                        row.oracle_calls = state.oracle_calls.total();
                        row.wall_ms = 0.0;  // kept out of the file so reruns are bit-identical
                        rows.push_back(row);
                    };
                    const RunResult result =
                        run(tp.base, algorithm, schedule, oracle, config.K,
                            config.seed + static_cast<uint64_t>(r), opts);
                    const double secs =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
                    std::ostringstream s;
                    s << "replica " << r << ": eps_level="
                      << result.reports.back().epsilon_level
                      << " oracle_calls=" << result.state.oracle_calls.total() << " wall_s="
                      << secs;
                    summary = s.str();
                } catch (const numerical_error& e) {
                    code = 3;
                    summary = "replica " + std::to_string(r) + ": numerical failure: " + e.what();
                } catch (const std::exception& e) {
                    code = 1;
                    summary = "replica " + std::to_string(r) + ": failure: " + e.what();
                }
                // Flush whatever was traced, including partial failed runs.
                const std::string path =
                    config.output_path + "/replica_" + std::to_string(r) + ".csv";
                try {
                    write_trace(rows, path);
                } catch (const std::exception& e) {
                    if (code == 0) code = 1;
                    summary += std::string("; trace write failed: ") + e.what();
                }
                {
                    const std::lock_guard<std::mutex> lock(io_mutex);
                    out << summary << "\n";
                }
                codes[static_cast<size_t>(r)] = code;
            }
        };

        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(worker_count));
        for (long i = 0; i < worker_count; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();

        int exit_code = 0;
        for (const int c : codes) exit_code = std::max(exit_code, c);
        return exit_code;
    });
}

int cmd_verify(VerifyLevel level, double step_sign, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() -> int {
        VerifyOptions options;
        options.level = level;
        options.step_sign = step_sign;
        const std::vector<VerifyCheck> checks = run_verification(options);
        long passed = 0;
        for (const VerifyCheck& check : checks) {
            out << (check.passed ? "PASS " : "FAIL ") << check.name << ": " << check.detail
                << "\n";
            if (check.passed) ++passed;
        }
        out << "verify: " << passed << "/" << checks.size() << " checks passed\n";
        return passed == static_cast<long>(checks.size()) ? 0 : 1;
    });
}

}  // namespace bipen
