#include "bipen/metrics_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "bipen/errors.hpp"

namespace bipen {

namespace {

constexpr const char* kSchemaLine = "# schema=1";
constexpr const char* kHeader =
    "k,sigma,alpha,beta,gamma,eta,T,M,delta_x,delta_y,delta_z,eps_level,potential,psi_sigma,"
    "oracle_calls,wall_ms";
constexpr int kFieldCount = 16;

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void validate_rows(const std::vector<MetricRow>& rows) {
    for (size_t i = 0; i < rows.size(); ++i) {
        const MetricRow& r = rows[i];
        if (r.delta_x < 0 || r.delta_y < 0 || r.delta_z < 0 || r.eps_level < 0 || r.wall_ms < 0)
            throw std::invalid_argument("trace row has a negative diagnostic");
        if (i > 0 && rows[i - 1].k >= r.k)
            throw std::invalid_argument("trace rows must have strictly increasing k");
        if (i > 0 && rows[i - 1].oracle_calls > r.oracle_calls)
            throw std::invalid_argument("cumulative oracle calls must be nondecreasing");
    }
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    fields.push_back(current);
    return fields;
}

double parse_real(const std::string& field, int line_no, const char* what) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw parse_error(std::string("malformed real in column ") + what, line_no);
    return v;
}

long parse_int(const std::string& field, int line_no, const char* what) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0')
        throw parse_error(std::string("malformed integer in column ") + what, line_no);
    return v;
}

std::optional<double> parse_optional(const std::string& field, int line_no, const char* what) {
    if (field.empty()) return std::nullopt;
    return parse_real(field, line_no, what);
}

}  // namespace

void write_trace(const std::vector<MetricRow>& rows, const std::string& path) {
    validate_rows(rows);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open trace for writing: " + path);
    out << kSchemaLine << '\n' << kHeader << '\n';
    for (const MetricRow& r : rows) {
        out << r.k << ',' << format_real(r.sigma) << ',' << format_real(r.alpha) << ','
            << format_real(r.beta) << ',' << format_real(r.gamma) << ',' << format_real(r.eta)
            << ',' << r.T << ',' << r.M << ',' << format_real(r.delta_x) << ','
            << format_real(r.delta_y) << ',' << format_real(r.delta_z) << ','
            << format_real(r.eps_level) << ','
            << (r.potential ? format_real(*r.potential) : std::string()) << ','
            << (r.psi_sigma ? format_real(*r.psi_sigma) : std::string()) << ','
            << r.oracle_calls << ',' << format_real(r.wall_ms) << '\n';
    }
    out.flush();
    if (!out) throw io_error("write failure on trace: " + path);
}

std::vector<MetricRow> read_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open trace for reading: " + path);
    std::string line;
    int line_no = 0;

    if (!std::getline(in, line)) throw parse_error("missing schema line", 1);
    ++line_no;
    if (line == std::string(kSchemaLine) + "\r") line.pop_back();
    if (line != kSchemaLine) throw parse_error("unknown schema line", line_no);

    if (!std::getline(in, line)) throw parse_error("missing header line", 2);
    ++line_no;
    if (line != kHeader) throw parse_error("unexpected header", line_no);

    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> f = split_fields(line);
        if (static_cast<int>(f.size()) != kFieldCount)
            throw parse_error("expected 16 fields, found " + std::to_string(f.size()), line_no);
        MetricRow r;
        r.k = parse_int(f[0], line_no, "k");
        r.sigma = parse_real(f[1], line_no, "sigma");
        r.alpha = parse_real(f[2], line_no, "alpha");
        r.beta = parse_real(f[3], line_no, "beta");
        r.gamma = parse_real(f[4], line_no, "gamma");
        r.eta = parse_real(f[5], line_no, "eta");
        r.T = parse_int(f[6], line_no, "T");
        r.M = parse_int(f[7], line_no, "M");
        r.delta_x = parse_real(f[8], line_no, "delta_x");
        r.delta_y = parse_real(f[9], line_no, "delta_y");
        r.delta_z = parse_real(f[10], line_no, "delta_z");
        r.eps_level = parse_real(f[11], line_no, "eps_level");
        r.potential = parse_optional(f[12], line_no, "potential");
        r.psi_sigma = parse_optional(f[13], line_no, "psi_sigma");
        r.oracle_calls = parse_int(f[14], line_no, "oracle_calls");
        r.wall_ms = parse_real(f[15], line_no, "wall_ms");
        rows.push_back(r);
    }
    validate_rows(rows);
    return rows;
}

RateFit fit_rate(const std::vector<MetricRow>& rows, const std::string& column, long k_min,
                 long k_max) {
    if (k_min < 1) throw std::invalid_argument("k_min must be at least 1 (log k fit)");
    using Getter = std::function<std::optional<double>(const MetricRow&)>;
    const auto pick = [&]() -> Getter {
        if (column == "sigma") return [](const MetricRow& r) { return r.sigma; };
        if (column == "alpha") return [](const MetricRow& r) { return r.alpha; };
        if (column == "beta") return [](const MetricRow& r) { return r.beta; };
        if (column == "gamma") return [](const MetricRow& r) { return r.gamma; };
        if (column == "eta") return [](const MetricRow& r) { return r.eta; };
        if (column == "delta_x") return [](const MetricRow& r) { return r.delta_x; };
        if (column == "delta_y") return [](const MetricRow& r) { return r.delta_y; };
        if (column == "delta_z") return [](const MetricRow& r) { return r.delta_z; };
        if (column == "eps_level") return [](const MetricRow& r) { return r.eps_level; };
        if (column == "potential") return [](const MetricRow& r) { return r.potential; };
        if (column == "psi_sigma") return [](const MetricRow& r) { return r.psi_sigma; };
        if (column == "wall_ms") return [](const MetricRow& r) { return r.wall_ms; };
        throw std::invalid_argument("unknown trace column: " + column);
    }();

    std::vector<double> xs, ys;
    double running = std::numeric_limits<double>::infinity();
    for (const MetricRow& r : rows) {
        const std::optional<double> v = pick(r);
        if (!v)
            throw std::invalid_argument("column " + column + " absent at k=" + std::to_string(r.k));
        if (*v <= 0.0)
            throw std::invalid_argument("column " + column + " must be positive for a log fit");
        running = std::min(running, *v);
        if (r.k >= k_min && r.k <= k_max) {
            xs.push_back(std::log(static_cast<double>(r.k)));
            ys.push_back(std::log(running));
        }
    }
    const size_t n = xs.size();
    if (n < 10) throw std::invalid_argument("rate fit needs at least 10 rows in the window");

    double sx = 0, sy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / static_cast<double>(n);
    const double my = sy / static_cast<double>(n);
    double sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("rate fit window has no k spread");

    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy == 0.0) {
        fit.r2 = 1.0;
    } else {
        double ss_res = 0;
        for (size_t i = 0; i < n; ++i) {
            const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
            ss_res += e * e;
        }
        fit.r2 = 1.0 - ss_res / syy;
    }
    return fit;
}

}  // namespace bipen
