#pragma once

#include <stdexcept>
#include <string>

namespace bipen {

// Argument errors (bad dimensions, out-of-range scalars, unknown names) use
// std::invalid_argument directly. The types below carry extra payload or
// distinguish failure classes the CLI maps to distinct exit codes.

// A structurally invalid configuration: step sizes outside the regime the
// method is defined for, noise models incompatible with paired queries, etc.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// An iterative routine failed to reach its target: non-convergent projection,
// prox solve short of tolerance, non-finite iterate. Carries the residual at
// the point of failure when one is meaningful.
class numerical_error : public std::runtime_error {
public:
    numerical_error(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}
    explicit numerical_error(const std::string& what)
        : std::runtime_error(what), residual_(0.0) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

// The requested operation needs capabilities this problem does not expose
// (closed forms, bounded low-dimensional domain, Hessian blocks).
class unsupported_error : public std::runtime_error {
public:
    explicit unsupported_error(const std::string& what) : std::runtime_error(what) {}
};

// The stationarity system for the lower-level multipliers is inconsistent:
// either the supplied minimizer is wrong or the active gradients are
// dependent beyond what least squares can absorb.
class kkt_error : public std::runtime_error {
public:
    kkt_error(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

// Malformed text input (config files, trace CSVs). line() is 1-based.
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& what, int line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bipen
