#include "bipen/oracles.hpp"

#include <cmath>
#include <numbers>

namespace bipen {

namespace detail {

namespace {

constexpr uint32_t kMult0 = 0xD2511F53u;
constexpr uint32_t kMult1 = 0xCD9E8D57u;
constexpr uint32_t kWeyl0 = 0x9E3779B9u;
constexpr uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
    const uint64_t p = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(p >> 32);
    lo = static_cast<uint32_t>(p);
}

}  // namespace

std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr,
                                   std::array<uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMult0, ctr[0], hi0, lo0);
        mulhilo(kMult1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

uint32_t CounterRng::next_u32() {
    if (idx_ == 4) {
        std::array<uint32_t, 4> ctr = base_;
        ctr[0] = block_++;
        buf_ = philox4x32(ctr, key_);
        idx_ = 0;
    }
    return buf_[static_cast<size_t>(idx_++)];
}

double CounterRng::uniform() {
    return (static_cast<double>(next_u32()) + 0.5) * 0x1p-32;
}

double CounterRng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

}  // namespace detail

namespace {

void validate_config(const OracleConfig& config) {
    if (config.noise_f < 0.0 || config.noise_g < 0.0)
        throw config_error("oracle noise scales must be nonnegative");
    if (config.mean_squared_smooth && config.noise_model == NoiseModel::coordinate_dropout)
        throw config_error(
            "coordinate_dropout has no Lipschitz per-seed realization; "
            "unset mean_squared_smooth or pick an additive model");
}

void require_feasible(const BilevelProblem& problem, const Vec& x, const Vec& y,
                      const char* who) {
    if (!problem.domain_x.contains(x, 1e-8))
        throw std::invalid_argument(std::string(who) + ": x not feasible");
    if (!problem.domain_y.contains(y, 1e-8))
        throw std::invalid_argument(std::string(who) + ": y not feasible");
}

// Additive joint perturbation with E||n||^2 = scale^2, split over (x, y).
void add_joint_noise(GradSample& s, double scale, NoiseModel model,
                     detail::CounterRng& rng) {
    const Eigen::Index dx = s.grad_x.size(), dy = s.grad_y.size();
    const double d = static_cast<double>(dx + dy);
    if (model == NoiseModel::additive_gaussian) {
        const double c = scale / std::sqrt(d);
        for (Eigen::Index i = 0; i < dx; ++i) s.grad_x(i) += c * rng.normal();
        for (Eigen::Index i = 0; i < dy; ++i) s.grad_y(i) += c * rng.normal();
    } else {  // additive_uniform on [-a, a] per coordinate
        const double a = scale * std::sqrt(3.0 / d);
        for (Eigen::Index i = 0; i < dx; ++i) s.grad_x(i) += a * (2.0 * rng.uniform() - 1.0);
        for (Eigen::Index i = 0; i < dy; ++i) s.grad_y(i) += a * (2.0 * rng.uniform() - 1.0);
    }
}

// Unbiased dropout: coordinate i survives with probability 1/2 and is
// rescaled by 2. The noise scale only gates whether dropout applies; its
// magnitude is set by the gradient itself.
void apply_dropout(GradSample& s, detail::CounterRng& rng) {
    constexpr double kKeep = 0.5;
    for (Eigen::Index i = 0; i < s.grad_x.size(); ++i)
        s.grad_x(i) = rng.uniform() < kKeep ? s.grad_x(i) / kKeep : 0.0;
    for (Eigen::Index i = 0; i < s.grad_y.size(); ++i)
        s.grad_y(i) = rng.uniform() < kKeep ? s.grad_y(i) / kKeep : 0.0;
}

GradSample exact_grad_f(const BilevelProblem& p, const Vec& x, const Vec& y) {
    return {p.f_grad_x(x, y), p.f_grad_y(x, y)};
}

GradSample exact_grad_g(const BilevelProblem& p, const Vec& x, const Vec& y) {
    return {p.g_grad_x(x, y), p.g_grad_y(x, y)};
}

GradSample sample_one(const BilevelProblem& problem, const Vec& x, const Vec& y,
                      const OracleConfig& config, const SeedPath& seed, uint32_t func_id) {
    GradSample s = func_id == 0 ? exact_grad_f(problem, x, y) : exact_grad_g(problem, x, y);
    const double scale = func_id == 0 ? config.noise_f : config.noise_g;
    if (scale == 0.0) return s;
    detail::CounterRng rng(seed.run_seed, detail::tag_for(seed.stream, func_id), seed.k,
                           seed.t);
    if (config.noise_model == NoiseModel::coordinate_dropout)
        apply_dropout(s, rng);
    else
        add_joint_noise(s, scale, config.noise_model, rng);
    return s;
}

std::pair<GradSample, GradSample> sample_paired(const BilevelProblem& problem, const Vec& x1,
                                                const Vec& y1, const Vec& x2, const Vec& y2,
                                                const OracleConfig& config,
                                                const SeedPath& seed, uint32_t func_id) {
    validate_config(config);
    if (!config.mean_squared_smooth)
        throw config_error("paired oracle queries need a mean-squared-smooth configuration");
    require_feasible(problem, x1, y1, "sample_grad_paired");
    require_feasible(problem, x2, y2, "sample_grad_paired");

    GradSample a = func_id == 0 ? exact_grad_f(problem, x1, y1) : exact_grad_g(problem, x1, y1);
    GradSample b = func_id == 0 ? exact_grad_f(problem, x2, y2) : exact_grad_g(problem, x2, y2);
    const double scale = func_id == 0 ? config.noise_f : config.noise_g;
    if (scale > 0.0) {
        // One realization, added to both queries.
        GradSample noise{Vec::Zero(x1.size()), Vec::Zero(y1.size())};
        detail::CounterRng rng(seed.run_seed, detail::tag_for(seed.stream, func_id), seed.k,
                               seed.t);
        add_joint_noise(noise, scale, config.noise_model, rng);
        a.grad_x += noise.grad_x;
        a.grad_y += noise.grad_y;
        b.grad_x += noise.grad_x;
        b.grad_y += noise.grad_y;
    }
    return {std::move(a), std::move(b)};
}

}  // namespace

GradSample sample_grad_f(const BilevelProblem& problem, const Vec& x, const Vec& y,
                         const OracleConfig& config, const SeedPath& seed) {
    validate_config(config);
    require_feasible(problem, x, y, "sample_grad_f");
    return sample_one(problem, x, y, config, seed, 0);
}

GradSample sample_grad_g(const BilevelProblem& problem, const Vec& x, const Vec& y,
                         const OracleConfig& config, const SeedPath& seed) {
    validate_config(config);
    require_feasible(problem, x, y, "sample_grad_g");
    return sample_one(problem, x, y, config, seed, 1);
}

std::pair<GradSample, GradSample> sample_grad_f_paired(const BilevelProblem& problem,
                                                       const Vec& x1, const Vec& y1,
                                                       const Vec& x2, const Vec& y2,
                                                       const OracleConfig& config,
                                                       const SeedPath& seed) {
    return sample_paired(problem, x1, y1, x2, y2, config, seed, 0);
}

std::pair<GradSample, GradSample> sample_grad_g_paired(const BilevelProblem& problem,
                                                       const Vec& x1, const Vec& y1,
                                                       const Vec& x2, const Vec& y2,
                                                       const OracleConfig& config,
                                                       const SeedPath& seed) {
    return sample_paired(problem, x1, y1, x2, y2, config, seed, 1);
}

}  // namespace bipen
