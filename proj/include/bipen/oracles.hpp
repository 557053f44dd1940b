#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "bipen/core.hpp"

namespace bipen {

enum class NoiseModel { additive_gaussian, additive_uniform, coordinate_dropout };

// Gradient-oracle noise configuration. noise_f/noise_g are the standard
// deviation scales sigma_f/sigma_g of the joint (x,y)-gradient perturbation.
// mean_squared_smooth declares that the per-seed noise realization is a
// Lipschitz function of the query point, which the additive models satisfy
// (their realization does not depend on the point at all) and coordinate
// dropout does not.
struct OracleConfig {
    double noise_f = 0.0;
    double noise_g = 0.0;
    NoiseModel noise_model = NoiseModel::additive_gaussian;
    bool mean_squared_smooth = true;
};

enum class Stream : uint32_t { wy = 0, wz = 1, x_f = 2, x_gy = 3, x_gz = 4 };

// Addresses one oracle draw. Identical paths reproduce identical bits;
// distinct (stream, k, t) give independent draws. The f/g distinction is
// folded in by the sampler, so the f and g noise streams are independent
// even at the same path.
struct SeedPath {
    uint64_t run_seed = 0;
    Stream stream = Stream::wy;
    uint32_t k = 0;
    uint32_t t = 0;
};

struct GradSample {
    Vec grad_x;
    Vec grad_y;
};

// Stochastic first-order oracles. Zero noise returns the exact gradient and
// touches no generator state. Infeasible query points are argument errors.
GradSample sample_grad_f(const BilevelProblem& problem, const Vec& x, const Vec& y,
                         const OracleConfig& config, const SeedPath& seed);
GradSample sample_grad_g(const BilevelProblem& problem, const Vec& x, const Vec& y,
                         const OracleConfig& config, const SeedPath& seed);

// Two-point queries sharing one seed realization, as the momentum estimators
// require. Calling these with a configuration that is not mean-squared smooth
// is a configuration error.
std::pair<GradSample, GradSample> sample_grad_f_paired(const BilevelProblem& problem,
                                                       const Vec& x1, const Vec& y1,
                                                       const Vec& x2, const Vec& y2,
                                                       const OracleConfig& config,
                                                       const SeedPath& seed);
std::pair<GradSample, GradSample> sample_grad_g_paired(const BilevelProblem& problem,
                                                       const Vec& x1, const Vec& y1,
                                                       const Vec& x2, const Vec& y2,
                                                       const OracleConfig& config,
                                                       const SeedPath& seed);

namespace detail {

// Philox4x32-10 block function (counter-based, bit-reproducible anywhere).
std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr,
                                   std::array<uint32_t, 2> key);

// Buffered draw sequence for one (seed, tag, k, t) address. tag packs the
// stream id in the low byte and a function id (0 = f, 1 = g, 2 = internal)
// in the next byte.
class CounterRng {
public:
    CounterRng(uint64_t run_seed, uint32_t tag, uint32_t k, uint32_t t)
        : key_{static_cast<uint32_t>(run_seed & 0xffffffffu),
               static_cast<uint32_t>(run_seed >> 32)},
          base_{0u, t, k, tag} {}

    uint32_t next_u32();
    double uniform();  // U(0,1), never exactly 0 or 1
    double normal();   // N(0,1) via Box-Muller

private:
    std::array<uint32_t, 2> key_;
    std::array<uint32_t, 4> base_;
    std::array<uint32_t, 4> buf_{};
    uint32_t block_ = 0;
    int idx_ = 4;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

constexpr uint32_t tag_for(Stream s, uint32_t func_id) {
    return static_cast<uint32_t>(s) | (func_id << 8);
}

}  // namespace detail

}  // namespace bipen
