#pragma once

#include "pamkit/covariance.hpp"
#include "pamkit/functional.hpp"
#include "pamkit/rng.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pamkit::chaos {

// Kernel of the n-th homogeneous chaos at ordered times: the heat-kernel
// chain from z through y_1 .. y_n to x, divided by n!. Times must satisfy
// 0 < s_1 < ... < s_n < t; y holds n points interleaved (n * ell values).
// n = 0 degenerates to p_t(x - z).
double gn_eval(std::span<const double> s, std::span<const double> y, double t,
               std::span<const double> z, std::span<const double> x, int ell);

// Heat semigroup applied to the initial datum: (p_t * u0)(x). Closed form
// for the constant and Gaussian data; 1-D radial quadrature for balls in
// ell = 2, 3 (erf form in ell = 1).
double heat_convolve(const fk::InitialDatum& u0, double t, std::span<const double> x,
                     int ell);

struct TermEstimate {
    int order = 0;
    double value = 0.0;
    double stderr_mean = 0.0;
    double partial_sum = 0.0;
    bool reliable = true; // stderr below the term value
};

struct ChaosOptions {
    std::uint64_t samples = 200000; // per term
    int grid_m = 64;                // time cells behind the weight sampler
    int shards = 8;
    SeedSpec seed{};
};

struct ChaosSeries {
    std::vector<TermEstimate> terms; // orders 0..N (shorter if truncated)
    double total = 0.0;              // last partial sum
    double uncertainty = 0.0;        // accumulated MC error + tail estimate
    double tail_ratio = 0.0;         // ratio of the last two reliable terms
    bool truncated_early = false;
    std::string note;
};

// Partial sums of the second-moment chaos series sum_n n! |f_n(., t, x)|^2
// for the eps-smoothed noise, by Monte Carlo over the exact temporal weight
// cells and the damped spectral measure. Supports u0 in {constant_one,
// gaussian_decay}; requires eps > 0 except for the constant family, whose
// terms are exact.
ChaosSeries second_moment_chaos(const cov::NoiseParams& noise, double t,
                                std::span<const double> x, const fk::InitialDatum& u0,
                                int order_cap, double eps, const ChaosOptions& opt);

struct BoundEstimate {
    double value = 0.0;
    double stderr_mean = 0.0;
    double constant_c = 0.0; // the gamma0-splitting constant actually used
    bool regularized = false; // near-singular time covariance was shifted
};

// Diagnostic upper-bound shape for one chaos term:
//   C^n |p_t*u0(x)|^2 (2 pi)^(-n ell) int_simplex int exp{-Var(sum xi_j .
//   B_bridge(s_j))} mu^n(dxi) ds.
// Monte Carlo over the ordered simplex; the spectral integral uses a
// Gamma-representation importance sampler for power densities with
// alpha < ell and a Gaussian-moment sampler otherwise. The splitting
// constant defaults to 2 t^(1-alpha0) / (1-alpha0) and is reported back.
// This is a diagnostic of summability, not a certified bound.
BoundEstimate chaos_term_bound(const cov::NoiseParams& noise, int n, double t,
                               std::span<const double> x, const fk::InitialDatum& u0,
                               const ChaosOptions& opt,
                               std::optional<double> constant_c = std::nullopt);

} // namespace pamkit::chaos
