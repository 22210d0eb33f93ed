#pragma once

#include "pamkit/covariance.hpp"
#include "pamkit/paths.hpp"
#include "pamkit/rng.hpp"

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace pamkit::fk {

// Exact cell integrals of the singular temporal weight |s - r|^(-alpha0)
// over a uniform grid (product integration). The matrix is Toeplitz, so
// only the band values are stored.
class TimeWeightMatrix {
public:
    static TimeWeightMatrix build(double t, int m, double alpha0);

    double t() const { return t_; }
    int cells() const { return m_; }
    double alpha0() const { return alpha0_; }
    double at(int i, int j) const { return band_[static_cast<std::size_t>(std::abs(i - j))]; }
    const std::vector<double>& band() const { return band_; }

    // Sum of all cells; closed form 2 t^(2-alpha0) / ((1-alpha0)(2-alpha0)).
    double total_mass() const { return total_mass_; }

    // Draws a cell pair (i, j) with probability at(i, j) / total_mass().
    std::pair<int, int> sample_cell_pair(StreamRng& rng) const;

private:
    double t_ = 0.0;
    int m_ = 0;
    double alpha0_ = 0.0;
    double total_mass_ = 0.0;
    std::vector<double> band_;     // band_[k] = cell integral at offset k
    std::vector<double> offset_cdf_; // over signed offsets, for sampling
};

// Radial interaction kernel used inside the exponential functional.
class RadialKernel {
public:
    static RadialKernel constant(double level);
    static RadialKernel smoothed(std::shared_ptr<const cov::SmoothedKernel> table);
    // Raw power kernel r^(-alpha) clipped at clip_value near r = 0.
    static RadialKernel power(double alpha, double clip_value);

    double operator()(double r) const;
    bool is_clipped_power() const { return kind_ == Kind::power; }
    double clip_value() const { return clip_; }

private:
    enum class Kind { constant, table, power };
    Kind kind_ = Kind::constant;
    double level_ = 0.0;
    double alpha_ = 0.0;
    double clip_ = 0.0;
    std::shared_ptr<const cov::SmoothedKernel> table_;
};

// Per-particle affine spatial shift: shift(s) = offset + slope * s.
struct AffineShift {
    std::array<double, 3> offset{0.0, 0.0, 0.0};
    std::array<double, 3> slope{0.0, 0.0, 0.0};
};

struct QtStats {
    std::uint64_t kernel_evals = 0;
    std::uint64_t clip_hits = 0;
};

// Double time integral of the pair interactions along the sampled paths:
//   sum_{j<k} sum_{cells i,i'} kernel(|X_j(mid_i) - X_k(mid_i')|) W[i][i']
// where X_j = path_j + shift_j. Exact singular weights, cell-midpoint
// path values.
double qt_evaluate(std::span<const paths::PathSample> path_set, const RadialKernel& kernel,
                   const TimeWeightMatrix& weights, std::span<const AffineShift> shifts,
                   QtStats* stats = nullptr);

// Initial condition evaluated pointwise.
struct InitialDatum {
    enum class Kind { constant_one, ball_indicator, gaussian_decay };
    Kind kind = Kind::constant_one;
    double radius = 1.0; // ball_indicator
    double kappa = 1.0;  // gaussian_decay: exp(-kappa |x|^2)

    double operator()(std::span<const double> x) const;
};

struct LadderPoint {
    double eps = 0.0;
    double mean = 0.0;
    double stderr_mean = 0.0;
};

struct Extrapolation {
    double value = 0.0;
    double uncertainty = 0.0;
    double exponent = 0.0; // fitted p in mean(eps) = A + B eps^p
    bool flat = false;     // rungs indistinguishable; value is the finest rung
    bool warn_nonmonotone = false;
    std::string note;
};

// Power-model fit mean(eps) = A + B eps^p through the last three rungs
// (ladder sorted by decreasing eps). Needs at least three rungs.
Extrapolation eps_extrapolate(std::span<const LadderPoint> ladder);

struct MomentEstimate {
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::uint64_t samples = 0;
    SeedSpec seed;
    std::vector<LadderPoint> ladder; // decreasing eps; headline = finest rung
    std::optional<Extrapolation> extrapolated;
    double accept_fraction = 1.0; // share of samples with nonzero datum weight
    double clip_hit_rate = 0.0;   // exact power kernels only
};

struct MomentOptions {
    std::uint64_t samples = 10000;
    int grid_m = 64;
    int shards = 8;
    SeedSpec seed{};
    // Mollification ladder, strictly decreasing. Required for smoothed
    // kernels; must stay empty for exact/constant kernels.
    std::vector<double> eps_ladder;
    bool extrapolate = false;
    // Exact power kernel instead of the mollified table (riesz only),
    // clipped at clip_value.
    bool exact_kernel = false;
    double clip_value = 1.0e9;
    // Guard: a sample whose exponent exceeds this aborts the batch.
    double exponent_cap = 700.0;
    // Optional path tap, called on shard 0 until it returns false.
    std::function<bool(const paths::PathSample&)> path_sink;
};

// Bridge-form moment estimator:
//   E prod_j u(t, x_j) = E[ exp(Q) prod_j u0(x_j + y_j) ],
// paths pinned to zero, y_j drawn from the transition density, pair shifts
// x_j - x_k + (s/t) y_j - (r/t) y_k folded into the kernel argument.
MomentEstimate moment_fk_bridge(const cov::NoiseParams& noise, int n, double t,
                                std::span<const std::array<double, 3>> points,
                                const InitialDatum& u0, const MomentOptions& opt);

// Motion-form estimator of the n-th moment at a single point:
//   E u(t, x)^n = E[ exp(Q) prod_j u0(x + B_j(t)) ], no shifts.
MomentEstimate moment_fk_bm(const cov::NoiseParams& noise, int n, double t,
                            std::array<double, 3> x, const InitialDatum& u0,
                            const MomentOptions& opt);

// Pure bridge exponential functional E exp(sum_{j<k} Q_jk) with no datum
// weight and no shifts; this is the quantity whose large-time growth the
// variational constant controls.
MomentEstimate bridge_functional(const cov::NoiseParams& noise, int n, double t,
                                 const MomentOptions& opt);

// Deterministic reference for the n = 2 bridge functional mean:
//   E Q_t = int int |s-r|^(-alpha0) K_eps(v(s) + v(r)) ds dr,
// where v(s) = s (t - s) / t and K_eps(v) is the mollified kernel at the
// origin with eps replaced by eps + v/2. Product integration in time,
// refined until successive grids agree to rel_tol.
struct OracleValue {
    double value = 0.0;
    double achieved_tol = 0.0;
};
OracleValue mean_q_oracle(const cov::SpectralFamily& fam, double alpha0, double t, double eps,
                          double rel_tol = 1.0e-6);

} // namespace pamkit::fk
