#pragma once

#include "pamkit/covariance.hpp"
#include "pamkit/functional.hpp"
#include "pamkit/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pamkit::var {

// Candidate maximizer g(s, x) on [0,1] x [-L, L], piecewise constant in
// time over `slices` cells and grid-valued in space with mx points per
// axis. Boundary values stay zero; every slice carries unit discrete L2
// mass sum_k g^2 dx = 1.
struct ProfileGrid {
    int slices = 8;
    double box_l = 8.0;
    int mx = 65;
    std::vector<double> values; // slices * mx, slice-major

    double dx() const { return 2.0 * box_l / (mx - 1); }
    double x_at(int k) const { return -box_l + k * dx(); }
    double& at(int i, int k) { return values[static_cast<std::size_t>(i) * mx + k]; }
    double at(int i, int k) const { return values[static_cast<std::size_t>(i) * mx + k]; }
};

// Zero-initialized profile with validated shape.
ProfileGrid make_profile(int slices, double box_l, int mx);

double slice_mass(const ProfileGrid& g, int slice);

// Rescales every slice to unit mass; throws when a slice is identically 0.
void renormalize(ProfileGrid& g);

struct EnergyBreakdown {
    double interaction = 0.0;
    double kinetic = 0.0;
    double total = 0.0; // interaction - kinetic
};

// Discrete energy shared by the evaluator and the solver: interaction via
// per-slice Fourier sums against the radial spectral density (damped by
// e^{-eps xi^2}), exact |s-r|^(-alpha0) time weights, central-difference
// kinetic term. The spectral quadrature is fixed at construction so the
// analytic gradient differentiates exactly the evaluated functional.
// One-dimensional families only.
class EnergyModel {
public:
    EnergyModel(double alpha0, cov::SpectralFamily family, double eps, int slices,
                double box_l, int mx);

    // strict = true enforces per-slice unit mass to 1e-6 before evaluating.
    EnergyBreakdown energy(const ProfileGrid& g, bool strict = true) const;

    // d(total)/dg(i,k), boundary entries zero. project = true applies the
    // per-slice tangent projection of the unit-mass sphere.
    std::vector<double> gradient(const ProfileGrid& g, bool project = true) const;

    const cov::SpectralFamily& family() const { return family_; }
    double alpha0() const { return alpha0_; }
    double eps() const { return eps_; }
    int slices() const { return slices_; }
    double box_l() const { return box_l_; }
    int mx() const { return mx_; }
    std::size_t quadrature_nodes() const { return nodes_.size(); }

private:
    double alpha0_;
    cov::SpectralFamily family_;
    double eps_;
    int slices_;
    double box_l_;
    int mx_;
    fk::TimeWeightMatrix weights_;
    std::vector<double> nodes_;   // spectral quadrature points xi_q > 0
    std::vector<double> wq_;      // full weights: rule x density x damping x 2/(2pi)
    std::vector<double> cos_tab_; // nodes x mx
    std::vector<double> sin_tab_;

    void slice_transforms(const ProfileGrid& g, std::vector<double>& a,
                          std::vector<double>& b) const;
};

struct TracePoint {
    int iter = 0;
    double total = 0.0;
    double interaction = 0.0;
    double kinetic = 0.0;
    double step = 0.0;
};

struct SolverOptions {
    int starts = 8;          // random Gaussian bumps, plus one flat start
    SeedSpec seed{};
    int max_iters = 400;
    double grad_tol = 1.0e-7;
    double step0 = 0.5;
    std::optional<double> guard; // divergence guard; computed when absent
};

struct SolveResult {
    EnergyBreakdown best;
    ProfileGrid argmax;
    std::vector<TracePoint> trace;    // winning start only
    std::vector<double> start_totals; // dispersion across starts
    bool converged = false;
    double guard_used = 0.0;
};

// Projected gradient ascent with backtracking and per-slice
// renormalization, multi-start. Throws NumericalError when the total
// exceeds the finiteness guard by more than 1%.
SolveResult maximize(double alpha0, const cov::SpectralFamily& family, double eps,
                     int slices, double box_l, int mx, const SolverOptions& opt);

struct FinitenessBound {
    double value = 0.0;
    double radius = 0.0; // spectral split radius R
};

// Upper bound for the variational total: picks R so the tail
// norm(eta0) (2pi)^(-ell) 4 ell int_{|xi|>R} mu(dxi)/|xi|^2 drops below
// 1/2, then returns norm(eta0) (2pi)^(-ell) int_{|xi|<R} mu(dxi), with
// norm(eta0) = int_{-1}^{1} |u|^(-alpha0) du = 2/(1-alpha0).
FinitenessBound finiteness_bound(double alpha0, const cov::SpectralFamily& family);

} // namespace pamkit::var
