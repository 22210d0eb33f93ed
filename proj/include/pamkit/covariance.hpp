#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pamkit::cov {

// Spatial covariance families, described by a radial spectral measure.
// All kernels gamma are recovered through the inverse transform with the
// (2pi)^(-ell) convention:  gamma(x) = (2pi)^(-ell) int e^{i xi.x} mu(dxi).
enum class Family { riesz, rough_fractional, white_1d, constant, custom_radial };

struct CustomRadial {
    std::function<double(double)> density;  // f(rho) for rho > 0
    std::optional<double> homogeneity;      // degree h if f(c rho) = c^h f(rho)
    bool nonneg_kernel = false;             // declared sign of the space kernel
};

struct SpectralFamily {
    Family tag = Family::riesz;
    int ell = 1;
    double alpha = 0.0;    // homogeneity degree of the space kernel
    double hurst = 0.0;    // rough_fractional only
    double level = 0.0;    // constant family value
    double c_norm = 0.0;   // power-law density normalization
    CustomRadial custom;

    static SpectralFamily riesz(int ell, double alpha);
    static SpectralFamily rough_fractional(double hurst);
    static SpectralFamily white_1d();
    static SpectralFamily constant_cov(int ell, double level);
    static SpectralFamily custom_radial(int ell, CustomRadial handle);

    bool has_density() const { return tag != Family::constant; }

    // Power-law view: density c * rho^(alpha_spec - ell). Covers riesz,
    // rough_fractional and white_1d.
    struct PowerLaw {
        double coef;
        double alpha_spec;
    };
    std::optional<PowerLaw> as_power() const;

    // Radial spectral density value. Throws for the constant family.
    double density_at(double rho) const;

    // Homogeneity degree of the space kernel, when the family has one.
    std::optional<double> homogeneity() const;

    // Whether the space kernel is known to be nonnegative (needed by the
    // lower growth-index bound).
    bool nonneg_space_kernel() const;

    std::string name() const;
};

struct NoiseParams {
    int ell = 1;
    double alpha0 = 0.5;   // temporal exponent, |t|^(-alpha0)
    SpectralFamily family;

    // True when the joint space-time scaling law applies: alpha0 in (0,1)
    // and the family is homogeneous.
    bool scaling_ok() const;
};

// Throws std::invalid_argument when parameters are outside their domain.
// alpha0 = 0 is accepted (flat temporal weight) but disables scaling.
void validate(const NoiseParams& np);

// Large-time exponents: a = (4 - alpha - 2*alpha0) / (2 - alpha) and
// b = 2a / (a + 1). Requires alpha0 in (0,1), alpha in (0,2); then
// a lies in (1, 2] and b in (1, 4/3].
struct ScalingExponents {
    double a;
    double b;
};
ScalingExponents scaling_exponents(double alpha, double alpha0);

// Surface area of the unit sphere in R^ell.
double sphere_area(int ell);

// Same family with the spectral density (hence the kernel) multiplied by
// theta > 0. Used by the comparison and scaling checks.
SpectralFamily scaled(const SpectralFamily& fam, double theta);

// Direct-space power kernel |x|^(-alpha) at radius r > 0.
double riesz_gamma(double r, double alpha);

// Spectral density constant of the one-dimensional fractional family,
// Gamma(2H+1) * sin(pi H).
double fractional_density_constant(double hurst);

// Verdict of an integral condition check.
struct ConditionReport {
    bool pass = false;
    bool conclusive = true;
    double value = 0.0;     // integral value, or the partial sum reached
    std::string method;     // "analytic" or "quadrature"
    std::string note;
};

// Integrability of mu(dxi) / (1 + |xi|^2).
ConditionReport dalang_check(const SpectralFamily& fam);

struct SubadditivityReport {
    bool applicable = false;
    bool pass_a = false;        // f(xi+eta) <= kappa0 (f(xi) + f(eta))
    double kappa0 = 0.0;        // sampled supremum of the ratio
    bool pass_b = false;        // int f^2 / (1 + xi^2) finite
    bool conclusive_b = true;
    double value_b = 0.0;
    std::string note;
};

// Density subadditivity and square-integrability checks (one-dimensional
// densities). kappa_cap bounds what still counts as a "working" kappa0;
// the sampled ratio blows up near xi + eta = 0 for singular densities.
SubadditivityReport h1_check(const SpectralFamily& fam, double kappa_cap = 1.0e3,
                             std::uint64_t probe_seed = 20260816);

// Gaussian-mollified kernel value
//   gamma_eps(x) = (2pi)^(-ell) int e^{-eps |xi|^2} e^{i xi.x} mu(dxi)
// at radius r = |x|, by radial quadrature. The spectral tail beyond the
// cutoff carries less than 1e-12 of the retained mass. Throws
// NumericalError when two refinements disagree beyond rel_tol.
double gamma_eps_eval(const SpectralFamily& fam, double r, double eps,
                      double rel_tol = 1.0e-8);

// (2pi)^(-ell) int e^{-beta |xi|^2} mu(dxi): the mollified kernel at the
// origin, closed form for power-law families.
double damped_spectral_mass(const SpectralFamily& fam, double beta);

// Tabulated gamma_eps on a geometric radial grid with cubic interpolation,
// quadratic continuation below the first radius and a power-law tail fit
// beyond the last one.
class SmoothedKernel {
public:
    static SmoothedKernel build(const SpectralFamily& fam, double eps, double r_max,
                                double rel_tol = 1.0e-8);

    double operator()(double r) const;
    double at_zero() const { return value_zero_; }
    double eps() const { return eps_; }
    double r_max() const { return r_max_; }
    double build_tol() const { return rel_tol_; }
    const SpectralFamily& family() const { return family_; }

private:
    SpectralFamily family_;
    double eps_ = 0.0;
    double r_max_ = 0.0;
    double rel_tol_ = 0.0;
    double value_zero_ = 0.0;
    double r_min_ = 0.0;
    double log_r_min_ = 0.0;
    double inv_log_step_ = 0.0;
    double quad_coef_ = 0.0;  // below r_min: value_zero + quad_coef * r^2
    double tail_coef_ = 0.0;  // beyond r_max: tail_coef * r^(-tail_power)
    double tail_power_ = 0.0;
    std::vector<double> values_;
};

} // namespace pamkit::cov
