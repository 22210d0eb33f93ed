#pragma once

#include "pamkit/covariance.hpp"
#include "pamkit/functional.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pamkit::asy {

// Unique positive root of beta * b * phi^(b-1) = x - phi, found by
// bisection in log phi; the residual is driven below 1e-13 * x.
double phi_beta(double x, double beta, double b);

// psi_beta(w) = (1/2) beta^2 b^2 w^(2b-2) + beta w^b for w >= 0.
double psi_beta(double w, double beta, double b);

// g_beta = psi_beta composed with phi_beta; strictly increasing in lambda.
double g_beta(double lambda, double beta, double b);

// Inverse of g_beta by bracketed bisection; g_beta(result) matches y to
// 1e-10 relative.
double g_beta_inverse(double y, double beta, double b);

// Moment growth constant n * ((n-1)/2)^(2/(2-alpha)) * energy bounding
// t^(-a) log E[u^n] from above. Requires n >= 2.
double lyapunov_upper(int n, double alpha0, double alpha, double energy);

// Front speed bounds in the |x| ~ lambda t^((a+1)/2) frame.
struct GrowthIndexReport {
    int n = 0;
    double alpha0 = 0.0;
    double alpha = 0.0;
    double a = 0.0;
    double b = 0.0;
    double energy = 0.0;                  // variational input, never recomputed
    std::optional<double> beta;           // initial-datum decay rate, when given
    std::optional<double> lambda_upper;   // g_beta^{-1}(Lambda), needs beta
    double lambda_upper_compact = 0.0;    // sqrt(2 Lambda)
    std::optional<double> lambda_lower;   // needs a nonnegative space kernel
    std::string note;
};

// Evaluates the growth-index bounds from scalar inputs. kernel_nonneg
// communicates whether the spatial kernel is known nonnegative: `false`
// suppresses lambda_lower (the formula does not apply) with a note; unset
// or `true` computes it.
GrowthIndexReport lambda_bounds(int n, double alpha0, double alpha, double energy,
                                std::optional<double> beta = std::nullopt,
                                std::optional<bool> kernel_nonneg = std::nullopt);

// Ladder of Monte Carlo bridge-moment functionals with the t^a-normalized
// regression against the analytic growth constant.
struct LyapunovEstimate {
    int n = 0;
    double a = 0.0;
    std::vector<double> t;
    std::vector<double> log_moment; // log of the MC mean at the finest rung
    std::vector<double> sigma;      // delta-method error of log_moment
    double slope = 0.0;             // weighted fit of log_moment ~ slope * t^a
    double slope_stderr = 0.0;
    std::optional<double> upper_constant; // lyapunov_upper when energy given
    std::optional<bool> consistent;       // slope <= upper + 3 slope_stderr
};

// Runs the pure bridge functional at every ladder point (distinct seed
// streams per point) and fits the growth constant. Needs at least 4
// ladder points; heavy-tail aborts propagate.
LyapunovEstimate lyapunov_mc_estimate(const cov::NoiseParams& noise, int n,
                                      std::span<const double> t_ladder,
                                      const fk::MomentOptions& opt,
                                      std::optional<double> energy = std::nullopt);

} // namespace pamkit::asy
