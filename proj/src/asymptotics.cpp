#include "pamkit/asymptotics.hpp"

#include "pamkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pamkit::asy {

namespace {

void check_shape(double beta, double b) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    if (!(b > 1.0 && b < 2.0)) throw std::invalid_argument("b must lie in (1, 2)");
}

} // namespace

double phi_beta(double x, double beta, double b) {
    check_shape(beta, b);
    if (!(x > 0.0)) throw std::invalid_argument("phi_beta: x must be positive");

    // In w = log phi the residual r(w) = beta b e^{w(b-1)} + e^w - x is
    // strictly increasing, negative for w -> -inf and positive at w = log x.
    auto residual = [&](double w) {
        return beta * b * std::exp(w * (b - 1.0)) + std::exp(w) - x;
    };
    double hi = std::log(x);
    double lo = hi;
    for (int i = 0; i < 400 && residual(lo) >= 0.0; ++i) lo -= 10.0;
    if (residual(lo) >= 0.0)
        throw NumericalError("phi_beta: failed to bracket the root", residual(lo));

    double w = 0.5 * (lo + hi);
    for (int it = 0; it < 500; ++it) {
        double r = residual(w);
        if (std::abs(r) <= 1e-13 * x) break;
        (r > 0.0 ? hi : lo) = w;
        w = 0.5 * (lo + hi);
    }
    return std::exp(w);
}

double psi_beta(double w, double beta, double b) {
    check_shape(beta, b);
    if (w < 0.0) throw std::invalid_argument("psi_beta: w must be >= 0");
    if (w == 0.0) return 0.0;
    return 0.5 * beta * beta * b * b * std::pow(w, 2.0 * b - 2.0) +
           beta * std::pow(w, b);
}

double g_beta(double lambda, double beta, double b) {
    return psi_beta(phi_beta(lambda, beta, b), beta, b);
}

double g_beta_inverse(double y, double beta, double b) {
    check_shape(beta, b);
    if (!(y > 0.0)) throw std::invalid_argument("g_beta_inverse: y must be positive");

    double hi = std::max({std::sqrt(2.0 * y), std::pow(y / beta, 1.0 / b), 1.0});
    int guard = 0;
    while (g_beta(hi, beta, b) < y) {
        hi *= 2.0;
        if (++guard > 300)
            throw NumericalError("g_beta_inverse: upper bracket ran away", hi);
    }
    double lo = hi;
    guard = 0;
    while (g_beta(lo, beta, b) > y) {
        lo *= 0.5;
        if (++guard > 2000)
            throw NumericalError("g_beta_inverse: lower bracket ran away", lo);
    }
    double wl = std::log(lo), wh = std::log(hi);
    while (wh - wl > 1e-12) {
        double wm = 0.5 * (wl + wh);
        (g_beta(std::exp(wm), beta, b) > y ? wh : wl) = wm;
    }
    return std::exp(0.5 * (wl + wh));
}

double lyapunov_upper(int n, double alpha0, double alpha, double energy) {
    if (n < 2) throw std::invalid_argument("lyapunov_upper: n must be >= 2");
    if (!(alpha0 >= 0.0 && alpha0 < 1.0))
        throw std::invalid_argument("lyapunov_upper: alpha0 must lie in [0, 1)");
    if (!(alpha >= 0.0 && alpha < 2.0))
        throw std::invalid_argument("lyapunov_upper: alpha must lie in [0, 2)");
    if (energy < 0.0) throw std::invalid_argument("lyapunov_upper: energy must be >= 0");
    return n * std::pow(0.5 * (n - 1), 2.0 / (2.0 - alpha)) * energy;
}

GrowthIndexReport lambda_bounds(int n, double alpha0, double alpha, double energy,
                                std::optional<double> beta,
                                std::optional<bool> kernel_nonneg) {
    if (n < 2) throw std::invalid_argument("lambda_bounds: n must be >= 2");
    if (energy < 0.0) throw std::invalid_argument("lambda_bounds: energy must be >= 0");
    auto exps = cov::scaling_exponents(alpha, alpha0);

    GrowthIndexReport rep;
    rep.n = n;
    rep.alpha0 = alpha0;
    rep.alpha = alpha;
    rep.a = exps.a;
    rep.b = exps.b;
    rep.energy = energy;
    rep.beta = beta;

    const double big_lambda = std::pow(0.5 * (n - 1), 2.0 / (2.0 - alpha)) * energy;
    rep.lambda_upper_compact = std::sqrt(2.0 * big_lambda);
    if (beta) {
        if (!(*beta > 0.0))
            throw std::invalid_argument("lambda_bounds: beta must be positive");
        rep.lambda_upper =
            big_lambda > 0.0 ? g_beta_inverse(big_lambda, *beta, exps.b) : 0.0;
    }
    if (kernel_nonneg && !*kernel_nonneg) {
        rep.note = "lower bound omitted: the spatial kernel changes sign, and the "
                   "lower-bound formula requires a pointwise nonnegative kernel";
    } else {
        const double pref = std::pow(exps.a, 0.5 * exps.a) *
                            std::pow(exps.a + 1.0, -0.5 * (exps.a + 1.0));
        rep.lambda_lower = pref * rep.lambda_upper_compact;
    }
    return rep;
}

LyapunovEstimate lyapunov_mc_estimate(const cov::NoiseParams& noise, int n,
                                      std::span<const double> t_ladder,
                                      const fk::MomentOptions& opt,
                                      std::optional<double> energy) {
    cov::validate(noise);
    if (n < 1) throw std::invalid_argument("lyapunov_mc_estimate: n must be >= 1");
    if (t_ladder.size() < 4)
        throw std::invalid_argument(
            "lyapunov_mc_estimate: the regression needs at least 4 ladder points");
    auto hom = noise.family.homogeneity();
    if (!hom)
        throw std::invalid_argument(
            "lyapunov_mc_estimate: the t^a normalization needs a homogeneous family");
    const double alpha = *hom;
    if (!(noise.alpha0 > 0.0 && noise.alpha0 < 1.0))
        throw std::invalid_argument("lyapunov_mc_estimate: alpha0 must lie in (0, 1)");
    if (!(alpha >= 0.0 && alpha < 2.0))
        throw std::invalid_argument("lyapunov_mc_estimate: alpha must lie in [0, 2)");

    LyapunovEstimate est;
    est.n = n;
    est.a = (4.0 - alpha - 2.0 * noise.alpha0) / (2.0 - alpha);

    for (std::size_t i = 0; i < t_ladder.size(); ++i) {
        double t = t_ladder[i];
        if (!(t > 0.0))
            throw std::invalid_argument("lyapunov_mc_estimate: ladder times must be > 0");
        fk::MomentOptions o = opt;
        o.seed = opt.seed.with_stream(opt.seed.stream +
                                      static_cast<std::uint64_t>(i) * opt.shards);
        auto m = fk::bridge_functional(noise, n, t, o);
        if (!(m.mean > 0.0))
            throw NumericalError("lyapunov_mc_estimate: nonpositive moment mean", m.mean);
        est.t.push_back(t);
        est.log_moment.push_back(std::log(m.mean));
        est.sigma.push_back(m.stderr_mean / m.mean);
    }

    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < est.t.size(); ++i) {
        double x = std::pow(est.t[i], est.a);
        double floor = 1e-12 * std::max(1.0, std::abs(est.log_moment[i]));
        double s = std::max(est.sigma[i], floor);
        sxx += x * x / (s * s);
        sxy += x * est.log_moment[i] / (s * s);
    }
    est.slope = sxy / sxx;
    est.slope_stderr = 1.0 / std::sqrt(sxx);
    if (energy) {
        est.upper_constant = lyapunov_upper(std::max(n, 2), noise.alpha0, alpha, *energy);
        est.consistent = est.slope <= *est.upper_constant + 3.0 * est.slope_stderr;
    }
    return est;
}

} // namespace pamkit::asy
