#include "pamkit/chaos.hpp"

#include "pamkit/errors.hpp"
#include "pamkit/numeric.hpp"
#include "pamkit/parallel.hpp"
#include "pamkit/paths.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace pamkit::chaos {

namespace {

constexpr double kPi = std::numbers::pi;

double dist2(std::span<const double> a, std::span<const double> b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        d2 += d * d;
    }
    return d2;
}

// e^(-x) I_0(x), stable for large arguments.
double scaled_bessel_i0(double x) {
    if (x <= 100.0) return std::exp(-x) * std::cyl_bessel_i(0.0, x);
    double r = 1.0 / (8.0 * x);
    double series = 1.0 + r * (1.0 + r * (9.0 / 2.0 + r * 225.0 / 6.0));
    return series / std::sqrt(2.0 * kPi * x);
}

} // namespace

double gn_eval(std::span<const double> s, std::span<const double> y, double t,
               std::span<const double> z, std::span<const double> x, int ell) {
    if (!(t > 0.0)) throw std::invalid_argument("gn_eval: t must be positive");
    if (ell < 1) throw std::invalid_argument("gn_eval: ell must be >= 1");
    const std::size_t n = s.size();
    if (y.size() != n * static_cast<std::size_t>(ell))
        throw std::invalid_argument("gn_eval: y must hold one point per time");
    if (z.size() != static_cast<std::size_t>(ell) || x.size() != static_cast<std::size_t>(ell))
        throw std::invalid_argument("gn_eval: z and x must have ell coordinates");
    double prev = 0.0;
    for (double si : s) {
        if (!(si > prev && si < t))
            throw std::invalid_argument("gn_eval: times must satisfy 0 < s1 < ... < sn < t");
        prev = si;
    }
    if (n == 0) return paths::heat_kernel(t, dist2(x, z), ell);

    auto point = [&](std::size_t j) {
        return y.subspan(j * static_cast<std::size_t>(ell), static_cast<std::size_t>(ell));
    };
    double v = paths::heat_kernel(s[0], dist2(point(0), z), ell);
    for (std::size_t j = 1; j < n; ++j)
        v *= paths::heat_kernel(s[j] - s[j - 1], dist2(point(j), point(j - 1)), ell);
    v *= paths::heat_kernel(t - s[n - 1], dist2(x, point(n - 1)), ell);
    for (std::size_t j = 2; j <= n; ++j) v /= static_cast<double>(j);
    return v;
}

double heat_convolve(const fk::InitialDatum& u0, double t, std::span<const double> x,
                     int ell) {
    if (!(t > 0.0)) throw std::invalid_argument("heat_convolve: t must be positive");
    if (x.size() != static_cast<std::size_t>(ell))
        throw std::invalid_argument("heat_convolve: x must have ell coordinates");
    switch (u0.kind) {
    case fk::InitialDatum::Kind::constant_one:
        return 1.0;
    case fk::InitialDatum::Kind::gaussian_decay: {
        // Gaussian convolved with Gaussian, per coordinate.
        double v = 1.0;
        for (int d = 0; d < ell; ++d) {
            double denom = 1.0 + 2.0 * u0.kappa * t;
            v *= std::exp(-u0.kappa * x[d] * x[d] / denom) / std::sqrt(denom);
        }
        return v;
    }
    case fk::InitialDatum::Kind::ball_indicator: {
        const double R = u0.radius;
        double d = std::sqrt(dist2(x, std::vector<double>(ell, 0.0)));
        if (ell == 1) {
            auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
            return cdf((R - x[0]) / std::sqrt(t)) - cdf((-R - x[0]) / std::sqrt(t));
        }
        if (ell == 2) {
            auto f = [&](double r) {
                double e = std::exp(-(r - d) * (r - d) / (2.0 * t));
                return r / t * e * scaled_bessel_i0(r * d / t);
            };
            return numeric::integrate_gl(f, 0.0, R, 64);
        }
        if (ell == 3) {
            if (d < 1e-12) {
                auto f = [&](double r) {
                    return 4.0 * kPi * r * r * paths::heat_kernel(t, r * r, 3);
                };
                return numeric::integrate_gl(f, 0.0, R, 64);
            }
            auto f = [&](double r) {
                double em = std::exp(-(r - d) * (r - d) / (2.0 * t));
                double ep = std::exp(-(r + d) * (r + d) / (2.0 * t));
                return r / d * (em - ep);
            };
            return numeric::integrate_gl(f, 0.0, R, 64) / std::sqrt(2.0 * kPi * t);
        }
        throw std::invalid_argument("heat_convolve: ball datum supports ell <= 3");
    }
    }
    return 0.0;
}

namespace {

// Lower Cholesky factor of a dense symmetric matrix, in place; returns
// false when a pivot is not strictly positive.
bool chol_lower(std::vector<double>& a, int n) {
    for (int j = 0; j < n; ++j) {
        double diag = a[static_cast<std::size_t>(j) * n + j];
        for (int k = 0; k < j; ++k) {
            double v = a[static_cast<std::size_t>(j) * n + k];
            diag -= v * v;
        }
        if (!(diag > 0.0)) return false;
        double root = std::sqrt(diag);
        a[static_cast<std::size_t>(j) * n + j] = root;
        for (int i = j + 1; i < n; ++i) {
            double v = a[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                v -= a[static_cast<std::size_t>(i) * n + k] *
                     a[static_cast<std::size_t>(j) * n + k];
            a[static_cast<std::size_t>(i) * n + j] = v / root;
        }
    }
    return true;
}

void bridge_matrix(std::span<const double> s, double t, std::vector<double>& out) {
    const int n = static_cast<int>(s.size());
    out.resize(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
            out[static_cast<std::size_t>(j) * n + k] = paths::bridge_cov(s[j], s[k], t);
}

struct ShardAcc {
    numeric::Accumulator acc;
    bool regularized = false;
    std::exception_ptr error;
};

std::vector<ShardAcc> run_shards(int shards, const SeedSpec& seed, std::uint64_t samples,
                                 const std::function<double(StreamRng&, bool&)>& one_sample) {
    const auto shard_count = static_cast<std::uint64_t>(shards);
    const std::uint64_t base = samples / shard_count;
    const std::uint64_t extra = samples % shard_count;
    std::vector<ShardAcc> out(shards);
    parallel_for(static_cast<std::size_t>(shards), [&](std::size_t sh) {
        try {
            StreamRng rng(seed.with_stream(seed.stream + sh));
            const std::uint64_t quota = base + (sh < extra ? 1 : 0);
            for (std::uint64_t i = 0; i < quota; ++i)
                out[sh].acc.add(one_sample(rng, out[sh].regularized));
        } catch (...) {
            out[sh].error = std::current_exception();
        }
    });
    for (const auto& s : out)
        if (s.error) std::rethrow_exception(s.error);
    return out;
}

} // namespace

ChaosSeries second_moment_chaos(const cov::NoiseParams& noise, double t,
                                std::span<const double> x, const fk::InitialDatum& u0,
                                int order_cap, double eps, const ChaosOptions& opt) {
    cov::validate(noise);
    if (!(t > 0.0)) throw std::invalid_argument("second_moment_chaos: t must be positive");
    if (order_cap < 0 || order_cap > 8)
        throw std::invalid_argument("second_moment_chaos: order cap must lie in [0, 8]");
    if (x.size() != static_cast<std::size_t>(noise.ell))
        throw std::invalid_argument("second_moment_chaos: x must have ell coordinates");
    if (u0.kind == fk::InitialDatum::Kind::ball_indicator)
        throw std::invalid_argument(
            "second_moment_chaos: series sampler needs a Gaussian-integrable transform; "
            "use constant or gaussian_decay data");
    if (opt.shards < 1 || opt.samples < 2)
        throw std::invalid_argument("second_moment_chaos: bad sampling budget");
    const auto& fam = noise.family;
    const bool atom = fam.tag == cov::Family::constant;
    if (!atom && !(eps > 0.0))
        throw std::invalid_argument("second_moment_chaos: eps must be positive");
    auto power = fam.as_power();
    if (!atom && !power)
        throw std::invalid_argument(
            "second_moment_chaos: spectral sampling needs a power-law density");

    const int ell = noise.ell;
    const auto weights = fk::TimeWeightMatrix::build(t, opt.grid_m, noise.alpha0);
    const paths::TimeGrid grid{t, opt.grid_m};
    const double heat0 = heat_convolve(u0, t, x, ell);
    // Damped spectral mass, without the (2 pi)^(-ell) transform factor.
    const double m_eps =
        atom ? std::pow(2.0 * kPi, ell) * fam.level
             : std::pow(2.0 * kPi, ell) * cov::damped_spectral_mass(fam, eps);
    const double m_w = weights.total_mass();

    ChaosSeries series;
    series.terms.push_back({0, heat0 * heat0, 0.0, heat0 * heat0, true});

    const bool gauss_datum = u0.kind == fk::InitialDatum::Kind::gaussian_decay;
    const double a_coef = gauss_datum ? u0.kappa + 0.5 / t : 0.0;

    for (int n = 1; n <= order_cap; ++n) {
        double coef = 1.0;
        for (int j = 1; j <= n; ++j) coef *= m_w * m_eps / (std::pow(2.0 * kPi, ell) * j);

        double value = 0.0, err = 0.0;
        if (atom) {
            // Spectral atom at 0: the integrand is |p_t*u0(x)|^2 exactly.
            value = coef * heat0 * heat0;
        } else {
            const double shape = 0.5 * power->alpha_spec;
            SeedSpec term_seed = opt.seed.with_stream(
                opt.seed.stream + static_cast<std::uint64_t>(n) * opt.shards);

            auto phi = [&](const std::vector<double>& times,
                           const std::vector<double>& xi) -> std::complex<double> {
                // exp(-Var(sum_j xi_j . bridge(s_j)) / 2) per coordinate.
                double q = 0.0;
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) {
                        double c = paths::bridge_cov(times[j], times[k], t);
                        double dot = 0.0;
                        for (int d = 0; d < ell; ++d)
                            dot += xi[static_cast<std::size_t>(j) * ell + d] *
                                   xi[static_cast<std::size_t>(k) * ell + d];
                        q += c * dot;
                    }
                std::complex<double> psi;
                // chi = sum_j (1 - s_j/t) xi_j, zeta = sum_j xi_j.
                double chi[3] = {0, 0, 0}, zeta[3] = {0, 0, 0}, eta[3] = {0, 0, 0};
                for (int j = 0; j < n; ++j)
                    for (int d = 0; d < ell; ++d) {
                        double v = xi[static_cast<std::size_t>(j) * ell + d];
                        zeta[d] += v;
                        eta[d] += times[j] / t * v;
                        chi[d] += (1.0 - times[j] / t) * v;
                    }
                if (!gauss_datum) {
                    double chi2 = 0.0, zx = 0.0;
                    for (int d = 0; d < ell; ++d) {
                        chi2 += chi[d] * chi[d];
                        zx += zeta[d] * x[d];
                    }
                    psi = std::exp(std::complex<double>(-0.5 * t * chi2, -zx));
                } else {
                    std::complex<double> expo(0.0, 0.0);
                    for (int d = 0; d < ell; ++d) {
                        std::complex<double> b(x[d] / t, -chi[d]);
                        expo += b * b / (4.0 * a_coef) - x[d] * x[d] / (2.0 * t);
                        expo -= std::complex<double>(0.0, eta[d] * x[d]);
                    }
                    psi = std::exp(expo) * std::pow(2.0 * t * a_coef, -0.5 * ell);
                }
                return std::exp(-0.5 * q) * psi;
            };

            auto one = [&](StreamRng& rng, bool&) {
                std::vector<double> s_times(n), r_times(n), xi(n * ell);
                for (int j = 0; j < n; ++j) {
                    auto [ci, cj] = weights.sample_cell_pair(rng);
                    s_times[j] = grid.midpoint(ci);
                    r_times[j] = grid.midpoint(cj);
                }
                for (int j = 0; j < n; ++j) {
                    double rho = std::sqrt(rng.gamma(shape, eps));
                    double dir[3] = {0, 0, 0}, norm = 0.0;
                    do {
                        norm = 0.0;
                        for (int d = 0; d < ell; ++d) {
                            dir[d] = rng.normal();
                            norm += dir[d] * dir[d];
                        }
                    } while (norm == 0.0);
                    norm = std::sqrt(norm);
                    for (int d = 0; d < ell; ++d)
                        xi[static_cast<std::size_t>(j) * ell + d] = rho * dir[d] / norm;
                }
                return std::real(phi(s_times, xi) * std::conj(phi(r_times, xi)));
            };

            auto shards = run_shards(opt.shards, term_seed, opt.samples, one);
            numeric::Accumulator merged;
            for (const auto& s : shards) merged.merge(s.acc);
            value = coef * merged.mean();
            err = coef * merged.stderr_mean();
        }

        bool reliable = err <= std::max(std::abs(value), 1e-300);
        double partial = series.terms.back().partial_sum + value;
        series.terms.push_back({n, value, err, partial, reliable});
        if (!reliable) {
            series.truncated_early = true;
            series.note = "term " + std::to_string(n) +
                          " dominated by Monte Carlo noise; series truncated";
            break;
        }
    }

    series.total = series.terms.back().partial_sum;
    double err2 = 0.0;
    for (const auto& term : series.terms) err2 += term.stderr_mean * term.stderr_mean;
    const auto k = series.terms.size();
    double tail = 0.0;
    if (k >= 3) {
        const auto& last = series.terms[k - 1];
        const auto& prev = series.terms[k - 2];
        if (last.reliable && prev.reliable && prev.value > 0.0) {
            series.tail_ratio = last.value / prev.value;
            if (series.tail_ratio > 0.0 && series.tail_ratio < 1.0)
                tail = last.value * series.tail_ratio / (1.0 - series.tail_ratio);
        }
    }
    series.uncertainty = std::sqrt(err2) + tail;
    return series;
}

BoundEstimate chaos_term_bound(const cov::NoiseParams& noise, int n, double t,
                               std::span<const double> x, const fk::InitialDatum& u0,
                               const ChaosOptions& opt, std::optional<double> constant_c) {
    cov::validate(noise);
    if (n < 0 || n > 12) throw std::invalid_argument("chaos_term_bound: n must lie in [0, 12]");
    if (!(t > 0.0)) throw std::invalid_argument("chaos_term_bound: t must be positive");
    if (x.size() != static_cast<std::size_t>(noise.ell))
        throw std::invalid_argument("chaos_term_bound: x must have ell coordinates");
    if (noise.family.tag != cov::Family::constant) {
        auto d = cov::dalang_check(noise.family);
        if (d.conclusive && !d.pass)
            throw std::invalid_argument("chaos_term_bound: spectral measure fails the "
                                        "high-frequency integrability condition");
    }

    const int ell = noise.ell;
    const double c_split = constant_c
                               ? *constant_c
                               : 2.0 * std::pow(t, 1.0 - noise.alpha0) / (1.0 - noise.alpha0);
    if (!(c_split > 0.0))
        throw std::invalid_argument("chaos_term_bound: splitting constant must be positive");
    const double heat0 = heat_convolve(u0, t, x, ell);

    BoundEstimate out;
    out.constant_c = c_split;
    if (n == 0) {
        out.value = heat0 * heat0;
        return out;
    }

    // Simplex volume t^n/n! times the constants in front of the integral.
    double front = heat0 * heat0;
    for (int j = 1; j <= n; ++j) front *= c_split * t / (std::pow(2.0 * kPi, ell) * j);

    const auto& fam = noise.family;
    if (fam.tag == cov::Family::constant) {
        out.value = front * std::pow(std::pow(2.0 * kPi, ell) * fam.level, n);
        return out;
    }

    auto power = fam.as_power();
    const bool gamma_route = power && power->alpha_spec < ell;
    const double reg = 1e-12 * t;

    std::function<double(StreamRng&, bool&)> one;
    if (gamma_route) {
        const double alpha = power->alpha_spec;
        const double beta = ell - alpha;
        double spectral_coef = std::pow(
            power->coef * std::pow(kPi, 0.5 * ell) * std::tgamma(0.5 * alpha) /
                std::tgamma(0.5 * ell),
            n);
        one = [&, alpha, beta, spectral_coef](StreamRng& rng, bool& flagged) {
            std::vector<double> s(n);
            for (auto& v : s) v = t * rng.uniform_pos();
            std::sort(s.begin(), s.end());
            std::vector<double> cb;
            bridge_matrix(s, t, cb);
            std::vector<double> u(n);
            double log_head = 0.0;
            for (int j = 0; j < n; ++j) {
                double a = rng.gamma(0.5 * beta, 1.0);
                double b = rng.gamma(0.5 * alpha, 1.0);
                u[j] = a / b;
                log_head += 0.5 * ell * std::log1p(u[j]);
            }
            std::vector<double> m = cb;
            for (int j = 0; j < n; ++j) m[static_cast<std::size_t>(j) * n + j] += u[j];
            if (!chol_lower(m, n)) {
                flagged = true;
                m = cb;
                for (int j = 0; j < n; ++j)
                    m[static_cast<std::size_t>(j) * n + j] += u[j] + reg;
                if (!chol_lower(m, n))
                    throw NumericalError(
                        "chaos_term_bound: time covariance not factorizable", reg);
            }
            double log_det = 0.0;
            for (int j = 0; j < n; ++j)
                log_det += 2.0 * std::log(m[static_cast<std::size_t>(j) * n + j]);
            return spectral_coef * std::exp(log_head - 0.5 * ell * log_det);
        };
    } else {
        one = [&](StreamRng& rng, bool& flagged) {
            std::vector<double> s(n);
            for (auto& v : s) v = t * rng.uniform_pos();
            std::sort(s.begin(), s.end());
            std::vector<double> cb;
            bridge_matrix(s, t, cb);
            std::vector<double> m = cb;
            if (!chol_lower(m, n)) {
                flagged = true;
                m = cb;
                for (int j = 0; j < n; ++j) m[static_cast<std::size_t>(j) * n + j] += reg;
                if (!chol_lower(m, n))
                    throw NumericalError(
                        "chaos_term_bound: time covariance not factorizable", reg);
            }
            double log_det = 0.0;
            for (int j = 0; j < n; ++j)
                log_det += 2.0 * std::log(m[static_cast<std::size_t>(j) * n + j]);
            // xi per coordinate ~ N(0, (2 C_B)^(-1)) via a transposed solve.
            std::vector<double> xi(static_cast<std::size_t>(n) * ell, 0.0);
            std::vector<double> zbuf(n);
            for (int d = 0; d < ell; ++d) {
                for (int j = 0; j < n; ++j) zbuf[j] = rng.normal() / std::numbers::sqrt2;
                for (int j = n - 1; j >= 0; --j) {
                    double v = zbuf[j];
                    for (int k = j + 1; k < n; ++k)
                        v -= m[static_cast<std::size_t>(k) * n + j] *
                             xi[static_cast<std::size_t>(k) * ell + d];
                    xi[static_cast<std::size_t>(j) * ell + d] =
                        v / m[static_cast<std::size_t>(j) * n + j];
                }
            }
            double w = 1.0;
            for (int j = 0; j < n; ++j) {
                double rho2 = 0.0;
                for (int d = 0; d < ell; ++d) {
                    double v = xi[static_cast<std::size_t>(j) * ell + d];
                    rho2 += v * v;
                }
                w *= fam.density_at(std::sqrt(rho2));
            }
            return w * std::exp(0.5 * ell * (n * std::log(kPi) - log_det));
        };
    }

    auto shards = run_shards(opt.shards, opt.seed, opt.samples, one);
    numeric::Accumulator merged;
    for (const auto& s : shards) {
        merged.merge(s.acc);
        out.regularized = out.regularized || s.regularized;
    }
    out.value = front * merged.mean();
    out.stderr_mean = front * merged.stderr_mean();
    return out;
}

} // namespace pamkit::chaos
