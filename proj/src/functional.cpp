#include "pamkit/functional.hpp"

#include "pamkit/errors.hpp"
#include "pamkit/numeric.hpp"
#include "pamkit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace pamkit::fk {

namespace {

// Second antiderivative of |u|^(-alpha0); its double differences give the
// exact cell integrals.
double weight_primitive(double u, double alpha0) {
    double c = (1.0 - alpha0) * (2.0 - alpha0);
    return std::pow(std::abs(u), 2.0 - alpha0) / c;
}

} // namespace

TimeWeightMatrix TimeWeightMatrix::build(double t, int m, double alpha0) {
    if (!(t > 0.0)) throw std::invalid_argument("TimeWeightMatrix: t must be positive");
    if (m < 1) throw std::invalid_argument("TimeWeightMatrix: m must be >= 1");
    if (!(alpha0 >= 0.0 && alpha0 < 1.0))
        throw std::invalid_argument("TimeWeightMatrix: alpha0 must lie in [0, 1)");
    TimeWeightMatrix w;
    w.t_ = t;
    w.m_ = m;
    w.alpha0_ = alpha0;
    const double h = t / m;
    w.band_.resize(m);
    for (int k = 0; k < m; ++k) {
        w.band_[k] = weight_primitive((k + 1) * h, alpha0) +
                     weight_primitive((k - 1) * h, alpha0) -
                     2.0 * weight_primitive(k * h, alpha0);
    }
    w.total_mass_ = 2.0 * std::pow(t, 2.0 - alpha0) / ((1.0 - alpha0) * (2.0 - alpha0));

    // Cumulative weights over signed offsets, for cell-pair sampling.
    w.offset_cdf_.resize(2 * m - 1);
    double acc = 0.0;
    for (int d = -(m - 1); d <= m - 1; ++d) {
        acc += w.band_[std::abs(d)] * (m - std::abs(d));
        w.offset_cdf_[d + m - 1] = acc;
    }
    return w;
}

std::pair<int, int> TimeWeightMatrix::sample_cell_pair(StreamRng& rng) const {
    double u = rng.uniform() * offset_cdf_.back();
    auto it = std::upper_bound(offset_cdf_.begin(), offset_cdf_.end(), u);
    int d = static_cast<int>(it - offset_cdf_.begin()) - (m_ - 1);
    if (d > m_ - 1) d = m_ - 1;
    int span = m_ - std::abs(d);
    int base = static_cast<int>(rng.uniform() * span);
    if (base >= span) base = span - 1;
    int i = d >= 0 ? base + d : base;
    int j = i - d;
    return {i, j};
}

RadialKernel RadialKernel::constant(double level) {
    RadialKernel k;
    k.kind_ = Kind::constant;
    k.level_ = level;
    return k;
}

RadialKernel RadialKernel::smoothed(std::shared_ptr<const cov::SmoothedKernel> table) {
    if (!table) throw std::invalid_argument("RadialKernel: null table");
    RadialKernel k;
    k.kind_ = Kind::table;
    k.table_ = std::move(table);
    return k;
}

RadialKernel RadialKernel::power(double alpha, double clip_value) {
    if (!(alpha > 0.0 && alpha < 2.0))
        throw std::invalid_argument("RadialKernel: power exponent must lie in (0, 2)");
    if (!(clip_value > 0.0)) throw std::invalid_argument("RadialKernel: clip must be positive");
    RadialKernel k;
    k.kind_ = Kind::power;
    k.alpha_ = alpha;
    k.clip_ = clip_value;
    return k;
}

double RadialKernel::operator()(double r) const {
    switch (kind_) {
    case Kind::constant:
        return level_;
    case Kind::table:
        return (*table_)(r);
    case Kind::power:
        if (r <= 0.0) return clip_;
        return std::min(std::pow(r, -alpha_), clip_);
    }
    return 0.0;
}

namespace {

// Interaction of two shifted midpoint tracks A, B (m x ell, interleaved):
// sum over cells of kernel(|A_i - B_j|) * band[|i-j|].
double pair_interaction(const double* a, const double* b, int m, int ell,
                        const std::vector<double>& band, const RadialKernel& kernel,
                        QtStats* stats) {
    double q = 0.0;
    const bool clipped = kernel.is_clipped_power();
    const double clip = kernel.clip_value();
    std::uint64_t hits = 0;
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * ell;
        for (int j = 0; j < m; ++j) {
            const double* bj = b + static_cast<std::size_t>(j) * ell;
            double d2 = 0.0;
            for (int d = 0; d < ell; ++d) {
                double diff = ai[d] - bj[d];
                d2 += diff * diff;
            }
            double v = kernel(std::sqrt(d2));
            if (clipped && v >= clip) ++hits;
            q += v * band[static_cast<std::size_t>(std::abs(i - j))];
        }
    }
    if (stats) {
        stats->kernel_evals += static_cast<std::uint64_t>(m) * m;
        stats->clip_hits += hits;
    }
    return q;
}

void shifted_midpoints(const paths::PathSample& p, const AffineShift* shift,
                       std::vector<double>& out) {
    const int m = p.grid.m;
    const int ell = p.ell;
    out.resize(static_cast<std::size_t>(m) * ell);
    for (int i = 0; i < m; ++i) {
        double s = p.grid.midpoint(i);
        const double* v = p.mid_at(i);
        for (int d = 0; d < ell; ++d) {
            double sh = shift ? shift->offset[d] + shift->slope[d] * s : 0.0;
            out[static_cast<std::size_t>(i) * ell + d] = v[d] + sh;
        }
    }
}

} // namespace

double qt_evaluate(std::span<const paths::PathSample> path_set, const RadialKernel& kernel,
                   const TimeWeightMatrix& weights, std::span<const AffineShift> shifts,
                   QtStats* stats) {
    const auto n = path_set.size();
    if (n == 0) return 0.0;
    if (!shifts.empty() && shifts.size() != n)
        throw std::invalid_argument("qt_evaluate: shifts must be empty or one per path");
    const paths::TimeGrid grid = path_set[0].grid;
    const int ell = path_set[0].ell;
    if (ell > 3) throw std::invalid_argument("qt_evaluate: ell must be <= 3");
    if (grid.m != weights.cells() || std::abs(grid.t - weights.t()) > 1e-12 * grid.t)
        throw std::invalid_argument("qt_evaluate: paths and weight matrix use different grids");
    for (const auto& p : path_set) {
        if (!(p.grid == grid) || p.ell != ell)
            throw std::invalid_argument("qt_evaluate: paths must share one grid");
        if (p.mids.empty()) throw std::invalid_argument("qt_evaluate: paths lack midpoint values");
    }
    std::vector<std::vector<double>> tracks(n);
    for (std::size_t j = 0; j < n; ++j)
        shifted_midpoints(path_set[j], shifts.empty() ? nullptr : &shifts[j], tracks[j]);
    double q = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j + 1; k < n; ++k)
            q += pair_interaction(tracks[j].data(), tracks[k].data(), grid.m, ell,
                                  weights.band(), kernel, stats);
    return q;
}

double InitialDatum::operator()(std::span<const double> x) const {
    switch (kind) {
    case Kind::constant_one:
        return 1.0;
    case Kind::ball_indicator: {
        double d2 = 0.0;
        for (double c : x) d2 += c * c;
        return d2 <= radius * radius ? 1.0 : 0.0;
    }
    case Kind::gaussian_decay: {
        double d2 = 0.0;
        for (double c : x) d2 += c * c;
        return std::exp(-kappa * d2);
    }
    }
    return 0.0;
}

Extrapolation eps_extrapolate(std::span<const LadderPoint> ladder) {
    if (ladder.size() < 3)
        throw std::invalid_argument("eps_extrapolate: need at least three rungs");
    for (std::size_t i = 1; i < ladder.size(); ++i)
        if (!(ladder[i].eps < ladder[i - 1].eps))
            throw std::invalid_argument("eps_extrapolate: ladder must have decreasing eps");

    Extrapolation ex;
    const auto& p1 = ladder[ladder.size() - 3];
    const auto& p2 = ladder[ladder.size() - 2];
    const auto& p3 = ladder[ladder.size() - 1];
    double noise = std::max({p1.stderr_mean, p2.stderr_mean, p3.stderr_mean});

    // Monotonicity across the whole ladder, judged against MC noise.
    for (std::size_t i = 2; i < ladder.size(); ++i) {
        double d1 = ladder[i - 1].mean - ladder[i - 2].mean;
        double d2 = ladder[i].mean - ladder[i - 1].mean;
        double tol = 2.0 * (ladder[i].stderr_mean + ladder[i - 1].stderr_mean +
                            ladder[i - 2].stderr_mean);
        if (d1 * d2 < 0.0 && std::min(std::abs(d1), std::abs(d2)) > tol)
            ex.warn_nonmonotone = true;
    }

    double diff12 = p1.mean - p2.mean;
    double diff23 = p2.mean - p3.mean;
    double scale = std::max({std::abs(p1.mean), std::abs(p3.mean), 1e-300});
    if (std::abs(diff12) <= std::max(2.0 * noise, 1e-13 * scale) &&
        std::abs(diff23) <= std::max(2.0 * noise, 1e-13 * scale)) {
        ex.flat = true;
        ex.value = p3.mean;
        ex.uncertainty = p3.stderr_mean;
        ex.note = "ladder flat at noise level; finest rung reported";
        return ex;
    }

    // Solve (e1^p - e2^p) / (e2^p - e3^p) = diff12 / diff23 for p.
    double target = diff12 / diff23;
    auto ratio_at = [&](double p) {
        double a = std::pow(p1.eps, p), b = std::pow(p2.eps, p), c = std::pow(p3.eps, p);
        return (a - b) / (b - c) - target;
    };
    double p_fit = 1.0;
    bool solved = false;
    if (target > 0.0) {
        double lo = 0.02, hi = 8.0;
        double flo = ratio_at(lo), fhi = ratio_at(hi);
        if (flo * fhi < 0.0) {
            p_fit = numeric::bisect(ratio_at, lo, hi, 1e-10);
            solved = true;
        }
    }
    if (!solved) {
        ex.note = "power fit did not bracket; exponent fixed at 1";
        ex.warn_nonmonotone = ex.warn_nonmonotone || target <= 0.0;
    }
    double denom = std::pow(p2.eps, p_fit) - std::pow(p3.eps, p_fit);
    double b_coef = diff23 / denom;
    double a = p3.mean - b_coef * std::pow(p3.eps, p_fit);
    double q = std::pow(p3.eps, p_fit) / denom;
    double sigma_lin =
        std::sqrt((1.0 + q) * (1.0 + q) * p3.stderr_mean * p3.stderr_mean +
                  q * q * p2.stderr_mean * p2.stderr_mean);

    double residual = 0.0;
    if (ladder.size() >= 4) {
        // Refit on the rung triple shifted by one and use the spread.
        std::vector<LadderPoint> shifted(ladder.begin() + (ladder.size() - 4),
                                         ladder.begin() + (ladder.size() - 1));
        try {
            Extrapolation prev = eps_extrapolate(shifted);
            residual = std::abs(prev.value - a);
        } catch (const std::exception&) {
            residual = 0.0;
        }
    }
    ex.value = a;
    ex.exponent = p_fit;
    ex.uncertainty = std::sqrt(sigma_lin * sigma_lin + residual * residual);
    return ex;
}

namespace {

enum class Mode { bridge_data, motion_data, bridge_pure };

struct Rung {
    double eps = 0.0;
    RadialKernel kernel = RadialKernel::constant(0.0);
};

struct ShardResult {
    std::vector<numeric::Accumulator> acc; // one per rung
    std::uint64_t accepted = 0;
    QtStats stats;
    std::exception_ptr error;
};

double max_point_norm(std::span<const std::array<double, 3>> pts, int ell) {
    double best = 0.0;
    for (const auto& p : pts) {
        double d2 = 0.0;
        for (int d = 0; d < ell; ++d) d2 += p[d] * p[d];
        best = std::max(best, std::sqrt(d2));
    }
    return best;
}

MomentEstimate run_engine(const cov::NoiseParams& noise, int n, double t,
                          std::span<const std::array<double, 3>> points,
                          const InitialDatum& u0, Mode mode, const MomentOptions& opt) {
    cov::validate(noise);
    if (n < 1) throw std::invalid_argument("moment estimator: n must be >= 1");
    if (!(t > 0.0)) throw std::invalid_argument("moment estimator: t must be positive");
    if (noise.ell > 3)
        throw std::invalid_argument("moment estimator: sampling supports ell <= 3");
    if (opt.samples < 2) throw std::invalid_argument("moment estimator: need >= 2 samples");
    if (opt.grid_m < 2) throw std::invalid_argument("moment estimator: grid_m must be >= 2");
    if (opt.shards < 1) throw std::invalid_argument("moment estimator: shards must be >= 1");
    if (noise.family.tag == cov::Family::white_1d)
        throw std::invalid_argument(
            "moment estimator: white noise kernel cannot be evaluated along paths; "
            "use a mollified family");
    if (mode == Mode::bridge_data && static_cast<int>(points.size()) != n)
        throw std::invalid_argument("moment estimator: need one spatial point per factor");

    // Interaction kernels, one rung per mollification level.
    std::vector<Rung> rungs;
    if (noise.family.tag == cov::Family::constant) {
        if (!opt.eps_ladder.empty())
            throw std::invalid_argument("moment estimator: constant family takes no eps ladder");
        rungs.push_back({0.0, RadialKernel::constant(noise.family.level)});
    } else if (opt.exact_kernel) {
        if (noise.family.tag != cov::Family::riesz)
            throw std::invalid_argument("moment estimator: exact kernel applies to riesz only");
        if (!opt.eps_ladder.empty())
            throw std::invalid_argument("moment estimator: exact kernel takes no eps ladder");
        rungs.push_back({0.0, RadialKernel::power(noise.family.alpha, opt.clip_value)});
    } else {
        if (opt.eps_ladder.empty())
            throw std::invalid_argument("moment estimator: mollified kernel needs an eps ladder");
        for (std::size_t i = 0; i < opt.eps_ladder.size(); ++i) {
            double e = opt.eps_ladder[i];
            if (!(e > 0.0)) throw std::invalid_argument("moment estimator: eps must be positive");
            if (i > 0 && !(e < opt.eps_ladder[i - 1]))
                throw std::invalid_argument("moment estimator: eps ladder must decrease");
        }
        double r_max = 40.0 * std::sqrt(static_cast<double>(noise.ell) * t) +
                       2.0 * max_point_norm(points, noise.ell) + 1.0;
        for (double e : opt.eps_ladder) {
            auto table = std::make_shared<cov::SmoothedKernel>(
                cov::SmoothedKernel::build(noise.family, e, r_max));
            rungs.push_back({e, RadialKernel::smoothed(std::move(table))});
        }
    }

    const auto grid = paths::TimeGrid{t, opt.grid_m};
    const auto weights = TimeWeightMatrix::build(t, opt.grid_m, noise.alpha0);
    const int ell = noise.ell;
    const auto n_rungs = rungs.size();
    const auto shard_count = static_cast<std::uint64_t>(opt.shards);
    const std::uint64_t base_quota = opt.samples / shard_count;
    const std::uint64_t extra = opt.samples % shard_count;

    std::vector<ShardResult> shard_out(opt.shards);
    parallel_for(static_cast<std::size_t>(opt.shards), [&](std::size_t s) {
        ShardResult& out = shard_out[s];
        out.acc.resize(n_rungs);
        try {
            StreamRng rng(opt.seed.with_stream(opt.seed.stream + s));
            const std::uint64_t quota = base_quota + (s < extra ? 1 : 0);
            std::vector<paths::PathSample> batch;
            std::vector<AffineShift> shifts;
            std::vector<std::vector<double>> tracks(n);
            bool sink_open = opt.path_sink && s == 0;
            for (std::uint64_t it = 0; it < quota; ++it) {
                batch.clear();
                shifts.clear();
                double log_datum = 0.0;
                bool zero_weight = false;
                for (int j = 0; j < n; ++j) {
                    paths::PathSample p = paths::sample_bm(grid, ell, rng);
                    if (mode != Mode::motion_data) p = paths::to_bridge(std::move(p));
                    if (mode == Mode::bridge_data) {
                        AffineShift sh;
                        double yj[3] = {0, 0, 0};
                        for (int d = 0; d < ell; ++d) yj[d] = std::sqrt(t) * rng.normal();
                        double arg[3];
                        for (int d = 0; d < ell; ++d) {
                            sh.offset[d] = points[j][d];
                            sh.slope[d] = yj[d] / t;
                            arg[d] = points[j][d] + yj[d];
                        }
                        shifts.push_back(sh);
                        double v = u0(std::span<const double>(arg, ell));
                        if (v <= 0.0) zero_weight = true;
                        else log_datum += std::log(v);
                    } else if (mode == Mode::motion_data) {
                        double arg[3];
                        const double* end = p.terminal();
                        for (int d = 0; d < ell; ++d) arg[d] = points[0][d] + end[d];
                        double v = u0(std::span<const double>(arg, ell));
                        if (v <= 0.0) zero_weight = true;
                        else log_datum += std::log(v);
                    }
                    batch.push_back(std::move(p));
                }
                if (sink_open)
                    for (const auto& p : batch)
                        if (!opt.path_sink(p)) { sink_open = false; break; }
                if (zero_weight) {
                    for (auto& a : out.acc) a.add(0.0);
                    continue;
                }
                ++out.accepted;
                for (int j = 0; j < n; ++j)
                    shifted_midpoints(batch[j], shifts.empty() ? nullptr : &shifts[j],
                                      tracks[j]);
                for (std::size_t r = 0; r < n_rungs; ++r) {
                    double q = 0.0;
                    for (int j = 0; j < n; ++j)
                        for (int k = j + 1; k < n; ++k)
                            q += pair_interaction(tracks[j].data(), tracks[k].data(), grid.m,
                                                  ell, weights.band(), rungs[r].kernel,
                                                  &out.stats);
                    double expo = q + log_datum;
                    if (!std::isfinite(expo))
                        throw NumericalError("moment estimator: non-finite exponent", 0.0);
                    if (expo > opt.exponent_cap)
                        throw HeavyTailError(
                            "moment estimator: sample exponent exceeded the overflow guard; "
                            "the batch was abandoned (reduce t, raise eps, or lower n)",
                            expo);
                    out.acc[r].add(std::exp(expo));
                }
            }
        } catch (...) {
            out.error = std::current_exception();
        }
    });

    for (const auto& s : shard_out)
        if (s.error) std::rethrow_exception(s.error);

    MomentEstimate est;
    est.seed = opt.seed;
    est.samples = opt.samples;
    std::uint64_t accepted = 0;
    QtStats stats;
    std::vector<numeric::Accumulator> merged(n_rungs);
    for (const auto& s : shard_out) {
        for (std::size_t r = 0; r < n_rungs; ++r) merged[r].merge(s.acc[r]);
        accepted += s.accepted;
        stats.kernel_evals += s.stats.kernel_evals;
        stats.clip_hits += s.stats.clip_hits;
    }
    for (std::size_t r = 0; r < n_rungs; ++r)
        est.ladder.push_back({rungs[r].eps, merged[r].mean(), merged[r].stderr_mean()});
    est.mean = est.ladder.back().mean;
    est.stderr_mean = est.ladder.back().stderr_mean;
    est.accept_fraction =
        static_cast<double>(accepted) / static_cast<double>(opt.samples);
    est.clip_hit_rate = stats.kernel_evals
                            ? static_cast<double>(stats.clip_hits) /
                                  static_cast<double>(stats.kernel_evals)
                            : 0.0;
    if (opt.extrapolate && est.ladder.size() >= 3)
        est.extrapolated = eps_extrapolate(est.ladder);
    return est;
}

} // namespace

MomentEstimate moment_fk_bridge(const cov::NoiseParams& noise, int n, double t,
                                std::span<const std::array<double, 3>> points,
                                const InitialDatum& u0, const MomentOptions& opt) {
    return run_engine(noise, n, t, points, u0, Mode::bridge_data, opt);
}

MomentEstimate moment_fk_bm(const cov::NoiseParams& noise, int n, double t,
                            std::array<double, 3> x, const InitialDatum& u0,
                            const MomentOptions& opt) {
    std::array<double, 3> pts[1] = {x};
    return run_engine(noise, n, t, std::span<const std::array<double, 3>>(pts, 1), u0,
                      Mode::motion_data, opt);
}

MomentEstimate bridge_functional(const cov::NoiseParams& noise, int n, double t,
                                 const MomentOptions& opt) {
    InitialDatum one;
    return run_engine(noise, n, t, {}, one, Mode::bridge_pure, opt);
}

OracleValue mean_q_oracle(const cov::SpectralFamily& fam, double alpha0, double t, double eps,
                          double rel_tol) {
    if (!(t > 0.0)) throw std::invalid_argument("mean_q_oracle: t must be positive");
    if (!(eps > 0.0)) throw std::invalid_argument("mean_q_oracle: eps must be positive");
    if (fam.tag == cov::Family::white_1d)
        throw std::invalid_argument("mean_q_oracle: white noise needs mollification");

    // Mollified kernel at the origin as a function of the damping beta.
    std::function<double(double)> mass;
    if (fam.tag == cov::Family::constant) {
        double level = fam.level;
        mass = [level](double) { return level; };
    } else if (auto p = fam.as_power()) {
        double coef = cov::damped_spectral_mass(fam, 1.0); // = C * 1^(-a/2)
        double a = 0.5 * p->alpha_spec;
        mass = [coef, a](double beta) { return coef * std::pow(beta, -a); };
    } else {
        // Custom density: tabulate over the needed beta range.
        double beta_lo = eps, beta_hi = eps + 0.25 * t + 1e-12;
        const int nb = 257;
        auto table = std::make_shared<std::vector<double>>(nb);
        for (int i = 0; i < nb; ++i) {
            double beta = beta_lo + (beta_hi - beta_lo) * i / (nb - 1);
            (*table)[i] = cov::damped_spectral_mass(fam, beta);
        }
        mass = [table, beta_lo, beta_hi, nb](double beta) {
            double u = (beta - beta_lo) / (beta_hi - beta_lo) * (nb - 1);
            int i = std::clamp(static_cast<int>(u), 0, nb - 2);
            double f = u - i;
            return (*table)[i] * (1.0 - f) + (*table)[i + 1] * f;
        };
    }

    auto evaluate = [&](int m) {
        auto w = TimeWeightMatrix::build(t, m, alpha0);
        std::vector<double> v(m);
        for (int i = 0; i < m; ++i) {
            double s = (i + 0.5) * t / m;
            v[i] = s * (t - s) / t;
        }
        double acc = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                acc += w.at(i, j) * mass(eps + 0.5 * (v[i] + v[j]));
        return acc;
    };

    double prev = evaluate(256);
    double achieved = std::numeric_limits<double>::infinity();
    for (int m : {512, 1024, 2048, 4096}) {
        double cur = evaluate(m);
        achieved = std::abs(cur - prev) / std::max(std::abs(cur), 1e-300);
        prev = cur;
        if (achieved <= rel_tol) return {cur, achieved};
    }
    throw NumericalError("mean_q_oracle: refinement did not reach tolerance", achieved);
}

} // namespace pamkit::fk
