#include "pamkit/variational.hpp"

#include "pamkit/errors.hpp"
#include "pamkit/numeric.hpp"
#include "pamkit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace pamkit::var {

namespace {

constexpr double kPi = std::numbers::pi;

} // namespace

ProfileGrid make_profile(int slices, double box_l, int mx) {
    if (slices < 1) throw std::invalid_argument("profile: slices must be >= 1");
    if (!(box_l > 0.0)) throw std::invalid_argument("profile: box half-width must be positive");
    if (mx < 5) throw std::invalid_argument("profile: need at least 5 grid points");
    ProfileGrid g;
    g.slices = slices;
    g.box_l = box_l;
    g.mx = mx;
    g.values.assign(static_cast<std::size_t>(slices) * mx, 0.0);
    return g;
}

double slice_mass(const ProfileGrid& g, int slice) {
    double m = 0.0;
    for (int k = 0; k < g.mx; ++k) m += g.at(slice, k) * g.at(slice, k);
    return m * g.dx();
}

void renormalize(ProfileGrid& g) {
    for (int i = 0; i < g.slices; ++i) {
        double m = slice_mass(g, i);
        if (!(m > 0.0))
            throw std::invalid_argument("renormalize: slice with zero mass");
        double s = 1.0 / std::sqrt(m);
        for (int k = 0; k < g.mx; ++k) g.at(i, k) *= s;
    }
}

EnergyModel::EnergyModel(double alpha0, cov::SpectralFamily family, double eps, int slices,
                         double box_l, int mx)
    : alpha0_(alpha0),
      family_(std::move(family)),
      eps_(eps),
      slices_(slices),
      box_l_(box_l),
      mx_(mx),
      weights_(fk::TimeWeightMatrix::build(1.0, std::max(slices, 1), alpha0)) {
    if (family_.ell != 1)
        throw std::invalid_argument("variational energy: one-dimensional families only");
    if (eps < 0.0) throw std::invalid_argument("variational energy: eps must be >= 0");
    make_profile(slices, box_l, mx); // shape validation
    if (family_.tag == cov::Family::constant) return; // atom handled in closed form

    auto dal = cov::dalang_check(family_);
    if (dal.conclusive && !dal.pass)
        throw std::invalid_argument(
            "variational energy: spectral measure fails the high-frequency "
            "integrability condition");

    const double dxv = 2.0 * box_l / (mx - 1);
    // Central differences carry the symbol sin(xi dx)/dx, so modes beyond
    // xi dx ~ 0.8 pay far less kinetic cost than they should while still
    // collecting interaction mass; left unchecked, the maximizer exploits
    // that with grid-scale spikes whose transform never decays. Stop the
    // quadrature where the kinetic pricing is still faithful (within ~20%).
    // Resolved profiles lose only the transform tail beyond the band, which
    // the |Fg^2| <= min(1, 2 ||grad g|| / xi) envelope makes negligible once
    // the grid resolves the profile width.
    const double cutoff = 0.8 / dxv;
    auto push = [&](double xi, double w_rule_density) {
        nodes_.push_back(xi);
        wq_.push_back(w_rule_density * std::exp(-eps_ * xi * xi) / kPi);
    };

    auto power = family_.as_power();
    double body_start = 0.0;
    if (power && power->alpha_spec < 1.0) {
        // Head with the u = xi^alpha substitution: the singular density
        // becomes a flat weight, the transform factor stays smooth.
        const double a = power->alpha_spec;
        const double head_end = std::min(1.0, cutoff);
        const auto& rule = numeric::gauss_legendre(32);
        const double u_end = std::pow(head_end, a);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            double u = 0.5 * u_end * (rule.nodes[q] + 1.0);
            double w = 0.5 * u_end * rule.weights[q];
            push(std::pow(u, 1.0 / a), w * power->coef / a);
        }
        body_start = head_end;
    } else {
        // Geometric panels toward zero cover possible head singularities
        // of custom densities and the kinked power densities.
        const double head_end = std::min(kPi / box_l, cutoff);
        const auto& rule = numeric::gauss_legendre(8);
        double hi = head_end;
        for (int p = 0; p < 40 && hi > head_end * 1e-9; ++p) {
            double lo = 0.5 * hi;
            for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
                double xi = 0.5 * (hi - lo) * (rule.nodes[q] + 1.0) + lo;
                double w = 0.5 * (hi - lo) * rule.weights[q];
                push(xi, w * family_.density_at(xi));
            }
            hi = lo;
        }
        body_start = head_end;
    }
    if (cutoff > body_start) {
        // Panels short enough to resolve the oscillation scale of the
        // slice transforms (wavelength 2 pi / L at the box edge).
        const double width = std::min(kPi / box_l, cutoff - body_start);
        const int panels = static_cast<int>(std::ceil((cutoff - body_start) / width));
        const auto& rule = numeric::gauss_legendre(12);
        for (int p = 0; p < panels; ++p) {
            double lo = body_start + (cutoff - body_start) * p / panels;
            double hi = body_start + (cutoff - body_start) * (p + 1) / panels;
            for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
                double xi = 0.5 * (hi - lo) * (rule.nodes[q] + 1.0) + lo;
                double w = 0.5 * (hi - lo) * rule.weights[q];
                push(xi, w * family_.density_at(xi));
            }
        }
    }

    cos_tab_.resize(nodes_.size() * static_cast<std::size_t>(mx));
    sin_tab_.resize(nodes_.size() * static_cast<std::size_t>(mx));
    for (std::size_t q = 0; q < nodes_.size(); ++q)
        for (int k = 0; k < mx; ++k) {
            double x = -box_l + k * dxv;
            cos_tab_[q * mx + k] = std::cos(nodes_[q] * x);
            sin_tab_[q * mx + k] = std::sin(nodes_[q] * x);
        }
}

void EnergyModel::slice_transforms(const ProfileGrid& g, std::vector<double>& a,
                                   std::vector<double>& b) const {
    const std::size_t nq = nodes_.size();
    const double dxv = g.dx();
    a.assign(static_cast<std::size_t>(slices_) * nq, 0.0);
    b.assign(static_cast<std::size_t>(slices_) * nq, 0.0);
    for (int i = 0; i < slices_; ++i) {
        for (std::size_t q = 0; q < nq; ++q) {
            double ca = 0.0, cb = 0.0;
            const double* crow = cos_tab_.data() + q * mx_;
            const double* srow = sin_tab_.data() + q * mx_;
            for (int k = 0; k < mx_; ++k) {
                double g2 = g.at(i, k) * g.at(i, k);
                ca += g2 * crow[k];
                cb += g2 * srow[k];
            }
            a[static_cast<std::size_t>(i) * nq + q] = ca * dxv;
            b[static_cast<std::size_t>(i) * nq + q] = cb * dxv;
        }
    }
}

EnergyBreakdown EnergyModel::energy(const ProfileGrid& g, bool strict) const {
    if (g.slices != slices_ || g.mx != mx_ || g.box_l != box_l_)
        throw std::invalid_argument("energy: profile shape does not match the model");
    if (strict) {
        double dev = 0.0;
        for (int i = 0; i < slices_; ++i)
            dev = std::max(dev, std::abs(slice_mass(g, i) - 1.0));
        if (dev > 1e-6)
            throw std::invalid_argument("energy: profile slices not normalized (max "
                                        "deviation " +
                                        std::to_string(dev) + ")");
    }

    EnergyBreakdown eb;
    if (family_.tag == cov::Family::constant) {
        // Spectral atom at 0 sees only the slice masses, all 1.
        eb.interaction = family_.level * weights_.total_mass();
    } else {
        std::vector<double> a, b;
        slice_transforms(g, a, b);
        const std::size_t nq = nodes_.size();
        for (std::size_t q = 0; q < nq; ++q) {
            double acc = 0.0;
            for (int i = 0; i < slices_; ++i) {
                double va = 0.0, vb = 0.0;
                for (int j = 0; j < slices_; ++j) {
                    double w = weights_.at(i, j);
                    va += w * a[static_cast<std::size_t>(j) * nq + q];
                    vb += w * b[static_cast<std::size_t>(j) * nq + q];
                }
                acc += a[static_cast<std::size_t>(i) * nq + q] * va +
                       b[static_cast<std::size_t>(i) * nq + q] * vb;
            }
            eb.interaction += wq_[q] * acc;
        }
    }

    const double dxv = g.dx();
    double kin = 0.0;
    for (int i = 0; i < slices_; ++i)
        for (int k = 0; k < mx_; ++k) {
            double up = k + 1 < mx_ ? g.at(i, k + 1) : 0.0;
            double dn = k - 1 >= 0 ? g.at(i, k - 1) : 0.0;
            double d = (up - dn) / (2.0 * dxv);
            kin += d * d;
        }
    eb.kinetic = 0.5 * kin * dxv / slices_;
    eb.total = eb.interaction - eb.kinetic;
    return eb;
}

std::vector<double> EnergyModel::gradient(const ProfileGrid& g, bool project) const {
    if (g.slices != slices_ || g.mx != mx_ || g.box_l != box_l_)
        throw std::invalid_argument("gradient: profile shape does not match the model");
    const double dxv = g.dx();
    std::vector<double> grad(static_cast<std::size_t>(slices_) * mx_, 0.0);

    if (family_.tag != cov::Family::constant) {
        std::vector<double> a, b;
        slice_transforms(g, a, b);
        const std::size_t nq = nodes_.size();
        // Weighted row sums (W a)_iq, (W b)_iq scaled by the quadrature.
        std::vector<double> wa(static_cast<std::size_t>(slices_) * nq);
        std::vector<double> wb(static_cast<std::size_t>(slices_) * nq);
        for (std::size_t q = 0; q < nq; ++q)
            for (int i = 0; i < slices_; ++i) {
                double va = 0.0, vb = 0.0;
                for (int j = 0; j < slices_; ++j) {
                    double w = weights_.at(i, j);
                    va += w * a[static_cast<std::size_t>(j) * nq + q];
                    vb += w * b[static_cast<std::size_t>(j) * nq + q];
                }
                wa[static_cast<std::size_t>(i) * nq + q] = wq_[q] * va;
                wb[static_cast<std::size_t>(i) * nq + q] = wq_[q] * vb;
            }
        for (int i = 0; i < slices_; ++i)
            for (int k = 0; k < mx_; ++k) {
                double s = 0.0;
                const std::size_t row = static_cast<std::size_t>(i) * nq;
                for (std::size_t q = 0; q < nq; ++q)
                    s += cos_tab_[q * mx_ + k] * wa[row + q] +
                         sin_tab_[q * mx_ + k] * wb[row + q];
                grad[static_cast<std::size_t>(i) * mx_ + k] = 4.0 * g.at(i, k) * dxv * s;
            }
    }

    // Kinetic part: d(total)/dg = -dK/dg with K from central differences.
    for (int i = 0; i < slices_; ++i) {
        auto diff = [&](int k) {
            if (k < 0 || k >= mx_) return 0.0;
            double up = k + 1 < mx_ ? g.at(i, k + 1) : 0.0;
            double dn = k - 1 >= 0 ? g.at(i, k - 1) : 0.0;
            return (up - dn) / (2.0 * dxv);
        };
        for (int k = 0; k < mx_; ++k)
            grad[static_cast<std::size_t>(i) * mx_ + k] -=
                (diff(k - 1) - diff(k + 1)) / (2.0 * slices_);
    }

    if (project) {
        for (int i = 0; i < slices_; ++i) {
            grad[static_cast<std::size_t>(i) * mx_] = 0.0;
            grad[static_cast<std::size_t>(i) * mx_ + mx_ - 1] = 0.0;
            double dot = 0.0, norm2 = 0.0;
            for (int k = 0; k < mx_; ++k) {
                dot += grad[static_cast<std::size_t>(i) * mx_ + k] * g.at(i, k);
                norm2 += g.at(i, k) * g.at(i, k);
            }
            if (norm2 > 0.0) {
                double coef = dot / norm2;
                for (int k = 0; k < mx_; ++k)
                    grad[static_cast<std::size_t>(i) * mx_ + k] -= coef * g.at(i, k);
            }
        }
    }
    return grad;
}

namespace {

struct StartOutcome {
    EnergyBreakdown best;
    ProfileGrid profile;
    std::vector<TracePoint> trace;
    bool converged = false;
    std::exception_ptr error;
};

StartOutcome ascend(const EnergyModel& model, ProfileGrid g, const SolverOptions& opt,
                    double guard) {
    StartOutcome out;
    renormalize(g);
    EnergyBreakdown eb = model.energy(g, false);
    out.trace.push_back({0, eb.total, eb.interaction, eb.kinetic, 0.0});
    double step = opt.step0;
    for (int iter = 1; iter <= opt.max_iters; ++iter) {
        auto grad = model.gradient(g, true);
        double gmax = 0.0;
        for (double v : grad) gmax = std::max(gmax, std::abs(v));
        if (gmax < opt.grad_tol * std::max(1.0, std::abs(eb.total))) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        while (step >= 1e-12) {
            ProfileGrid trial = g;
            for (std::size_t j = 0; j < trial.values.size(); ++j)
                trial.values[j] += step * grad[j];
            renormalize(trial);
            EnergyBreakdown teb = model.energy(trial, false);
            if (teb.total > eb.total + 1e-14 * (1.0 + std::abs(eb.total))) {
                g = std::move(trial);
                eb = teb;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            out.converged = true;
            break;
        }
        if (eb.total > guard * 1.01 + 1e-9)
            throw NumericalError("variational ascent exceeded the finiteness bound; "
                                 "the discrete energy is inconsistent",
                                 eb.total - guard);
        out.trace.push_back({iter, eb.total, eb.interaction, eb.kinetic, step});
        step = std::min(step * 1.3, 1e3);
    }
    out.best = eb;
    out.profile = std::move(g);
    return out;
}

} // namespace

SolveResult maximize(double alpha0, const cov::SpectralFamily& family, double eps,
                     int slices, double box_l, int mx, const SolverOptions& opt) {
    EnergyModel model(alpha0, family, eps, slices, box_l, mx);
    double guard = opt.guard ? *opt.guard : finiteness_bound(alpha0, family).value;

    const int total_starts = std::max(opt.starts, 0) + 1;
    std::vector<StartOutcome> outcomes(total_starts);
    parallel_for(static_cast<std::size_t>(total_starts), [&](std::size_t idx) {
        try {
            ProfileGrid g = make_profile(slices, box_l, mx);
            if (idx == 0) {
                for (int i = 0; i < slices; ++i)
                    for (int k = 1; k + 1 < mx; ++k) g.at(i, k) = 1.0;
            } else {
                StreamRng rng(opt.seed.with_stream(opt.seed.stream + idx));
                double center = (rng.uniform() - 0.5) * box_l;
                double width = 0.3 * std::pow(10.0, rng.uniform()); // 0.3 .. 3
                for (int i = 0; i < slices; ++i)
                    for (int k = 1; k + 1 < mx; ++k) {
                        double x = g.x_at(k) - center;
                        g.at(i, k) = std::exp(-x * x / (2.0 * width * width));
                    }
            }
            outcomes[idx] = ascend(model, std::move(g), opt, guard);
        } catch (...) {
            outcomes[idx].error = std::current_exception();
        }
    });
    for (const auto& o : outcomes)
        if (o.error) std::rethrow_exception(o.error);

    SolveResult res;
    res.guard_used = guard;
    std::size_t best = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        res.start_totals.push_back(outcomes[i].best.total);
        if (outcomes[i].best.total > outcomes[best].best.total) best = i;
    }
    res.best = outcomes[best].best;
    res.argmax = std::move(outcomes[best].profile);
    res.trace = std::move(outcomes[best].trace);
    res.converged = outcomes[best].converged;
    return res;
}

FinitenessBound finiteness_bound(double alpha0, const cov::SpectralFamily& family) {
    if (!(alpha0 >= 0.0 && alpha0 < 1.0))
        throw std::invalid_argument("finiteness_bound: alpha0 must lie in [0, 1)");
    const double norm_eta = 2.0 / (1.0 - alpha0);
    const int ell = family.ell;
    const double tp = std::pow(2.0 * kPi, -ell); // transform normalization

    if (family.tag == cov::Family::constant) {
        // Atom at the origin: no spectral tail, any split radius works.
        return {norm_eta * family.level, 1.0};
    }

    const double s_area = cov::sphere_area(ell);
    std::function<double(double)> tail, head;
    if (auto p = family.as_power()) {
        double c = p->coef, a = p->alpha_spec;
        if (!(a < 2.0))
            throw std::invalid_argument("finiteness_bound: spectral tail not integrable");
        tail = [=](double r) { return c * s_area * std::pow(r, a - 2.0) / (2.0 - a); };
        head = [=](double r) { return c * s_area * std::pow(r, a) / a; };
    } else {
        tail = [&family, s_area, ell](double r) {
            double acc = 0.0;
            double lo = r;
            for (int k = 0; k < 200; ++k) {
                double hi = 2.0 * lo;
                double block = numeric::integrate_gl(
                    [&](double rho) {
                        return family.density_at(rho) * std::pow(rho, ell - 3);
                    },
                    lo, hi, 16);
                acc += block;
                if (k > 2 && std::abs(block) < 1e-14 * std::max(std::abs(acc), 1e-300))
                    return acc * s_area;
                lo = hi;
            }
            throw NumericalError("finiteness_bound: spectral tail did not converge", 0.0);
        };
        head = [&family, s_area, ell](double r) {
            return s_area * numeric::integrate_geometric(
                                [&](double rho) {
                                    return family.density_at(rho) *
                                           std::pow(rho, ell - 1);
                                },
                                r * 1e-12, r, 48);
        };
    }

    auto q = [&](double r) { return norm_eta * tp * 4.0 * ell * tail(r); };
    double lo = 1e-9;
    if (q(lo) <= 0.5) return {norm_eta * tp * head(lo), lo};
    double hi = 1.0;
    int guard = 0;
    while (q(hi) > 0.5) {
        hi *= 2.0;
        if (++guard > 300)
            throw NumericalError("finiteness_bound: no radius satisfies the tail "
                                 "condition; the spectral measure looks too heavy",
                                 q(hi));
    }
    double log_r = numeric::bisect(
        [&](double lr) { return q(std::exp(lr)) - 0.5; }, std::log(lo), std::log(hi),
        1e-12);
    double r_star = std::exp(log_r);
    return {norm_eta * tp * head(r_star), r_star};
}

} // namespace pamkit::var
