#include "pamkit/paths.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pamkit::paths {

PathSample sample_bm(const TimeGrid& grid, int ell, StreamRng& rng) {
    if (grid.m < 1 || !(grid.t > 0.0))
        throw std::invalid_argument("sample_bm: grid needs m >= 1 and t > 0");
    if (ell < 1) throw std::invalid_argument("sample_bm: ell must be >= 1");
    PathSample p;
    p.grid = grid;
    p.ell = ell;
    p.kind = PathKind::motion;
    const int m = grid.m;
    p.nodes.assign(static_cast<std::size_t>(m + 1) * ell, 0.0);
    p.mids.resize(static_cast<std::size_t>(m) * ell);
    const double step_sd = std::sqrt(0.5 * grid.h());
    for (int i = 0; i < m; ++i) {
        for (int d = 0; d < ell; ++d)
            p.mids[static_cast<std::size_t>(i) * ell + d] =
                p.nodes[static_cast<std::size_t>(i) * ell + d] + step_sd * rng.normal();
        for (int d = 0; d < ell; ++d)
            p.nodes[static_cast<std::size_t>(i + 1) * ell + d] =
                p.mids[static_cast<std::size_t>(i) * ell + d] + step_sd * rng.normal();
    }
    return p;
}

PathSample to_bridge(PathSample motion) {
    if (motion.kind == PathKind::bridge) return motion;
    const int m = motion.grid.m;
    const int ell = motion.ell;
    const double t = motion.grid.t;
    std::vector<double> end(motion.terminal(), motion.terminal() + ell);
    for (int i = 0; i <= m; ++i) {
        double frac = motion.grid.node(i) / t;
        for (int d = 0; d < ell; ++d)
            motion.nodes[static_cast<std::size_t>(i) * ell + d] -= frac * end[d];
    }
    for (int i = 0; i < m; ++i) {
        double frac = motion.grid.midpoint(i) / t;
        for (int d = 0; d < ell; ++d)
            motion.mids[static_cast<std::size_t>(i) * ell + d] -= frac * end[d];
    }
    motion.kind = PathKind::bridge;
    return motion;
}

PathSample sample_bridge(const TimeGrid& grid, int ell, StreamRng& rng) {
    return to_bridge(sample_bm(grid, ell, rng));
}

double bridge_cov(double s, double r, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("bridge_cov: t must be positive");
    if (s < 0.0 || s > t || r < 0.0 || r > t)
        throw std::invalid_argument("bridge_cov: times must lie in [0, t]");
    return std::min(s, r) - s * r / t;
}

double heat_kernel(double t, double dist2, int ell) {
    if (!(t > 0.0)) throw std::invalid_argument("heat_kernel: t must be positive");
    return std::pow(2.0 * std::numbers::pi * t, -0.5 * ell) * std::exp(-dist2 / (2.0 * t));
}

double density_reweight(const PathSample& motion, double lambda,
                        std::span<const double> x, std::span<const double> y) {
    if (motion.kind != PathKind::motion)
        throw std::invalid_argument("density_reweight: expects a motion, not a bridge");
    if (!(lambda > 0.0 && lambda < 1.0))
        throw std::invalid_argument("density_reweight: lambda must lie in (0, 1)");
    const int ell = motion.ell;
    if (static_cast<int>(x.size()) != ell || static_cast<int>(y.size()) != ell)
        throw std::invalid_argument("density_reweight: x and y must have ell coordinates");
    const double t = motion.grid.t;
    double k = lambda * motion.grid.m;
    auto ki = static_cast<int>(std::lround(k));
    if (std::abs(k - ki) > 1e-9)
        throw std::invalid_argument("density_reweight: lambda t must fall on a grid node");
    const double* b = motion.node_at(ki);
    double num = 0.0, base = 0.0;
    for (int d = 0; d < ell; ++d) {
        double dy = y[d] - x[d];
        double dshift = dy - b[d];
        num += dshift * dshift;
        base += dy * dy;
    }
    return std::pow(1.0 - lambda, -0.5 * ell) *
           std::exp(-num / (2.0 * t * (1.0 - lambda)) + base / (2.0 * t));
}

} // namespace pamkit::paths
