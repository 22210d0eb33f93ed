#pragma once

#include "pamkit/rng.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace pamkit::paths {

// Uniform grid of m cells over [0, t]. Nodes sit at i t / m, midpoints at
// (i + 1/2) t / m.
struct TimeGrid {
    double t = 1.0;
    int m = 64;

    double h() const { return t / m; }
    double node(int i) const { return t * static_cast<double>(i) / m; }
    double midpoint(int i) const { return t * (static_cast<double>(i) + 0.5) / m; }
    bool operator==(const TimeGrid& o) const { return t == o.t && m == o.m; }
};

enum class PathKind { motion, bridge };

// Coordinates of one path at the grid nodes and at the cell midpoints,
// stored interleaved: nodes[i * ell + d]. Midpoint values are sampled, not
// interpolated, so cell-midpoint evaluation carries no extra bias.
struct PathSample {
    TimeGrid grid;
    int ell = 1;
    PathKind kind = PathKind::motion;
    std::vector<double> nodes; // (m + 1) * ell
    std::vector<double> mids;  // m * ell

    const double* node_at(int i) const { return nodes.data() + static_cast<std::size_t>(i) * ell; }
    const double* mid_at(int i) const { return mids.data() + static_cast<std::size_t>(i) * ell; }
    const double* terminal() const { return node_at(grid.m); }
};

// Standard Brownian motion started at 0, sampled at all nodes and
// midpoints (increments of variance h/2 per coordinate).
PathSample sample_bm(const TimeGrid& grid, int ell, StreamRng& rng);

// Pins the endpoint: values become B(s) - (s/t) B(t).
PathSample to_bridge(PathSample motion);

PathSample sample_bridge(const TimeGrid& grid, int ell, StreamRng& rng);

// Covariance of a standard bridge on [0, t] per coordinate:
// min(s, r) - s r / t.
double bridge_cov(double s, double r, double t);

// Gaussian transition density (2 pi t)^(-ell/2) e^(-d2 / (2t)) where d2 is
// the squared distance.
double heat_kernel(double t, double dist2, int ell);

// Change-of-measure weight that turns a motion expectation into a bridge
// expectation for functionals of the path on [0, lambda t]:
//   (1 - lambda)^(-ell/2) *
//   exp(-|y - x - B(lambda t)|^2 / (2 t (1 - lambda)) + |y - x|^2 / (2 t)).
// lambda t must fall on a grid node of the sampled motion.
double density_reweight(const PathSample& motion, double lambda,
                        std::span<const double> x, std::span<const double> y);

} // namespace pamkit::paths
