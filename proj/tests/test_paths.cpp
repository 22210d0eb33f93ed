#include <doctest.h>

#include "pamkit/numeric.hpp"
#include "pamkit/paths.hpp"
#include "pamkit/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace pamkit;

TEST_CASE("time grid geometry") {
    paths::TimeGrid grid{2.0, 8};
    CHECK(grid.h() == doctest::Approx(0.25));
    CHECK(grid.node(0) == doctest::Approx(0.0));
    CHECK(grid.node(8) == doctest::Approx(2.0));
    CHECK(grid.midpoint(3) == doctest::Approx(0.875));
}

TEST_CASE("brownian sampling is reproducible and stream-separated") {
    paths::TimeGrid grid{1.0, 16};
    StreamRng a(SeedSpec{123, 5});
    StreamRng b(SeedSpec{123, 5});
    StreamRng c(SeedSpec{123, 6});
    auto pa = paths::sample_bm(grid, 2, a);
    auto pb = paths::sample_bm(grid, 2, b);
    auto pc = paths::sample_bm(grid, 2, c);
    CHECK(pa.nodes == pb.nodes);
    CHECK(pa.mids == pb.mids);
    CHECK(pa.nodes != pc.nodes);
    REQUIRE(pa.nodes.size() == 17u * 2u);
    REQUIRE(pa.mids.size() == 16u * 2u);
    CHECK(pa.node_at(0)[0] == 0.0);
    CHECK(pa.node_at(0)[1] == 0.0);
}

TEST_CASE("bridge endpoint is pinned exactly") {
    paths::TimeGrid grid{3.0, 10};
    StreamRng rng(SeedSpec{77, 0});
    auto br = paths::sample_bridge(grid, 3, rng);
    for (int d = 0; d < 3; ++d) {
        CHECK(br.terminal()[d] == 0.0);
        CHECK(br.node_at(0)[d] == 0.0);
    }
    CHECK(br.kind == paths::PathKind::bridge);
}

TEST_CASE("to_bridge applies the linear pinning") {
    paths::TimeGrid grid{1.0, 4};
    StreamRng rng(SeedSpec{9, 1});
    auto motion = paths::sample_bm(grid, 1, rng);
    double terminal = motion.terminal()[0];
    auto bridge = paths::to_bridge(motion);
    for (int i = 0; i <= 4; ++i) {
        double s = grid.node(i);
        CHECK(bridge.node_at(i)[0] ==
              doctest::Approx(motion.node_at(i)[0] - s / grid.t * terminal).epsilon(1e-15));
    }
    for (int i = 0; i < 4; ++i) {
        double s = grid.midpoint(i);
        CHECK(bridge.mid_at(i)[0] ==
              doctest::Approx(motion.mid_at(i)[0] - s / grid.t * terminal).epsilon(1e-15));
    }
}

TEST_CASE("bridge covariance closed form") {
    CHECK(paths::bridge_cov(0.25, 0.5, 1.0) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(paths::bridge_cov(0.5, 0.5, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(paths::bridge_cov(0.5, 2.0, 2.0) == doctest::Approx(0.0).epsilon(1e-15));
    // Symmetry.
    CHECK(paths::bridge_cov(0.3, 0.9, 2.0) == doctest::Approx(paths::bridge_cov(0.9, 0.3, 2.0)));
}

TEST_CASE("motion increments have the grid variance, including midpoints") {
    // Midpoint values are sampled with variance h/2 around the previous
    // node; linear interpolation would show h/4 instead. The estimator
    // below separates the two at many sigmas.
    paths::TimeGrid grid{1.0, 4};
    const int n_paths = 200000;
    StreamRng rng(SeedSpec{2024, 3});
    numeric::Accumulator half_step, terminal_var;
    for (int p = 0; p < n_paths; ++p) {
        auto bm = paths::sample_bm(grid, 1, rng);
        double d = bm.mid_at(2)[0] - bm.node_at(2)[0];
        half_step.add(d * d);
        double e = bm.terminal()[0];
        terminal_var.add(e * e);
    }
    double h2 = grid.h() / 2.0; // 0.125
    CHECK(std::abs(half_step.mean() - h2) < 5.0 * half_step.stderr_mean());
    CHECK(std::abs(half_step.mean() - h2 / 2.0) > 20.0 * half_step.stderr_mean());
    CHECK(std::abs(terminal_var.mean() - 1.0) < 5.0 * terminal_var.stderr_mean());
}

TEST_CASE("bridge node variance matches s(t-s)/t") {
    paths::TimeGrid grid{1.0, 8};
    const int n_paths = 200000;
    StreamRng rng(SeedSpec{2024, 4});
    numeric::Accumulator v2, v6, cross;
    for (int p = 0; p < n_paths; ++p) {
        auto br = paths::sample_bridge(grid, 1, rng);
        double x2 = br.node_at(2)[0]; // s = 0.25
        double x6 = br.node_at(6)[0]; // s = 0.75
        v2.add(x2 * x2);
        v6.add(x6 * x6);
        cross.add(x2 * x6);
    }
    CHECK(std::abs(v2.mean() - paths::bridge_cov(0.25, 0.25, 1.0)) < 5.0 * v2.stderr_mean());
    CHECK(std::abs(v6.mean() - paths::bridge_cov(0.75, 0.75, 1.0)) < 5.0 * v6.stderr_mean());
    CHECK(std::abs(cross.mean() - paths::bridge_cov(0.25, 0.75, 1.0)) <
          5.0 * cross.stderr_mean());
}

TEST_CASE("heat kernel values") {
    CHECK(paths::heat_kernel(1.0, 0.0, 1) == doctest::Approx(0.3989422804014327).epsilon(1e-14));
    double expect = std::pow(2.0 * 3.14159265358979323846 * 2.0, -1.5) * std::exp(-0.25);
    CHECK(paths::heat_kernel(2.0, 1.0, 3) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("density reweight closed forms on a hand-built path") {
    // A motion that is identically zero isolates the deterministic part of
    // the weight.
    paths::PathSample flat;
    flat.grid = paths::TimeGrid{1.0, 4};
    flat.ell = 1;
    flat.kind = paths::PathKind::motion;
    flat.nodes.assign(5, 0.0);
    flat.mids.assign(4, 0.0);

    std::vector<double> x{0.0}, y{0.0};
    CHECK(paths::density_reweight(flat, 0.5, x, y) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

    std::vector<double> y1{1.0};
    // (1/2)^(-1/2) exp(-1/(2 * 0.5) + 1/2) = sqrt(2) exp(-1/2).
    CHECK(paths::density_reweight(flat, 0.5, x, y1) ==
          doctest::Approx(std::sqrt(2.0) * std::exp(-0.5)).epsilon(1e-14));

    // lambda t must land on a grid node.
    CHECK_THROWS_AS(paths::density_reweight(flat, 0.3, x, y), std::invalid_argument);
    CHECK_THROWS_AS(paths::density_reweight(flat, 1.0, x, y), std::invalid_argument);
}

TEST_CASE("density reweight integrates to one over the motion law") {
    // E_motion[w] = 1: the weight is a change of measure.
    paths::TimeGrid grid{1.0, 8};
    StreamRng rng(SeedSpec{555, 2});
    std::vector<double> x{0.0}, y{0.25};
    numeric::Accumulator acc;
    for (int p = 0; p < 100000; ++p) {
        auto bm = paths::sample_bm(grid, 1, rng);
        acc.add(paths::density_reweight(bm, 0.5, x, y));
    }
    CHECK(std::abs(acc.mean() - 1.0) < 5.0 * acc.stderr_mean());
}
