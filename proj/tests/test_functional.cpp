#include <doctest.h>

#include "pamkit/covariance.hpp"
#include "pamkit/errors.hpp"
#include "pamkit/functional.hpp"
#include "pamkit/numeric.hpp"
#include "pamkit/paths.hpp"

#include <cmath>
#include <cstdlib>
#include <memory>
#include <stdexcept>
#include <vector>

using namespace pamkit;

namespace {

cov::NoiseParams atom_noise(double level = 1.0) {
    cov::NoiseParams np;
    np.ell = 1;
    np.alpha0 = 0.5;
    np.family = cov::SpectralFamily::constant_cov(1, level);
    return np;
}

cov::NoiseParams riesz_noise() {
    cov::NoiseParams np;
    np.ell = 1;
    np.alpha0 = 0.5;
    np.family = cov::SpectralFamily::riesz(1, 0.5);
    return np;
}

} // namespace

TEST_CASE("time weight matrix reproduces the closed-form total mass") {
    auto w = fk::TimeWeightMatrix::build(1.0, 64, 0.5);
    CHECK(w.total_mass() == doctest::Approx(8.0 / 3.0).epsilon(1e-13));

    // Reconstruct the total from the Toeplitz band.
    double sum = 64.0 * w.band()[0];
    for (int k = 1; k < 64; ++k) sum += 2.0 * (64 - k) * w.band()[k];
    CHECK(sum == doctest::Approx(w.total_mass()).epsilon(1e-12));

    // Generic parameters: 2 t^(2-a0) / ((1-a0)(2-a0)).
    auto w2 = fk::TimeWeightMatrix::build(2.0, 48, 0.3);
    double expect = 2.0 * std::pow(2.0, 1.7) / (0.7 * 1.7);
    CHECK(w2.total_mass() == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("time weight cells are symmetric, positive, and decay off-diagonal") {
    auto w = fk::TimeWeightMatrix::build(1.0, 16, 0.5);
    CHECK(w.at(3, 11) == w.at(11, 3));
    for (int k = 1; k < 16; ++k) {
        CHECK(w.band()[k] > 0.0);
        CHECK(w.band()[k] < w.band()[k - 1]);
    }
    // Far-off-diagonal cells approach h^2 |s - r|^(-alpha0) at midpoints.
    double h = 1.0 / 16;
    double offset = 10.0 * h;
    CHECK(w.at(0, 10) == doctest::Approx(h * h * std::pow(offset, -0.5)).epsilon(1e-3));
}

TEST_CASE("cell pair sampling matches the weight distribution") {
    auto w = fk::TimeWeightMatrix::build(1.0, 3, 0.5);
    StreamRng rng(SeedSpec{42, 0});
    const int draws = 200000;
    double counts[3][3] = {};
    for (int n = 0; n < draws; ++n) {
        auto [i, j] = w.sample_cell_pair(rng);
        REQUIRE(i >= 0);
        REQUIRE(i < 3);
        REQUIRE(j >= 0);
        REQUIRE(j < 3);
        counts[i][j] += 1.0;
    }
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double p = w.at(i, j) / w.total_mass();
            double se = std::sqrt(p * (1.0 - p) / draws);
            CHECK(std::abs(counts[i][j] / draws - p) < 5.0 * se);
        }
}

TEST_CASE("radial kernels clip and evaluate") {
    auto constant = fk::RadialKernel::constant(3.5);
    CHECK(constant(0.0) == doctest::Approx(3.5));
    CHECK(constant(100.0) == doctest::Approx(3.5));
    CHECK_FALSE(constant.is_clipped_power());

    auto power = fk::RadialKernel::power(0.5, 100.0);
    CHECK(power.is_clipped_power());
    CHECK(power(4.0) == doctest::Approx(0.5));
    CHECK(power(1e-6) == doctest::Approx(100.0)); // r^(-1/2) = 1000 clips
}

TEST_CASE("pair functional with a constant kernel is kernel level times mass") {
    paths::TimeGrid grid{1.0, 32};
    StreamRng rng(SeedSpec{7, 0});
    std::vector<paths::PathSample> pair{paths::sample_bridge(grid, 1, rng),
                                        paths::sample_bridge(grid, 1, rng)};
    auto w = fk::TimeWeightMatrix::build(1.0, 32, 0.5);
    std::vector<fk::AffineShift> shifts(2);
    double q = fk::qt_evaluate(pair, fk::RadialKernel::constant(1.5), w, shifts);
    CHECK(q == doctest::Approx(1.5 * w.total_mass()).epsilon(1e-12));
}

TEST_CASE("pair functional on a single cell with explicit shifts") {
    // One time cell: Q = kernel(|x2 - x1|) * total_mass, with the shifted
    // positions evaluated at the cell midpoint s = 1/2.
    paths::PathSample p1, p2;
    for (auto* p : {&p1, &p2}) {
        p->grid = paths::TimeGrid{1.0, 1};
        p->ell = 1;
        p->kind = paths::PathKind::bridge;
        p->nodes.assign(2, 0.0);
        p->mids.assign(1, 0.0);
    }
    std::vector<paths::PathSample> pair{p1, p2};
    auto w = fk::TimeWeightMatrix::build(1.0, 1, 0.5);
    std::vector<fk::AffineShift> shifts(2);
    shifts[1].offset[0] = 1.0;
    shifts[1].slope[0] = 2.0; // position at the midpoint: 1 + 2 * 0.5 = 2
    fk::QtStats stats;
    double q = fk::qt_evaluate(pair, fk::RadialKernel::power(0.5, 1e9), w, shifts, &stats);
    CHECK(q == doctest::Approx(std::pow(2.0, -0.5) * 8.0 / 3.0).epsilon(1e-13));
    CHECK(stats.kernel_evals == 1);
    CHECK(stats.clip_hits == 0);
}

TEST_CASE("clip hits are counted for coincident paths") {
    paths::PathSample p;
    p.grid = paths::TimeGrid{1.0, 2};
    p.ell = 1;
    p.kind = paths::PathKind::bridge;
    p.nodes.assign(3, 0.0);
    p.mids.assign(2, 0.0);
    std::vector<paths::PathSample> pair{p, p};
    auto w = fk::TimeWeightMatrix::build(1.0, 2, 0.5);
    std::vector<fk::AffineShift> shifts(2);
    fk::QtStats stats;
    double q = fk::qt_evaluate(pair, fk::RadialKernel::power(0.5, 50.0), w, shifts, &stats);
    CHECK(q == doctest::Approx(50.0 * w.total_mass()).epsilon(1e-12));
    CHECK(stats.clip_hits == stats.kernel_evals);
}

TEST_CASE("initial data evaluate pointwise") {
    fk::InitialDatum one;
    std::vector<double> x{3.0, -4.0};
    CHECK(one(x) == doctest::Approx(1.0));

    fk::InitialDatum ball;
    ball.kind = fk::InitialDatum::Kind::ball_indicator;
    ball.radius = 1.0;
    std::vector<double> inside{0.5, 0.5};
    std::vector<double> outside{1.5, 0.0};
    CHECK(ball(inside) == doctest::Approx(1.0));
    CHECK(ball(outside) == doctest::Approx(0.0));

    fk::InitialDatum gauss;
    gauss.kind = fk::InitialDatum::Kind::gaussian_decay;
    gauss.kappa = 2.0;
    std::vector<double> pt{1.0, 1.0};
    CHECK(gauss(pt) == doctest::Approx(std::exp(-4.0)).epsilon(1e-14));
}

TEST_CASE("ladder extrapolation recovers a power model") {
    std::vector<fk::LadderPoint> ladder{{0.4, 3.0 + 2.0 * std::pow(0.4, 0.7), 1e-6},
                                        {0.2, 3.0 + 2.0 * std::pow(0.2, 0.7), 1e-6},
                                        {0.1, 3.0 + 2.0 * std::pow(0.1, 0.7), 1e-6}};
    auto ex = fk::eps_extrapolate(ladder);
    CHECK_FALSE(ex.flat);
    CHECK(ex.value == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(ex.exponent == doctest::Approx(0.7).epsilon(1e-4));
}

TEST_CASE("ladder extrapolation degenerates gracefully") {
    std::vector<fk::LadderPoint> flat{{0.4, 5.0, 0.01}, {0.2, 5.0, 0.01}, {0.1, 5.0, 0.01}};
    auto ex = fk::eps_extrapolate(flat);
    CHECK(ex.flat);
    CHECK(ex.value == doctest::Approx(5.0));

    std::vector<fk::LadderPoint> short_ladder{{0.4, 1.0, 0.01}, {0.2, 1.1, 0.01}};
    CHECK_THROWS_AS(fk::eps_extrapolate(short_ladder), std::invalid_argument);

    std::vector<fk::LadderPoint> wiggly{{0.4, 3.0, 0.01}, {0.2, 3.5, 0.01}, {0.1, 3.2, 0.01}};
    auto wx = fk::eps_extrapolate(wiggly);
    CHECK(wx.warn_nonmonotone);
}

TEST_CASE("mean oracle for the constant family is the weight mass") {
    // The atom ignores mollification, so the mean is level * 8/3 exactly.
    auto fam = cov::SpectralFamily::constant_cov(1, 1.0);
    auto oracle = fk::mean_q_oracle(fam, 0.5, 1.0, 0.1);
    CHECK(oracle.value == doctest::Approx(8.0 / 3.0).epsilon(1e-9));
    auto scaled = fk::mean_q_oracle(cov::SpectralFamily::constant_cov(1, 2.5), 0.5, 1.0, 0.1);
    CHECK(scaled.value == doctest::Approx(2.5 * 8.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("mean oracle decreases with mollification") {
    auto fam = cov::SpectralFamily::riesz(1, 0.5);
    auto coarse = fk::mean_q_oracle(fam, 0.5, 1.0, 0.4);
    auto fine = fk::mean_q_oracle(fam, 0.5, 1.0, 0.1);
    CHECK(fine.value > coarse.value);
    CHECK(coarse.achieved_tol <= 1e-6);
}

TEST_CASE("constant-kernel bridge moment is deterministic and exact") {
    fk::MomentOptions opt;
    opt.samples = 64;
    opt.grid_m = 16;
    opt.shards = 4;
    std::vector<std::array<double, 3>> points{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
    fk::InitialDatum u0;
    auto est = fk::moment_fk_bridge(atom_noise(), 2, 1.0, points, u0, opt);
    CHECK(est.mean == doctest::Approx(14.391916095149894).epsilon(1e-12));
    CHECK(est.stderr_mean == doctest::Approx(0.0));
    CHECK(est.samples == 64);
    REQUIRE(est.ladder.size() == 1);
    CHECK(est.ladder[0].eps == 0.0);
}

TEST_CASE("constant-kernel motion moment matches the bridge value") {
    fk::MomentOptions opt;
    opt.samples = 32;
    opt.grid_m = 8;
    opt.shards = 2;
    fk::InitialDatum u0;
    auto est = fk::moment_fk_bm(atom_noise(), 2, 1.0, {0.3, 0.0, 0.0}, u0, opt);
    CHECK(est.mean == doctest::Approx(14.391916095149894).epsilon(1e-12));
}

TEST_CASE("an eps ladder is rejected for exact kernels") {
    fk::MomentOptions opt;
    opt.samples = 8;
    opt.grid_m = 8;
    opt.eps_ladder = {0.2};
    std::vector<std::array<double, 3>> points{{0.0, 0.0, 0.0}};
    fk::InitialDatum u0;
    CHECK_THROWS_AS(fk::moment_fk_bridge(atom_noise(), 1, 1.0, points, u0, opt),
                    std::invalid_argument);
}

TEST_CASE("ladders must be strictly decreasing") {
    fk::MomentOptions opt;
    opt.samples = 8;
    opt.grid_m = 8;
    opt.eps_ladder = {0.1, 0.2};
    std::vector<std::array<double, 3>> points{{0.0, 0.0, 0.0}};
    fk::InitialDatum u0;
    CHECK_THROWS_AS(fk::moment_fk_bridge(riesz_noise(), 2, 1.0, points, u0, opt),
                    std::invalid_argument);
    // A smoothed kernel with no ladder at all is likewise refused.
    opt.eps_ladder = {};
    CHECK_THROWS_AS(fk::moment_fk_bridge(riesz_noise(), 2, 1.0, points, u0, opt),
                    std::invalid_argument);
}

TEST_CASE("exponent cap raises the heavy-tail error") {
    fk::MomentOptions opt;
    opt.samples = 4;
    opt.grid_m = 8;
    opt.shards = 1;
    std::vector<std::array<double, 3>> points{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
    fk::InitialDatum u0;
    // Q = 400 * 8/3 > 700 for every sample.
    CHECK_THROWS_AS(fk::moment_fk_bridge(atom_noise(400.0), 2, 1.0, points, u0, opt),
                    HeavyTailError);
    try {
        fk::moment_fk_bridge(atom_noise(400.0), 2, 1.0, points, u0, opt);
    } catch (const HeavyTailError& e) {
        CHECK(e.exponent() > 700.0);
    }
}

TEST_CASE("moment runs are deterministic across thread counts") {
    fk::MomentOptions opt;
    opt.samples = 2000;
    opt.grid_m = 16;
    opt.shards = 4;
    opt.seed = SeedSpec{99, 0};
    opt.eps_ladder = {0.4, 0.2};
    std::vector<std::array<double, 3>> points{{0.0, 0.0, 0.0}, {0.5, 0.0, 0.0}};
    fk::InitialDatum u0;

    setenv("PAMKIT_THREADS", "1", 1);
    auto serial = fk::moment_fk_bridge(riesz_noise(), 2, 1.0, points, u0, opt);
    setenv("PAMKIT_THREADS", "4", 1);
    auto threaded = fk::moment_fk_bridge(riesz_noise(), 2, 1.0, points, u0, opt);
    unsetenv("PAMKIT_THREADS");
    auto again = fk::moment_fk_bridge(riesz_noise(), 2, 1.0, points, u0, opt);

    CHECK(serial.mean == threaded.mean);
    CHECK(serial.stderr_mean == threaded.stderr_mean);
    CHECK(serial.mean == again.mean);
    REQUIRE(serial.ladder.size() == 2);
    CHECK(serial.ladder[0].eps == 0.4);
    CHECK(serial.ladder[1].eps == 0.2);
    CHECK(serial.ladder[0].mean == threaded.ladder[0].mean);
}

TEST_CASE("path sink sees bridge paths from shard zero and can stop early") {
    fk::MomentOptions opt;
    opt.samples = 64;
    opt.grid_m = 8;
    opt.shards = 4;
    int seen = 0;
    opt.path_sink = [&](const paths::PathSample& p) {
        CHECK(p.kind == paths::PathKind::bridge);
        CHECK(p.grid.m == 8);
        return ++seen < 5;
    };
    std::vector<std::array<double, 3>> points{{0.0, 0.0, 0.0}};
    fk::InitialDatum u0;
    fk::moment_fk_bridge(atom_noise(), 1, 1.0, points, u0, opt);
    CHECK(seen == 5);
}

TEST_CASE("pure bridge functional with one particle has no interaction") {
    fk::MomentOptions opt;
    opt.samples = 16;
    opt.grid_m = 8;
    opt.shards = 2;
    opt.eps_ladder = {0.25};
    auto est = fk::bridge_functional(riesz_noise(), 1, 1.0, opt);
    CHECK(est.mean == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(est.stderr_mean == doctest::Approx(0.0));
}

TEST_CASE("monte carlo mean of the pair functional matches the oracle") {
    // Direct path sampling against the deterministic reference.
    auto fam = cov::SpectralFamily::riesz(1, 0.5);
    const double eps = 0.25;
    auto oracle = fk::mean_q_oracle(fam, 0.5, 1.0, eps);

    const int m = 64;
    paths::TimeGrid grid{1.0, m};
    auto weights = fk::TimeWeightMatrix::build(1.0, m, 0.5);
    auto table = std::make_shared<cov::SmoothedKernel>(cov::SmoothedKernel::build(fam, eps, 16.0));
    auto kernel = fk::RadialKernel::smoothed(table);
    std::vector<fk::AffineShift> shifts(2);

    StreamRng rng(SeedSpec{314, 1});
    numeric::Accumulator acc;
    for (int s = 0; s < 20000; ++s) {
        std::vector<paths::PathSample> pair{paths::sample_bridge(grid, 1, rng),
                                            paths::sample_bridge(grid, 1, rng)};
        acc.add(fk::qt_evaluate(pair, kernel, weights, shifts));
    }
    CHECK(std::abs(acc.mean() - oracle.value) < 4.0 * acc.stderr_mean());
}
