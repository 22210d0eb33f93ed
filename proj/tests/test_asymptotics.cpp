#include <doctest.h>

#include "pamkit/asymptotics.hpp"
#include "pamkit/covariance.hpp"
#include "pamkit/functional.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace pamkit;

TEST_CASE("phi solves the defining equation with a closed-form point") {
    // At beta = 1, b = 3/2, x = 1: 1.5 sqrt(phi) + phi = 1 gives phi = 1/4.
    CHECK(asy::phi_beta(1.0, 1.0, 1.5) == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(asy::psi_beta(0.25, 1.0, 1.5) == doctest::Approx(0.40625).epsilon(1e-12));
    CHECK(asy::g_beta(1.0, 1.0, 1.5) == doctest::Approx(0.40625).epsilon(1e-10));
    CHECK(asy::psi_beta(0.0, 1.0, 1.5) == doctest::Approx(0.0));
}

TEST_CASE("phi residuals stay within the advertised tolerance") {
    for (double beta : {0.1, 1.0, 10.0, 100.0})
        for (double b : {1.05, 1.3, 1.5, 1.7, 1.95})
            for (double x : {1e-3, 0.1, 1.0, 10.0, 1e3}) {
                double phi = asy::phi_beta(x, beta, b);
                CHECK(phi > 0.0);
                CHECK(phi < x);
                double residual = beta * b * std::pow(phi, b - 1.0) + phi - x;
                CHECK(std::abs(residual) <= 1e-12 * x);
            }
}

TEST_CASE("phi domain checks") {
    CHECK_THROWS_AS(asy::phi_beta(0.0, 1.0, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(asy::phi_beta(1.0, -1.0, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(asy::phi_beta(1.0, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(asy::phi_beta(1.0, 1.0, 2.0), std::invalid_argument);
}

TEST_CASE("g is strictly increasing and inverts cleanly") {
    for (double b : {1.2, 1.5, 1.9})
        for (double beta : {0.5, 2.0}) {
            double prev = 0.0;
            for (double lam : {0.1, 0.5, 1.0, 2.0, 10.0}) {
                double g = asy::g_beta(lam, beta, b);
                CHECK(g > prev);
                prev = g;
                double back = asy::g_beta_inverse(g, beta, b);
                CHECK(back == doctest::Approx(lam).epsilon(1e-8));
            }
        }
}

TEST_CASE("g approaches the quadratic as the datum decay stiffens") {
    // beta -> infinity forces phi -> 0 and g(lambda) -> lambda^2 / 2.
    CHECK(std::abs(asy::g_beta(1.0, 1000.0, 1.5) - 0.5) < 0.01 * 0.5);
    CHECK(asy::g_beta(1.0, 10.0, 1.5) < 0.5);
}

TEST_CASE("lyapunov growth constants") {
    // n ((n-1)/2)^(2/(2-alpha)) E.
    CHECK(asy::lyapunov_upper(3, 0.5, 1.0, 1.0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(asy::lyapunov_upper(2, 0.5, 0.0, 5.0) == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(asy::lyapunov_upper(2, 0.5, 0.5, 1.0) ==
          doctest::Approx(2.0 * std::pow(0.5, 4.0 / 3.0)).epsilon(1e-14));
    CHECK_THROWS_AS(asy::lyapunov_upper(1, 0.5, 0.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(asy::lyapunov_upper(2, 0.5, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("growth index bounds with frozen prefactors") {
    // alpha = 1, alpha0 = 1/2: a = 2. With E = 4 the compact upper bound
    // is sqrt(2 Lambda) = sqrt(2) and the lower one carries the prefactor
    // a^(a/2) (a+1)^(-(a+1)/2) = 2 / (3 sqrt 3).
    auto rep = asy::lambda_bounds(2, 0.5, 1.0, 4.0);
    CHECK(rep.a == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(rep.b == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
    CHECK(rep.lambda_upper_compact == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    REQUIRE(rep.lambda_lower.has_value());
    CHECK(*rep.lambda_lower ==
          doctest::Approx(0.3849001794597505 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK_FALSE(rep.lambda_upper.has_value());
    CHECK_FALSE(rep.beta.has_value());

    // Lambda = 1 variant: lower = 2 sqrt(2) / (3 sqrt(3)).
    auto unit = asy::lambda_bounds(3, 0.5, 1.0, 1.0);
    CHECK(*unit.lambda_lower == doctest::Approx(0.5443310539518174).epsilon(1e-12));
}

TEST_CASE("datum decay produces an upper bound above the compact one") {
    auto rep = asy::lambda_bounds(2, 0.5, 1.0, 4.0, 2.0);
    REQUIRE(rep.lambda_upper.has_value());
    REQUIRE(rep.beta.has_value());
    // g_beta(upper) must reproduce Lambda = 1... here Lambda = 1.
    CHECK(asy::g_beta(*rep.lambda_upper, 2.0, rep.b) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(*rep.lambda_upper >= rep.lambda_upper_compact);

    // Stiffer decay tightens the bound toward the compact value.
    auto stiffer = asy::lambda_bounds(2, 0.5, 1.0, 4.0, 50.0);
    CHECK(*stiffer.lambda_upper < *rep.lambda_upper);
    CHECK(*stiffer.lambda_upper >= stiffer.lambda_upper_compact);
}

TEST_CASE("sign-changing kernels suppress the lower bound") {
    auto rep = asy::lambda_bounds(2, 0.8, 1.4, 2.0, std::nullopt, false);
    CHECK_FALSE(rep.lambda_lower.has_value());
    CHECK(!rep.note.empty());
    auto ok = asy::lambda_bounds(2, 0.8, 1.4, 2.0, std::nullopt, true);
    CHECK(ok.lambda_lower.has_value());
}

TEST_CASE("lower stays below the compact upper across the parameter sweep") {
    // a = (4 - alpha - 2 alpha0) / (2 - alpha) stays in (1, 2] only for
    // alpha <= 2 alpha0; skip the out-of-domain pairs.
    for (double alpha : {0.2, 0.6, 1.0, 1.4, 1.8})
        for (double alpha0 : {0.1, 0.5, 0.9}) {
            if (alpha > 2.0 * alpha0) continue;
            for (double energy : {0.5, 2.0, 10.0}) {
                auto rep = asy::lambda_bounds(2, alpha0, alpha, energy);
                REQUIRE(rep.lambda_lower.has_value());
                CHECK(*rep.lambda_lower <= rep.lambda_upper_compact);
            }
        }
}

TEST_CASE("lower-bound prefactor approaches one half as a tends to one") {
    // a = 1 + 2 (1 - alpha0) / (2 - alpha): push alpha0 toward 1.
    double alpha0 = 1.0 - 5e-9;
    auto rep = asy::lambda_bounds(2, alpha0, 1.0, 4.0);
    CHECK(rep.a == doctest::Approx(1.0).epsilon(1e-7));
    double prefactor = *rep.lambda_lower / rep.lambda_upper_compact;
    CHECK(std::abs(prefactor - 0.5) < 1e-6);
}

TEST_CASE("monte carlo ladder reproduces the exact atom growth") {
    // Constant kernel: E exp(Q) = exp(level * 2 t^(3/2) / ((1/2)(3/2)))
    // exactly, so log-moments sit on slope * t^a with slope = 8/3 and
    // a = (4 - 0 - 1) / 2 = 3/2.
    cov::NoiseParams np;
    np.ell = 1;
    np.alpha0 = 0.5;
    np.family = cov::SpectralFamily::constant_cov(1, 1.0);
    fk::MomentOptions opt;
    opt.samples = 16;
    opt.grid_m = 8;
    opt.shards = 2;
    std::vector<double> ladder{0.5, 1.0, 2.0, 4.0};
    auto est = asy::lyapunov_mc_estimate(np, 2, ladder, opt, 8.0 / 3.0);
    CHECK(est.a == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(est.slope == doctest::Approx(8.0 / 3.0).epsilon(1e-10));
    REQUIRE(est.log_moment.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        double expect = (8.0 / 3.0) * std::pow(ladder[i], 1.5);
        CHECK(est.log_moment[i] == doctest::Approx(expect).epsilon(1e-10));
    }
    REQUIRE(est.upper_constant.has_value());
    CHECK(*est.upper_constant == doctest::Approx(8.0 / 3.0).epsilon(1e-13));
    REQUIRE(est.consistent.has_value());
    CHECK(*est.consistent);
}

TEST_CASE("single particle ladder has zero slope") {
    cov::NoiseParams np;
    np.ell = 1;
    np.alpha0 = 0.5;
    np.family = cov::SpectralFamily::riesz(1, 0.5);
    fk::MomentOptions opt;
    opt.samples = 32;
    opt.grid_m = 8;
    opt.shards = 2;
    opt.eps_ladder = {0.25};
    std::vector<double> ladder{0.5, 1.0, 2.0, 4.0};
    auto est = asy::lyapunov_mc_estimate(np, 1, ladder, opt);
    CHECK(est.slope == doctest::Approx(0.0));
    CHECK_FALSE(est.upper_constant.has_value());
}

TEST_CASE("ladder needs at least four points") {
    cov::NoiseParams np;
    np.ell = 1;
    np.alpha0 = 0.5;
    np.family = cov::SpectralFamily::constant_cov(1, 1.0);
    fk::MomentOptions opt;
    opt.samples = 16;
    opt.grid_m = 8;
    std::vector<double> ladder{0.5, 1.0, 2.0};
    CHECK_THROWS_AS(asy::lyapunov_mc_estimate(np, 2, ladder, opt), std::invalid_argument);
}
