#include <doctest.h>

#include "pamkit/chaos.hpp"
#include "pamkit/covariance.hpp"
#include "pamkit/functional.hpp"
#include "pamkit/paths.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace pamkit;

namespace {

cov::NoiseParams riesz_noise(double alpha0 = 0.5) {
    cov::NoiseParams np;
    np.ell = 1;
    np.alpha0 = alpha0;
    np.family = cov::SpectralFamily::riesz(1, 0.5);
    return np;
}

cov::NoiseParams atom_noise(double level = 1.0) {
    cov::NoiseParams np;
    np.ell = 1;
    np.alpha0 = 0.5;
    np.family = cov::SpectralFamily::constant_cov(1, level);
    return np;
}

} // namespace

TEST_CASE("order zero chaos kernel is the transition density") {
    std::vector<double> z{0.5}, x{1.0};
    double v = chaos::gn_eval({}, {}, 2.0, z, x, 1);
    CHECK(v == doctest::Approx(paths::heat_kernel(2.0, 0.25, 1)).epsilon(1e-14));
}

TEST_CASE("order one chaos kernel at the origin") {
    // p_{1/2}(0) * p_{1/2}(0) = 1/pi in one dimension.
    std::vector<double> s{0.5}, y{0.0}, z{0.0}, x{0.0};
    double v = chaos::gn_eval(s, y, 1.0, z, x, 1);
    CHECK(v == doctest::Approx(0.3183098861837907).epsilon(1e-14));
}

TEST_CASE("second order kernel divides by the factorial") {
    // Chain p_s1 p_{s2-s1} p_{t-s2} all at zero displacement, over 2!.
    std::vector<double> s{0.25, 0.5}, y{0.0, 0.0}, z{0.0}, x{0.0};
    double chain = paths::heat_kernel(0.25, 0.0, 1) * paths::heat_kernel(0.25, 0.0, 1) *
                   paths::heat_kernel(0.5, 0.0, 1);
    double v = chaos::gn_eval(s, y, 1.0, z, x, 1);
    CHECK(v == doctest::Approx(chain / 2.0).epsilon(1e-13));
}

TEST_CASE("chaos kernel rejects unordered or out-of-range times") {
    std::vector<double> y{0.0, 0.0}, z{0.0}, x{0.0};
    std::vector<double> unordered{0.6, 0.4};
    CHECK_THROWS_AS(chaos::gn_eval(unordered, y, 1.0, z, x, 1), std::invalid_argument);
    std::vector<double> beyond{0.4, 1.2};
    CHECK_THROWS_AS(chaos::gn_eval(beyond, y, 1.0, z, x, 1), std::invalid_argument);
    std::vector<double> at_zero{0.0, 0.4};
    CHECK_THROWS_AS(chaos::gn_eval(at_zero, y, 1.0, z, x, 1), std::invalid_argument);
}

TEST_CASE("heat convolution closed forms") {
    std::vector<double> origin1{0.0};

    fk::InitialDatum one;
    CHECK(chaos::heat_convolve(one, 1.0, origin1, 1) == doctest::Approx(1.0));

    fk::InitialDatum gauss;
    gauss.kind = fk::InitialDatum::Kind::gaussian_decay;
    gauss.kappa = 1.0;
    CHECK(chaos::heat_convolve(gauss, 1.0, origin1, 1) ==
          doctest::Approx(0.5773502691896258).epsilon(1e-13));
    std::vector<double> x2{2.0};
    CHECK(chaos::heat_convolve(gauss, 1.0, x2, 1) ==
          doctest::Approx(0.15218787864872981).epsilon(1e-13));
}

TEST_CASE("heat convolution of the unit ball at the origin") {
    fk::InitialDatum ball;
    ball.kind = fk::InitialDatum::Kind::ball_indicator;
    ball.radius = 1.0;
    std::vector<double> o1{0.0}, o2{0.0, 0.0}, o3{0.0, 0.0, 0.0};
    CHECK(chaos::heat_convolve(ball, 1.0, o1, 1) ==
          doctest::Approx(0.6826894921370859).epsilon(1e-12));
    CHECK(chaos::heat_convolve(ball, 1.0, o2, 2) ==
          doctest::Approx(0.3934693402873666).epsilon(1e-12));
    CHECK(chaos::heat_convolve(ball, 1.0, o3, 3) ==
          doctest::Approx(0.19874804309879920).epsilon(1e-10));
    // Radial symmetry off the origin.
    std::vector<double> p{0.3, -0.4}, q{0.5, 0.0};
    CHECK(chaos::heat_convolve(ball, 0.7, p, 2) ==
          doctest::Approx(chaos::heat_convolve(ball, 0.7, q, 2)).epsilon(1e-10));
}

TEST_CASE("constant family chaos terms are exact poisson weights") {
    // term_n = (level * M_W)^n / n! with M_W = 8/3 at t = 1.
    chaos::ChaosOptions opt;
    opt.samples = 100; // ignored by the exact branch
    std::vector<double> x{0.0};
    fk::InitialDatum one;
    auto series = chaos::second_moment_chaos(atom_noise(), 1.0, x, one, 8, 0.0, opt);
    REQUIRE(series.terms.size() == 9);
    double mass = 8.0 / 3.0;
    double weight = 1.0;
    for (int n = 0; n <= 8; ++n) {
        CHECK(series.terms[n].value == doctest::Approx(weight).epsilon(1e-12));
        CHECK(series.terms[n].stderr_mean == doctest::Approx(0.0));
        weight *= mass / (n + 1);
    }
    // Frozen partial sum of the first nine terms.
    CHECK(series.total == doctest::Approx(14.366560943332777).epsilon(1e-12));
    // Geometric tail ratio term_8 / term_7 = (8/3) / 8.
    CHECK(series.tail_ratio == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // The tail estimate covers the distance to the full series e^{8/3}.
    CHECK(series.total + series.uncertainty >= 14.391916095149894);
}

TEST_CASE("partial sums are monotone and match the term sequence") {
    chaos::ChaosOptions opt;
    opt.samples = 20000;
    opt.grid_m = 32;
    opt.shards = 4;
    opt.seed = SeedSpec{11, 0};
    std::vector<double> x{0.0};
    fk::InitialDatum one;
    auto series = chaos::second_moment_chaos(riesz_noise(), 0.5, x, one, 4, 0.5, opt);
    REQUIRE(series.terms.size() >= 2);
    double running = 0.0;
    for (const auto& term : series.terms) {
        CHECK(term.value >= 0.0);
        running += term.value;
        CHECK(term.partial_sum == doctest::Approx(running).epsilon(1e-12));
    }
    CHECK(series.terms[0].value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(series.total == doctest::Approx(running).epsilon(1e-12));
}

TEST_CASE("first riesz chaos term matches the deterministic double integral") {
    // term_1 = int int |s-r|^(-a0) * M(eps + t - (s+r)/2) ds dr with M the
    // damped spectral mass; at t = 1/2, eps = 1/2 this evaluates to
    // 1.4713938975118522.
    chaos::ChaosOptions opt;
    opt.samples = 200000;
    opt.grid_m = 64;
    opt.shards = 8;
    opt.seed = SeedSpec{12, 0};
    std::vector<double> x{0.0};
    fk::InitialDatum one;
    auto series = chaos::second_moment_chaos(riesz_noise(), 0.5, x, one, 1, 0.5, opt);
    REQUIRE(series.terms.size() == 2);
    const auto& t1 = series.terms[1];
    CHECK(t1.stderr_mean > 0.0);
    CHECK(std::abs(t1.value - 1.4713938975118522) < 4.0 * t1.stderr_mean);
    // The sampler should resolve the term to better than a percent.
    CHECK(t1.stderr_mean < 0.01 * t1.value);
}

TEST_CASE("chaos series requires mollification except for the atom") {
    chaos::ChaosOptions opt;
    opt.samples = 100;
    std::vector<double> x{0.0};
    fk::InitialDatum one;
    CHECK_THROWS_AS(chaos::second_moment_chaos(riesz_noise(), 1.0, x, one, 2, 0.0, opt),
                    std::invalid_argument);
    CHECK_NOTHROW(chaos::second_moment_chaos(atom_noise(), 1.0, x, one, 2, 0.0, opt));
}

TEST_CASE("chaos series rejects ball initial data") {
    chaos::ChaosOptions opt;
    opt.samples = 100;
    std::vector<double> x{0.0};
    fk::InitialDatum ball;
    ball.kind = fk::InitialDatum::Kind::ball_indicator;
    CHECK_THROWS_AS(chaos::second_moment_chaos(riesz_noise(), 1.0, x, ball, 2, 0.5, opt),
                    std::invalid_argument);
}

TEST_CASE("term bound for the atom is exact") {
    // C * level * t with C = 2 t^(1-a0) / (1-a0) = 4 at t = 1, a0 = 1/2.
    chaos::ChaosOptions opt;
    opt.samples = 100;
    std::vector<double> x{0.0};
    fk::InitialDatum one;
    auto bound = chaos::chaos_term_bound(atom_noise(), 1, 1.0, x, one, opt);
    CHECK(bound.constant_c == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(bound.value == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(bound.stderr_mean == doctest::Approx(0.0));

    // Explicit splitting constant override.
    auto bound2 = chaos::chaos_term_bound(atom_noise(), 2, 1.0, x, one, opt, 3.0);
    CHECK(bound2.constant_c == doctest::Approx(3.0));
    // n = 2: C^2 * level^2 * t^2 / 2 (ordered simplex volume).
    CHECK(bound2.value == doctest::Approx(9.0 / 2.0).epsilon(1e-12));
}

TEST_CASE("first term bound matches the gamma-representation integral") {
    // For n = 1 the bound reduces to
    //   C * int_0^t M(s (t-s) / t) ds = C * Gamma(1/4)/sqrt(2 pi) * B(3/4, 3/4)
    // for the riesz family at alpha = 1/2, t = 1: 9.803333619721421.
    chaos::ChaosOptions opt;
    opt.samples = 400000;
    opt.shards = 8;
    opt.seed = SeedSpec{13, 0};
    std::vector<double> x{0.0};
    fk::InitialDatum one;
    auto bound = chaos::chaos_term_bound(riesz_noise(), 1, 1.0, x, one, opt);
    CHECK(bound.stderr_mean > 0.0);
    CHECK(std::abs(bound.value - 9.803333619721421) < 4.0 * bound.stderr_mean);
    CHECK(bound.stderr_mean < 0.02 * bound.value);
}

TEST_CASE("term bounds stay finite for the gaussian-moment route") {
    // rough_fractional has alpha_spec >= ell, exercising the Cholesky
    // sampler rather than the importance-sampling route.
    cov::NoiseParams np;
    np.ell = 1;
    np.alpha0 = 0.5;
    np.family = cov::SpectralFamily::rough_fractional(0.3);
    chaos::ChaosOptions opt;
    opt.samples = 20000;
    opt.shards = 4;
    opt.seed = SeedSpec{14, 0};
    std::vector<double> x{0.0};
    fk::InitialDatum one;
    auto bound = chaos::chaos_term_bound(np, 2, 0.5, x, one, opt);
    CHECK(std::isfinite(bound.value));
    CHECK(bound.value > 0.0);
}
