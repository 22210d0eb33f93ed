#pragma once

#include <functional>
#include <span>
#include <vector>

namespace pamkit::numeric {

struct QuadRule {
    std::vector<double> nodes;   // on (-1, 1)
    std::vector<double> weights; // sum to 2
};

// Gauss-Legendre rule of order n (nodes by Newton on the recurrence).
const QuadRule& gauss_legendre(int n);

// Integral of f over [a, b] with an n-point Gauss-Legendre rule.
double integrate_gl(const std::function<double(double)>& f, double a, double b, int n = 16);

// Integral over [a, b] split into `panels` geometrically growing panels
// (ratio derived from the endpoints), n-point rule per panel. Panels
// cluster toward `a`, which handles integrable endpoint behavior.
double integrate_geometric(const std::function<double(double)>& f, double a, double b,
                           int panels, int n = 8);

// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
double gamma_q(double a, double x);

// Root of a strictly monotone function on [lo, hi] by bisection.
// Requires f(lo) and f(hi) to bracket zero.
double bisect(const std::function<double(double)>& f, double lo, double hi,
              double xtol, int max_iter = 200);

// Running mean/variance accumulator with deterministic merge order.
struct Accumulator {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;

    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++count;
    }
    void merge(const Accumulator& other) {
        sum += other.sum;
        sum_sq += other.sum_sq;
        count += other.count;
    }
    double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
    double variance() const;
    double stderr_mean() const;
};

} // namespace pamkit::numeric
