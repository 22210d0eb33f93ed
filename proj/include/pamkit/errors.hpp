#pragma once

#include <stdexcept>
#include <string>

namespace pamkit {

// Config / domain violations map to CLI exit code 2.
// std::invalid_argument is used directly for those.

// A quadrature or solver failed to reach its requested tolerance.
// Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double achieved_tol)
        : std::runtime_error(what), achieved_tol_(achieved_tol) {}
    double achieved_tol() const { return achieved_tol_; }

private:
    double achieved_tol_;
};

// An exponent exceeded the overflow guard; the Monte Carlo batch was
// abandoned. Maps to CLI exit code 4.
class HeavyTailError : public std::runtime_error {
public:
    HeavyTailError(const std::string& what, double exponent)
        : std::runtime_error(what), exponent_(exponent) {}
    double exponent() const { return exponent_; }

private:
    double exponent_;
};

} // namespace pamkit
