#include "modesimex/kernel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace modesimex {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684758586311649;
constexpr double kLogInvSqrt2Pi = -0.9189385332046727417803297364056176398613974736378;

void require_positive(double h) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw std::invalid_argument("bandwidth must be positive and finite, got " + std::to_string(h));
    }
}

}  // namespace

Bandwidth::Bandwidth(double h) : h_(h) { require_positive(h); }

Bandwidth Bandwidth::from_rule(double c, int n) {
    if (!(c > 0.0)) throw std::invalid_argument("bandwidth constant c must be positive");
    if (n < 1) throw std::invalid_argument("bandwidth rule needs n >= 1");
    return Bandwidth(c * std::pow(static_cast<double>(n), -1.0 / 7.0));
}

double phi(double t) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * t * t); }

double log_phi(double t) noexcept { return kLogInvSqrt2Pi - 0.5 * t * t; }

double phi_h(double t, double h) {
    require_positive(h);
    return phi(t / h) / h;
}

double log_phi_h(double t, double h) {
    require_positive(h);
    return log_phi(t / h) - std::log(h);
}

double phi_h_deriv(double t, double h, int order) {
    require_positive(h);
    const double u = t / h;
    const double base = phi(u);
    switch (order) {
        case 1:
            return -(t / (h * h * h)) * base;
        case 2:
            return (u * u - 1.0) * base / (h * h * h);
        case 3:
            return (3.0 * u - u * u * u) * base / (h * h * h * h);
        default:
            throw std::invalid_argument("phi_h_deriv supports orders 1-3, got " + std::to_string(order));
    }
}

}  // namespace modesimex
