#pragma once

namespace modesimex {

/// Bandwidth for the Gaussian kernel. The study rule is h = c * n^(-1/7).
class Bandwidth {
public:
    explicit Bandwidth(double h);
    static Bandwidth from_rule(double c, int n);

    [[nodiscard]] double h() const noexcept { return h_; }

private:
    double h_;
};

// Standard normal density and its scaled form phi_h(t) = phi(t / h) / h.
[[nodiscard]] double phi(double t) noexcept;
[[nodiscard]] double log_phi(double t) noexcept;
[[nodiscard]] double phi_h(double t, double h);
[[nodiscard]] double log_phi_h(double t, double h);

/// d^k/dt^k phi_h(t) for k in {1, 2, 3}.
[[nodiscard]] double phi_h_deriv(double t, double h, int order);

}  // namespace modesimex
