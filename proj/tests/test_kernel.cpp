#include "modesimex/kernel.hpp"
#include "modesimex/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace modesimex;

TEST_CASE("phi values") {
    CHECK(phi(0.0) == doctest::Approx(0.3989422804).epsilon(1e-10));
    CHECK(phi(1.0) == doctest::Approx(0.2419707245).epsilon(1e-10));
    CHECK(phi(1.7) == phi(-1.7));
}

TEST_CASE("phi_h values") {
    CHECK(phi_h(0.0, 1.0) == doctest::Approx(0.3989422804).epsilon(1e-10));
    CHECK(phi_h(0.0, 0.5) == doctest::Approx(0.7978845608).epsilon(1e-10));
    CHECK(phi_h(1.0, 2.0) == doctest::Approx(0.1760326634).epsilon(1e-10));
    CHECK_THROWS_AS((void)phi_h(0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS((void)phi_h(0.0, -1.0), std::invalid_argument);
}

TEST_CASE("log density companion") {
    for (double t : {-3.0, 0.0, 0.4, 2.5}) {
        CHECK(log_phi_h(t, 0.3) == doctest::Approx(std::log(phi_h(t, 0.3))).epsilon(1e-12));
    }
    // far tail underflows linearly but stays finite in log space
    CHECK(phi_h(60.0, 0.1) == 0.0);
    CHECK(std::isfinite(log_phi_h(60.0, 0.1)));
}

TEST_CASE("kernel derivatives at reference points") {
    CHECK(phi_h_deriv(0.0, 0.7, 1) == 0.0);
    CHECK(phi_h_deriv(1.0, 1.0, 1) == doctest::Approx(-0.2419707245).epsilon(1e-10));
    CHECK(phi_h_deriv(0.0, 1.0, 2) == doctest::Approx(-0.3989422804).epsilon(1e-10));
    CHECK_THROWS_AS((void)phi_h_deriv(0.0, 1.0, 4), std::invalid_argument);
    CHECK_THROWS_AS((void)phi_h_deriv(0.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("kernel derivatives agree with finite differences") {
    RandomStream rng(3, {5});
    for (int trial = 0; trial < 1000; ++trial) {
        const double h = 0.1 + 2.0 * rng.uniform();
        const double t = (6.0 * rng.uniform() - 3.0) * h;
        const double step = 1e-5 * h;
        for (int order = 1; order <= 3; ++order) {
            auto lower = [&](double s) { return order == 1 ? phi_h(s, h) : phi_h_deriv(s, h, order - 1); };
            const double fd = (lower(t + step) - lower(t - step)) / (2.0 * step);
            const double exact = phi_h_deriv(t, h, order);
            // relative error, with an absolute floor near the derivative's zeros
            const double scale = std::max(std::abs(exact), 1e-3 / (h * h * h * h));
            CHECK(std::abs(fd - exact) / scale < 1e-4);
        }
    }
}

TEST_CASE("phi_h integrates to one and is symmetric") {
    for (double h : {0.05, 0.3, 1.0, 4.0}) {
        const int points = 10000;
        const double lo = -10.0 * h, hi = 10.0 * h;
        const double dx = (hi - lo) / (points - 1);
        double total = 0.0;
        for (int i = 0; i < points; ++i) {
            const double w = (i == 0 || i == points - 1) ? 0.5 : 1.0;
            total += w * phi_h(lo + i * dx, h);
        }
        CHECK(std::abs(total * dx - 1.0) < 1e-8);
        CHECK(phi_h(0.37 * h, h) == phi_h(-0.37 * h, h));
    }
}

TEST_CASE("bandwidth rule") {
    const auto bw = Bandwidth::from_rule(0.8, 200);
    CHECK(std::abs(bw.h() - 0.8 * std::pow(200.0, -1.0 / 7.0)) < 1e-12);
    CHECK_THROWS_AS(Bandwidth(0.0), std::invalid_argument);
    CHECK_THROWS_AS(Bandwidth::from_rule(-1.0, 10), std::invalid_argument);
}
