#include "modesimex/estimators.hpp"
#include "modesimex/kernel.hpp"
#include "modesimex/rng.hpp"
#include "modesimex/simstudy.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

using namespace modesimex;

namespace {

constexpr auto kTestTag = static_cast<std::uint64_t>(StreamPurpose::Test);

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

Dataset column_data(const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
    Eigen::MatrixXd xm = x;
    return Dataset(y, xm);
}

// Linear model with a single slope and x == 1, so m = theta * 1 and residuals are y - theta.
Dataset location_data(const Eigen::VectorXd& y) {
    return Dataset(y, Eigen::MatrixXd::Ones(y.size(), 1));
}

Dataset noiseless_exp(int n, double a, double b, std::uint64_t seed) {
    RandomStream rs(seed, {kTestTag, 1});
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = rs.uniform();
        y[i] = a * std::exp(b * x[i]);
    }
    return column_data(y, x);
}

Dataset study_data(int rep, bool use_w, double sigma_u2 = 0.01) {
    Scenario sc;
    sc.sigma_u2 = sigma_u2;
    const auto r = generate_replication(sc, rep, 777);
    return column_data(r.y, use_w ? r.w : r.x_true);
}

Dataset permuted(const Dataset& d, std::uint64_t seed) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(d.n()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    RandomStream rs(seed, {kTestTag, 9});
    std::shuffle(idx.begin(), idx.end(), rs);
    Dataset out = d;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        out.y[i] = d.y[idx[static_cast<std::size_t>(i)]];
        out.x.row(i) = d.x.row(idx[static_cast<std::size_t>(i)]);
    }
    return out;
}

const double kStudyH = 0.8 * std::pow(200.0, -1.0 / 7.0);

}  // namespace

TEST_CASE("Dataset validation") {
    const auto m = RegressionModel::exponential();
    CHECK_NOTHROW(noiseless_exp(5, 1, 1, 1).validate(m));
    CHECK_THROWS_AS(Dataset(vec({1.0}), Eigen::MatrixXd::Ones(1, 1)).validate(m), std::invalid_argument);
    CHECK_THROWS_AS(Dataset(vec({1.0, 2.0, 3.0}), Eigen::MatrixXd::Ones(2, 1)).validate(m), std::invalid_argument);
    CHECK_THROWS_AS(Dataset(vec({1.0, 2.0, 3.0}), Eigen::MatrixXd::Ones(3, 2)).validate(m), std::invalid_argument);
    Dataset bad = noiseless_exp(5, 1, 1, 1);
    bad.y[2] = std::nan("");
    CHECK_THROWS_AS(bad.validate(m), std::invalid_argument);
}

TEST_CASE("estep_weights examples") {
    const auto m = RegressionModel::linear(1);
    SUBCASE("single observation") {
        const auto w = estep_weights(m, location_data(vec({3.0})), vec({1.0}), 0.5);
        CHECK(w.size() == 1);
        CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("equal residuals give uniform weights") {
        const auto w = estep_weights(m, location_data(vec({2.0, 2.0, 2.0, 2.0})), vec({0.3}), 0.7);
        for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(w[i] - 0.25) < 1e-15);
    }
    SUBCASE("residuals (0, h)") {
        const double h = 0.37;
        const auto w = estep_weights(m, location_data(vec({1.0, 1.0 + h})), vec({1.0}), h);
        CHECK(std::abs(w[0] - 0.62246) < 1e-5);
        CHECK(std::abs(w[1] - 0.37754) < 1e-5);
        CHECK(std::abs(w[0] - 0.6224593312018546) < 1e-12);
    }
    SUBCASE("far residuals do not underflow to NaN") {
        const auto w = estep_weights(m, location_data(vec({0.0, 1e3, 2e3})), vec({0.0}), 0.01);
        CHECK(w[0] == doctest::Approx(1.0));
        CHECK(w[1] < 1e-300);
        CHECK(std::isfinite(w[2]));
    }
    CHECK_THROWS_AS((void)estep_weights(m, location_data(vec({1.0})), vec({1.0}), 0.0), std::invalid_argument);
}

TEST_CASE("estep_weights normalize for arbitrary inputs") {
    const auto m = RegressionModel::exponential();
    RandomStream rs(5, {kTestTag, 2});
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rs.uniform() * 50);
        Eigen::VectorXd y(n), x(n);
        for (int i = 0; i < n; ++i) {
            x[i] = rs.uniform() * 4 - 2;
            y[i] = rs.normal() * std::pow(10.0, rs.uniform() * 4 - 1);
        }
        const auto theta = vec({rs.normal() * 3, rs.normal() * 2});
        const double h = std::pow(10.0, rs.uniform() * 4 - 3);
        Dataset d(y, Eigen::MatrixXd(x));
        const auto w = estep_weights(m, d, theta, h);
        REQUIRE(std::abs(w.sum() - 1.0) < 1e-12);
        REQUIRE(w.minCoeff() >= 0.0);
        REQUIRE(w.maxCoeff() <= 1.0);
    }
}

TEST_CASE("modal_objective examples") {
    const auto m = RegressionModel::linear(1);
    CHECK(std::abs(modal_objective(m, location_data(vec({1.0, 1.0, 1.0})), vec({1.0}), 1.0) - 0.3989422804014327) <
          1e-12);
    CHECK(std::abs(modal_objective(m, location_data(vec({0.0, 1.0})), vec({0.0}), 1.0) - 0.320456502460288) < 1e-12);
    const auto d = location_data(vec({2.0, 2.0}));
    CHECK(modal_objective(m, d, vec({2.0}), 2.0) == doctest::Approx(modal_objective(m, d, vec({2.0}), 1.0) / 2.0));
}

TEST_CASE("modal_em fixed point on exact data") {
    const auto m = RegressionModel::exponential();
    const auto d = noiseless_exp(50, 2.0, 1.0, 3);
    const auto theta = vec({2.0, 1.0});
    const auto fit = modal_em(m, d, 0.3, theta);
    CHECK(fit.diagnostics.converged);
    CHECK(fit.diagnostics.iterations <= 1);
    CHECK((fit.theta_hat - theta).cwiseAbs().maxCoeff() < 1e-12);
    const auto w = estep_weights(m, d, theta, 0.3);
    CHECK((w.array() - 1.0 / 50).abs().maxCoeff() < 1e-15);
    CHECK(fit.diagnostics.final_objective == doctest::Approx(phi(0.0) / 0.3));
}

TEST_CASE("modal_em ascent from random starts") {
    const auto m = RegressionModel::exponential();
    const auto d = study_data(0, false);
    RandomStream rs(11, {kTestTag, 3});
    EmOptions opts;
    opts.max_iter = 100;
    for (int start = 0; start < 1000; ++start) {
        const auto theta0 = vec({rs.uniform() * 4 - 0.5, rs.uniform() * 4 - 2});
        const auto fit = modal_em(m, d, kStudyH, theta0, opts);
        const auto& tr = fit.diagnostics.objective_trace;
        REQUIRE(!tr.empty());
        for (std::size_t t = 1; t < tr.size(); ++t) REQUIRE(tr[t] >= tr[t - 1] - 1e-12);
        REQUIRE(modal_objective(m, d, fit.theta_hat, kStudyH) >= modal_objective(m, d, theta0, kStudyH) - 1e-12);
        REQUIRE(fit.diagnostics.final_objective == doctest::Approx(modal_objective(m, d, fit.theta_hat, kStudyH)));
    }
}

TEST_CASE("modal_em degenerate bandwidth uses the weight guard") {
    const auto m = RegressionModel::exponential();
    const auto d = study_data(1, false);
    const auto fit = modal_em(m, d, 1e-4, vec({1.0, 1.0}));
    CHECK(fit.diagnostics.weight_guard_used);
    CHECK(fit.theta_hat.allFinite());
}

TEST_CASE("modal estimators target the conditional mode on true covariates") {
    const auto m = RegressionModel::exponential();
    Eigen::Vector2d sum_em = Eigen::Vector2d::Zero();
    Eigen::Vector2d sum_est = Eigen::Vector2d::Zero();
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        const auto d = study_data(r, false);
        const auto start = lse_fit(m, d, default_start(m, d)).theta_hat;
        sum_em += modal_em(m, d, kStudyH, start).theta_hat;
        const auto best = modal_estimate(m, d, kStudyH, start);
        CHECK(best.diagnostics.final_objective >= modal_em(m, d, kStudyH, start).diagnostics.final_objective);
        sum_est += best.theta_hat;
    }
    const Eigen::Vector2d mean_em = sum_em / reps;
    const Eigen::Vector2d mean_est = sum_est / reps;
    MESSAGE("modal_em mean " << mean_em.transpose() << ", modal_estimate mean " << mean_est.transpose());
    CHECK(std::abs(mean_est[0] - 2.0) < 0.15);
    CHECK(std::abs(mean_est[1] - 1.0) < 0.15);
    // EM from the least-squares start alone stops at a lower local maximum in a share of replications
    CHECK(std::abs(mean_em[0] - 2.0) < 0.15);
    CHECK(mean_em[1] < mean_est[1]);
}

TEST_CASE("lse_fit") {
    const auto m = RegressionModel::exponential();
    SUBCASE("noiseless recovery") {
        const auto d = noiseless_exp(40, 1.3, -0.7, 4);
        const auto r = lse_fit(m, d, default_start(m, d));
        CHECK(r.converged);
        CHECK(std::abs(r.theta_hat[0] - 1.3) < 1e-8);
        CHECK(std::abs(r.theta_hat[1] + 0.7) < 1e-8);
    }
    SUBCASE("linear model matches normal equations") {
        const auto lin = RegressionModel::linear(3);
        RandomStream rs(8, {kTestTag, 4});
        Eigen::MatrixXd x(60, 3);
        Eigen::VectorXd y(60);
        for (int i = 0; i < 60; ++i) {
            for (int k = 0; k < 3; ++k) x(i, k) = rs.normal();
            y[i] = 0.5 * x(i, 0) - 2.0 * x(i, 1) + x(i, 2) + rs.normal();
        }
        const Eigen::VectorXd ne = (x.transpose() * x).ldlt().solve(x.transpose() * y);
        const auto r = lse_fit(lin, Dataset(y, x), Eigen::VectorXd::Zero(3));
        CHECK((r.theta_hat - ne).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("attenuation under measurement error") {
        double sum_beta = 0.0;
        for (int r = 0; r < 100; ++r) {
            const auto d = study_data(r, true);
            sum_beta += lse_fit(m, d, default_start(m, d)).theta_hat[1];
        }
        CHECK(sum_beta / 100 < 1.0);
    }
}

TEST_CASE("huber_rho") {
    CHECK(huber_rho(0.0, 1.3) == 0.0);
    for (double c : {0.1, 1.0, 2.5}) {
        CHECK(huber_rho(2 * c, c) == doctest::Approx(1.5 * c * c));
        CHECK(huber_rho(-2 * c, c) == doctest::Approx(1.5 * c * c));
        CHECK(huber_rho(0.5 * c, c) == doctest::Approx(0.125 * c * c));
        CHECK(huber_rho(c, c) == doctest::Approx(0.5 * c * c));
    }
}

TEST_CASE("huber_fit") {
    const auto m = RegressionModel::exponential();
    SUBCASE("clean symmetric data matches least squares") {
        auto d = noiseless_exp(80, 1.5, 0.8, 6);
        for (Eigen::Index i = 0; i < d.n(); ++i) d.y[i] += (i % 2 == 0 ? 0.05 : -0.05);
        const auto ls = lse_fit(m, d, default_start(m, d));
        const auto hb = huber_fit(m, d, ls.theta_hat);
        CHECK_FALSE(hb.mad_fallback);
        CHECK((hb.result.theta_hat - ls.theta_hat).cwiseAbs().maxCoeff() < 1e-3);
    }
    SUBCASE("huge c equals least squares") {
        const auto d = study_data(2, true);
        const auto ls = lse_fit(m, d, default_start(m, d));
        HuberOptions opts;
        opts.fixed_c = 1e12;
        const auto hb = huber_fit(m, d, default_start(m, d), opts);
        CHECK(hb.c == 1e12);
        CHECK((hb.result.theta_hat - ls.theta_hat).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("zero MAD falls back to least squares") {
        const auto d = noiseless_exp(30, 1.0, 1.0, 7);
        const auto hb = huber_fit(m, d, vec({1.0, 1.0}));
        CHECK(hb.mad_fallback);
        CHECK(std::abs(hb.result.theta_hat[0] - 1.0) < 1e-8);
    }
    SUBCASE("downweights a gross outlier") {
        auto d = noiseless_exp(60, 1.0, 1.0, 9);
        for (Eigen::Index i = 0; i < d.n(); ++i) d.y[i] += 0.02 * std::sin(3.0 * static_cast<double>(i));
        d.y[0] += 50.0;
        const auto ls = lse_fit(m, d, default_start(m, d));
        const auto hb = huber_fit(m, d, default_start(m, d));
        CHECK((hb.result.theta_hat - vec({1.0, 1.0})).norm() < (ls.theta_hat - vec({1.0, 1.0})).norm());
    }
}

TEST_CASE("median_fit") {
    SUBCASE("location problem gives the sample median") {
        const auto lin = RegressionModel::linear(1);
        const auto y = vec({3.0, -1.0, 7.5, 2.0, 100.0, 0.25, 4.0});
        const auto r = median_fit(lin, location_data(y), vec({0.0}));
        CHECK(std::abs(r.theta_hat[0] - 3.0) < 1e-6);
        CHECK(median_of({3.0, -1.0, 7.5, 2.0, 100.0, 0.25, 4.0}) == 3.0);
        CHECK(median_of({4.0, 1.0, 3.0, 2.0}) == 2.5);
    }
    SUBCASE("noiseless recovery") {
        const auto m = RegressionModel::exponential();
        const auto d = noiseless_exp(50, 1.67, 1.0, 10);
        const auto r = median_fit(m, d, vec({1.0, 0.5}));
        CHECK(std::abs(r.theta_hat[0] - 1.67) < 1e-4);
        CHECK(std::abs(r.theta_hat[1] - 1.0) < 1e-4);
    }
    SUBCASE("targets the conditional median on true covariates") {
        const auto m = RegressionModel::exponential();
        Eigen::Vector2d sum = Eigen::Vector2d::Zero();
        for (int r = 0; r < 100; ++r) {
            const auto d = study_data(r, false);
            sum += median_fit(m, d, lse_fit(m, d, default_start(m, d)).theta_hat).theta_hat;
        }
        sum /= 100;
        CHECK(std::abs(sum[0] - 1.67) < 0.15);
        CHECK(std::abs(sum[1] - 1.0) < 0.15);
    }
}

TEST_CASE("estimators are invariant to row order") {
    const auto m = RegressionModel::exponential();
    for (int rep = 0; rep < 5; ++rep) {
        const auto d = study_data(rep, true);
        const auto p = permuted(d, static_cast<std::uint64_t>(rep));
        const auto t0 = vec({1.0, 1.0});
        CHECK((lse_fit(m, d, t0).theta_hat - lse_fit(m, p, t0).theta_hat).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((huber_fit(m, d, t0).result.theta_hat - huber_fit(m, p, t0).result.theta_hat).cwiseAbs().maxCoeff() <=
              1e-12);
        CHECK((median_fit(m, d, t0).theta_hat - median_fit(m, p, t0).theta_hat).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((modal_em(m, d, kStudyH, t0).theta_hat - modal_em(m, p, kStudyH, t0).theta_hat).cwiseAbs().maxCoeff() <=
              1e-12);
        CHECK((modal_estimate(m, d, kStudyH, t0).theta_hat - modal_estimate(m, p, kStudyH, t0).theta_hat)
                  .cwiseAbs()
                  .maxCoeff() <= 1e-12);
    }
}
