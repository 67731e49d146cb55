#pragma once

#include "modesimex/model.hpp"
#include "modesimex/optim.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace modesimex {

/// Observations (y_i, x_i). `x` holds true covariates, observed W, or SIMEX pseudo-data.
struct Dataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd x;

    Dataset() = default;
    Dataset(Eigen::VectorXd y_in, Eigen::MatrixXd x_in);

    [[nodiscard]] Eigen::Index n() const noexcept { return y.size(); }
    /// Throws std::invalid_argument unless rows match, n >= q, x has p columns and all entries are finite.
    void validate(const RegressionModel& model) const;
};

struct EmOptions {
    double param_tol = 1e-8;
    int max_iter = 500;
    GaussNewtonOptions mstep{};
};

/// Start strategy for modal_estimate. Besides the direct EM run from theta0, a continuation path
/// runs EM at a decreasing sequence of bandwidths, from `start_multiplier` times a robust residual
/// scale down to h, warm-starting each stage. The path with the larger Q_n wins.
struct ModalStartOptions {
    bool continuation = true;
    double start_multiplier = 2.0;
    double shrink = 0.7;
    /// Parameter tolerance for the intermediate (h_k > h) stages.
    double stage_tol = 1e-5;
};

struct EmDiagnostics {
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective_trace;
    double final_objective = 0.0;
    /// An M-step fell back to the top-2q points because the effective sample size dropped below q.
    bool weight_guard_used = false;
    /// An M-step returned Degenerate; theta is the last accepted iterate.
    bool mstep_failed = false;
    /// Set by modal_estimate when the continuation path won.
    bool from_continuation = false;
};

struct ModalFit {
    Eigen::VectorXd theta_hat;
    EmDiagnostics diagnostics;
};

/// Normalized kernel weights pi(j | theta), computed in log space.
[[nodiscard]] Eigen::VectorXd estep_weights(const RegressionModel& model, const Dataset& data,
                                            const Eigen::VectorXd& theta, double h);

/// Q_n(theta) = (n h)^-1 sum_i phi((y_i - m(x_i, theta)) / h).
[[nodiscard]] double modal_objective(const RegressionModel& model, const Dataset& data,
                                     const Eigen::VectorXd& theta, double h);

/// Maximizes Q_n by EM: kernel weights, then a weighted least-squares M-step.
[[nodiscard]] ModalFit modal_em(const RegressionModel& model, const Dataset& data, double h,
                                const Eigen::VectorXd& theta0, const EmOptions& opts = {});

/// The modal estimator used by the study pipelines: modal_em from theta0 and, if enabled, along a
/// bandwidth-continuation path; returns the fit with the larger Q_n at bandwidth h.
[[nodiscard]] ModalFit modal_estimate(const RegressionModel& model, const Dataset& data, double h,
                                      const Eigen::VectorXd& theta0, const EmOptions& opts = {},
                                      const ModalStartOptions& start = {});

/// Ordinary nonlinear least squares.
[[nodiscard]] OptimResult lse_fit(const RegressionModel& model, const Dataset& data,
                                  const Eigen::VectorXd& theta0, const GaussNewtonOptions& opts = {});

/// Huber loss rho_c(r).
[[nodiscard]] double huber_rho(double r, double c) noexcept;

struct HuberOptions {
    double efficiency_constant = 1.345;
    /// When set, use this c instead of 1.345 * MAD / 0.6745.
    std::optional<double> fixed_c;
    double param_tol = 1e-8;
    int max_outer = 200;
    GaussNewtonOptions inner{};
};

struct HuberFit {
    OptimResult result;
    double c = 0.0;
    /// Residual MAD was zero; the result is the least-squares fit.
    bool mad_fallback = false;
};

[[nodiscard]] HuberFit huber_fit(const RegressionModel& model, const Dataset& data,
                                 const Eigen::VectorXd& theta0, const HuberOptions& opts = {});

/// sum_i |y_i - m(x_i, theta)| minimized by simplex search.
[[nodiscard]] OptimResult median_fit(const RegressionModel& model, const Dataset& data,
                                     const Eigen::VectorXd& theta0, const NelderMeadOptions& opts = {});

/// A deterministic data-driven starting value for least squares.
[[nodiscard]] Eigen::VectorXd default_start(const RegressionModel& model, const Dataset& data);

/// Median of the values (average of the two central values for even length).
[[nodiscard]] double median_of(std::vector<double> values);

}  // namespace modesimex
