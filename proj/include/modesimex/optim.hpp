#pragma once

#include "modesimex/model.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string_view>

namespace modesimex {

enum class Termination { GradientSmall, StepSmall, MaxIter, Degenerate };

[[nodiscard]] std::string_view to_string(Termination t) noexcept;

struct OptimResult {
    Eigen::VectorXd theta_hat;
    double objective_value = 0.0;
    int iterations = 0;
    bool converged = false;
    Termination termination = Termination::MaxIter;
    /// Set when the model clamped an exponent at the returned estimate.
    bool clamped = false;
};

struct GaussNewtonOptions {
    double grad_tol = 1e-9;
    double step_tol = 1e-10;
    int max_iter = 500;
    double damping_start = 1e-3;
    double damping_up = 10.0;
    double damping_down = 10.0;
    double damping_cap = 1e8;
};

struct NelderMeadOptions {
    /// Convergence when the simplex diameter (max vertex distance to the best vertex) falls below this.
    double step_tol = 1e-10;
    int max_iter = 2000;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Fills residuals r(theta) and their Jacobian dr/dtheta. Returns false if theta is not admissible.
using ResidualFunction =
    std::function<bool(const Eigen::VectorXd& theta, Eigen::VectorXd& residuals, Eigen::MatrixXd& jacobian)>;

/// Derivative-free simplex minimization (Nelder-Mead with standard coefficients).
[[nodiscard]] OptimResult nelder_mead(const Objective& objective, const Eigen::VectorXd& theta0,
                                      const NelderMeadOptions& opts = {});

/// Levenberg-damped Gauss-Newton for 0.5 * ||r(theta)||^2 (objective reported as ||r||^2).
[[nodiscard]] OptimResult damped_gauss_newton(const ResidualFunction& residuals,
                                              const Eigen::VectorXd& theta0,
                                              const GaussNewtonOptions& opts = {});

/// Minimizes sum_i w_i (y_i - m(x_i, theta))^2.
[[nodiscard]] OptimResult weighted_gauss_newton(const RegressionModel& model, const Eigen::MatrixXd& x,
                                                const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                                                const Eigen::VectorXd& theta0,
                                                const GaussNewtonOptions& opts = {});

/// sum_i w_i (y_i - m(x_i, theta))^2
[[nodiscard]] double weighted_sse(const RegressionModel& model, const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                                  const Eigen::VectorXd& theta);

}  // namespace modesimex
