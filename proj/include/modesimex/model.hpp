#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>

namespace modesimex {

enum class ModelKind { Exponential, Linear };

/// Exponents of the exponential model are clamped to +/- this value.
inline constexpr double kExponentClamp = 700.0;

struct ModelValue {
    double value = 0.0;
    bool clamped = false;
};

/// Parametric regression function m(x, theta) with its analytic gradient in theta.
///
/// Exponential: theta = (alpha, beta), x scalar, m = alpha * exp(beta * x).
/// Linear:      theta and x both of length p, m = theta' x.
class RegressionModel {
public:
    static RegressionModel exponential();
    static RegressionModel linear(int p);

    /// Parses the CLI/config names `exp` and `linear` (the latter needs p).
    static RegressionModel from_name(std::string_view name, int p = 1);

    [[nodiscard]] ModelKind kind() const noexcept { return kind_; }
    [[nodiscard]] int dim_theta() const noexcept { return q_; }
    [[nodiscard]] int dim_x() const noexcept { return p_; }
    [[nodiscard]] std::string name() const;

    [[nodiscard]] double evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& theta) const;
    [[nodiscard]] ModelValue evaluate_guarded(const Eigen::Ref<const Eigen::VectorXd>& x,
                                              const Eigen::Ref<const Eigen::VectorXd>& theta) const;
    [[nodiscard]] Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& x,
                                           const Eigen::Ref<const Eigen::VectorXd>& theta) const;

    // Batch forms over the rows of an n x p design. Return true if any exponent was clamped.
    bool evaluate_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta,
                       Eigen::VectorXd& out) const;
    bool jacobian_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta,
                       Eigen::VectorXd& values, Eigen::MatrixXd& jac) const;

private:
    RegressionModel(ModelKind kind, int q, int p) : kind_(kind), q_(q), p_(p) {}

    void check_dims(Eigen::Index x_len, Eigen::Index theta_len) const;

    ModelKind kind_;
    int q_;
    int p_;
};

}  // namespace modesimex
