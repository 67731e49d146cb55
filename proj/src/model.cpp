#include "modesimex/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace modesimex {

namespace {

struct ClampedExp {
    double value;
    bool clamped;
};

inline ClampedExp clamped_exp(double exponent) {
    if (exponent > kExponentClamp) return {std::exp(kExponentClamp), true};
    if (exponent < -kExponentClamp) return {std::exp(-kExponentClamp), true};
    return {std::exp(exponent), false};
}

}  // namespace

RegressionModel RegressionModel::exponential() { return {ModelKind::Exponential, 2, 1}; }

RegressionModel RegressionModel::linear(int p) {
    if (p < 1) throw std::invalid_argument("linear model needs p >= 1");
    return {ModelKind::Linear, p, p};
}

RegressionModel RegressionModel::from_name(std::string_view name, int p) {
    if (name == "exp") return exponential();
    if (name == "linear") return linear(p);
    throw std::invalid_argument("unknown model '" + std::string(name) + "' (expected exp or linear)");
}

std::string RegressionModel::name() const {
    return kind_ == ModelKind::Exponential ? "exp" : "linear";
}

void RegressionModel::check_dims(Eigen::Index x_len, Eigen::Index theta_len) const {
    if (x_len != p_ || theta_len != q_) {
        throw std::invalid_argument("model dimension mismatch: expected x of length " +
                                    std::to_string(p_) + " and theta of length " +
                                    std::to_string(q_));
    }
}

ModelValue RegressionModel::evaluate_guarded(const Eigen::Ref<const Eigen::VectorXd>& x,
                                             const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    check_dims(x.size(), theta.size());
    if (kind_ == ModelKind::Linear) return {theta.dot(x), false};
    const auto e = clamped_exp(theta[1] * x[0]);
    return {theta[0] * e.value, e.clamped};
}

double RegressionModel::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    return evaluate_guarded(x, theta).value;
}

Eigen::VectorXd RegressionModel::gradient(const Eigen::Ref<const Eigen::VectorXd>& x,
                                          const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    check_dims(x.size(), theta.size());
    if (kind_ == ModelKind::Linear) return x;
    const auto e = clamped_exp(theta[1] * x[0]);
    Eigen::VectorXd g(2);
    g << e.value, theta[0] * x[0] * e.value;
    return g;
}

bool RegressionModel::evaluate_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta,
                                    Eigen::VectorXd& out) const {
    check_dims(x.cols(), theta.size());
    const Eigen::Index n = x.rows();
    out.resize(n);
    if (kind_ == ModelKind::Linear) {
        out.noalias() = x * theta;
        return false;
    }
    bool clamped = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto e = clamped_exp(theta[1] * x(i, 0));
        clamped |= e.clamped;
        out[i] = theta[0] * e.value;
    }
    return clamped;
}

bool RegressionModel::jacobian_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta,
                                    Eigen::VectorXd& values, Eigen::MatrixXd& jac) const {
    check_dims(x.cols(), theta.size());
    const Eigen::Index n = x.rows();
    values.resize(n);
    jac.resize(n, q_);
    if (kind_ == ModelKind::Linear) {
        values.noalias() = x * theta;
        jac = x;
        return false;
    }
    bool clamped = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto e = clamped_exp(theta[1] * x(i, 0));
        clamped |= e.clamped;
        values[i] = theta[0] * e.value;
        jac(i, 0) = e.value;
        jac(i, 1) = theta[0] * x(i, 0) * e.value;
    }
    return clamped;
}

}  // namespace modesimex
