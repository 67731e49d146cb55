#include "modesimex/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace modesimex {

std::string_view to_string(Termination t) noexcept {
    switch (t) {
        case Termination::GradientSmall: return "gradient_small";
        case Termination::StepSmall: return "step_small";
        case Termination::MaxIter: return "max_iter";
        case Termination::Degenerate: return "degenerate";
    }
    return "unknown";
}

namespace {

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

double finite_or_inf(double v) {
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace

OptimResult nelder_mead(const Objective& objective, const Eigen::VectorXd& theta0,
                        const NelderMeadOptions& opts) {
    const Eigen::Index q = theta0.size();
    if (q == 0) throw std::invalid_argument("nelder_mead: empty parameter vector");
    const double f0 = objective(theta0);
    if (!std::isfinite(f0) || !all_finite(theta0)) {
        throw std::invalid_argument("nelder_mead: objective is not finite at the starting point");
    }

    constexpr double kReflect = 1.0;
    constexpr double kExpand = 2.0;
    constexpr double kContract = 0.5;
    constexpr double kShrink = 0.5;

    std::vector<Eigen::VectorXd> vertices(q + 1, theta0);
    std::vector<double> values(q + 1, f0);
    for (Eigen::Index i = 0; i < q; ++i) {
        vertices[i + 1][i] += std::max(0.1, 0.1 * std::abs(theta0[i]));
        values[i + 1] = finite_or_inf(objective(vertices[i + 1]));
    }

    std::vector<std::size_t> order(q + 1);
    auto sort_vertices = [&] {
        std::iota(order.begin(), order.end(), std::size_t{0});
        // stable sort keeps the result deterministic when values tie
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        std::vector<Eigen::VectorXd> v2(q + 1);
        std::vector<double> f2(q + 1);
        for (std::size_t k = 0; k < order.size(); ++k) {
            v2[k] = std::move(vertices[order[k]]);
            f2[k] = values[order[k]];
        }
        vertices = std::move(v2);
        values = std::move(f2);
    };
    auto diameter = [&] {
        double d = 0.0;
        for (Eigen::Index i = 1; i <= q; ++i) d = std::max(d, (vertices[i] - vertices[0]).norm());
        return d;
    };

    OptimResult result;
    result.termination = Termination::MaxIter;
    int iter = 0;
    sort_vertices();
    for (; iter < opts.max_iter; ++iter) {
        if (diameter() < opts.step_tol) {
            result.termination = Termination::StepSmall;
            result.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(q);
        for (Eigen::Index i = 0; i < q; ++i) centroid += vertices[i];
        centroid /= static_cast<double>(q);

        const Eigen::VectorXd& worst = vertices[q];
        const Eigen::VectorXd reflected = centroid + kReflect * (centroid - worst);
        const double f_reflected = finite_or_inf(objective(reflected));

        if (f_reflected < values[0]) {
            const Eigen::VectorXd expanded = centroid + kExpand * (reflected - centroid);
            const double f_expanded = finite_or_inf(objective(expanded));
            if (f_expanded < f_reflected) {
                vertices[q] = expanded;
                values[q] = f_expanded;
            } else {
                vertices[q] = reflected;
                values[q] = f_reflected;
            }
        } else if (f_reflected < values[q - 1]) {
            vertices[q] = reflected;
            values[q] = f_reflected;
        } else {
            const bool outside = f_reflected < values[q];
            const Eigen::VectorXd contracted =
                outside ? Eigen::VectorXd(centroid + kContract * (reflected - centroid))
                        : Eigen::VectorXd(centroid + kContract * (worst - centroid));
            const double f_contracted = finite_or_inf(objective(contracted));
            if (f_contracted < (outside ? f_reflected : values[q])) {
                vertices[q] = contracted;
                values[q] = f_contracted;
            } else {
                for (Eigen::Index i = 1; i <= q; ++i) {
                    vertices[i] = vertices[0] + kShrink * (vertices[i] - vertices[0]);
                    values[i] = finite_or_inf(objective(vertices[i]));
                }
            }
        }
        sort_vertices();
    }

    result.iterations = iter;
    result.theta_hat = vertices[0];
    result.objective_value = objective(result.theta_hat);
    return result;
}

OptimResult damped_gauss_newton(const ResidualFunction& residuals, const Eigen::VectorXd& theta0,
                                const GaussNewtonOptions& opts) {
    Eigen::VectorXd theta = theta0;
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    if (!all_finite(theta0) || !residuals(theta, r, jac) || !all_finite(r) || !jac.allFinite()) {
        throw std::invalid_argument("gauss_newton: residuals are not finite at the starting point");
    }
    double sse = r.squaredNorm();
    // mu == 0 is the undamped Gauss-Newton step; damping engages after a rejected step.
    double mu = 0.0;

    OptimResult result;
    result.termination = Termination::MaxIter;
    Eigen::VectorXd r_try;
    Eigen::MatrixXd jac_try;
    int iter = 0;
    bool done = false;
    for (; iter < opts.max_iter && !done; ++iter) {
        const Eigen::VectorXd grad = jac.transpose() * r;
        if (grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
            result.termination = Termination::GradientSmall;
            result.converged = true;
            break;
        }
        const Eigen::MatrixXd normal = jac.transpose() * jac;
        const double diag_floor = 1e-12 * std::max(1.0, normal.diagonal().maxCoeff());
        const Eigen::VectorXd scale = normal.diagonal().cwiseMax(diag_floor);

        while (true) {
            Eigen::MatrixXd damped = normal;
            damped.diagonal() += mu * scale;
            const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
            Eigen::VectorXd step;
            const bool solved = ldlt.info() == Eigen::Success && ldlt.isPositive();
            if (solved) step = ldlt.solve(-grad);
            if (!solved || !all_finite(step)) {
                mu = mu == 0.0 ? opts.damping_start : mu * opts.damping_up;
                if (mu > opts.damping_cap) {
                    result.termination = Termination::Degenerate;
                    done = true;
                    break;
                }
                continue;
            }
            const double step_scale = opts.step_tol * (theta.norm() + opts.step_tol);
            if (step.norm() <= step_scale) {
                result.termination = Termination::StepSmall;
                result.converged = true;
                done = true;
                break;
            }
            const Eigen::VectorXd candidate = theta + step;
            if (residuals(candidate, r_try, jac_try) && all_finite(r_try) && jac_try.allFinite() &&
                r_try.squaredNorm() <= sse) {
                theta = candidate;
                r.swap(r_try);
                jac.swap(jac_try);
                sse = r.squaredNorm();
                mu /= opts.damping_down;
                if (mu < opts.damping_start) mu = 0.0;
                break;
            }
            mu = mu == 0.0 ? opts.damping_start : mu * opts.damping_up;
            if (mu > opts.damping_cap) {
                result.termination = Termination::Degenerate;
                done = true;
                break;
            }
        }
    }
    result.iterations = iter;
    result.theta_hat = theta;
    // Recompute so the reported value corresponds exactly to theta_hat.
    residuals(theta, r, jac);
    result.objective_value = r.squaredNorm();
    return result;
}

double weighted_sse(const RegressionModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& weights, const Eigen::VectorXd& theta) {
    Eigen::VectorXd fitted;
    model.evaluate_rows(x, theta, fitted);
    return (weights.array() * (y - fitted).array().square()).sum();
}

OptimResult weighted_gauss_newton(const RegressionModel& model, const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                                  const Eigen::VectorXd& theta0, const GaussNewtonOptions& opts) {
    const Eigen::Index n = y.size();
    if (x.rows() != n || weights.size() != n) {
        throw std::invalid_argument("weighted_gauss_newton: x, y and weights must have the same length");
    }
    if (theta0.size() != model.dim_theta()) {
        throw std::invalid_argument("weighted_gauss_newton: theta0 has the wrong dimension");
    }
    if ((weights.array() < 0.0).any() || !(weights.sum() > 0.0)) {
        throw std::invalid_argument("weighted_gauss_newton: weights must be nonnegative with positive sum");
    }
    const auto support = (weights.array() > 0.0).count();
    if (support < model.dim_theta()) {
        OptimResult degenerate;
        degenerate.theta_hat = theta0;
        degenerate.objective_value = weighted_sse(model, x, y, weights, theta0);
        degenerate.termination = Termination::Degenerate;
        return degenerate;
    }

    const Eigen::VectorXd sqrt_w = weights.cwiseSqrt();
    Eigen::VectorXd fitted;
    bool clamped = false;
    auto fn = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
        clamped = model.jacobian_rows(x, theta, fitted, jac);
        // residual r_i = sqrt(w_i) (m_i - y_i); its Jacobian is sqrt(w_i) dm_i/dtheta
        r = sqrt_w.cwiseProduct(fitted - y);
        jac = sqrt_w.asDiagonal() * jac;
        return true;
    };
    OptimResult result = damped_gauss_newton(fn, theta0, opts);
    result.clamped = clamped;
    return result;
}

}  // namespace modesimex
