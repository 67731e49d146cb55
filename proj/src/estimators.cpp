#include "modesimex/estimators.hpp"

#include "modesimex/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace modesimex {

Dataset::Dataset(Eigen::VectorXd y_in, Eigen::MatrixXd x_in) : y(std::move(y_in)), x(std::move(x_in)) {}

void Dataset::validate(const RegressionModel& model) const {
    if (x.rows() != y.size()) {
        throw std::invalid_argument("dataset: x has " + std::to_string(x.rows()) + " rows but y has " +
                                    std::to_string(y.size()) + " entries");
    }
    if (x.cols() != model.dim_x()) {
        throw std::invalid_argument("dataset: x has " + std::to_string(x.cols()) +
                                    " columns, model expects " + std::to_string(model.dim_x()));
    }
    if (y.size() < model.dim_theta()) {
        throw std::invalid_argument("dataset: n = " + std::to_string(y.size()) +
                                    " is smaller than the parameter count " +
                                    std::to_string(model.dim_theta()));
    }
    if (!y.allFinite() || !x.allFinite()) throw std::invalid_argument("dataset: non-finite entries");
}

double median_of(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty sample");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

namespace {

Eigen::VectorXd residuals_at(const RegressionModel& model, const Dataset& data, const Eigen::VectorXd& theta) {
    Eigen::VectorXd fitted;
    model.evaluate_rows(data.x, theta, fitted);
    return data.y - fitted;
}

/// Rows sorted lexicographically by (y, x); estimators fit this order so results do not depend on
/// the order rows were supplied in.
Dataset canonical(const Dataset& data) {
    const auto n = data.n();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (data.y[a] != data.y[b]) return data.y[a] < data.y[b];
        for (Eigen::Index k = 0; k < data.x.cols(); ++k) {
            if (data.x(a, k) != data.x(b, k)) return data.x(a, k) < data.x(b, k);
        }
        return false;
    });
    Dataset out;
    out.y.resize(n);
    out.x.resize(n, data.x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        out.y[i] = data.y[order[static_cast<std::size_t>(i)]];
        out.x.row(i) = data.x.row(order[static_cast<std::size_t>(i)]);
    }
    return out;
}

void require_bandwidth(double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("bandwidth must be positive");
}

}  // namespace

Eigen::VectorXd estep_weights(const RegressionModel& model, const Dataset& data,
                              const Eigen::VectorXd& theta, double h) {
    require_bandwidth(h);
    const Eigen::VectorXd r = residuals_at(model, data, theta);
    // log phi_h(r) up to a constant shared by every observation
    Eigen::VectorXd logw = -0.5 * (r / h).array().square();
    const double top = logw.maxCoeff();
    if (!std::isfinite(top)) throw std::logic_error("estep_weights: no finite log-density");
    Eigen::VectorXd w = (logw.array() - top).exp();
    w /= w.sum();
    return w;
}

double modal_objective(const RegressionModel& model, const Dataset& data, const Eigen::VectorXd& theta,
                       double h) {
    require_bandwidth(h);
    const Eigen::VectorXd r = residuals_at(model, data, theta);
    double total = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) total += phi(r[i] / h);
    return total / (static_cast<double>(r.size()) * h);
}

ModalFit modal_em(const RegressionModel& model, const Dataset& input, double h, const Eigen::VectorXd& theta0,
                  const EmOptions& opts) {
    require_bandwidth(h);
    input.validate(model);
    const Dataset data = canonical(input);
    if (theta0.size() != model.dim_theta() || !theta0.allFinite()) {
        throw std::invalid_argument("modal_em: theta0 must be finite with length q");
    }
    const int q = model.dim_theta();
    const auto n = data.n();

    ModalFit fit{theta0, {}};
    auto& diag = fit.diagnostics;
    double objective = modal_objective(model, data, theta0, h);
    diag.objective_trace.push_back(objective);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        diag.iterations = iter;
        Eigen::VectorXd w = estep_weights(model, data, fit.theta_hat, h);

        const double effective_n = 1.0 / w.squaredNorm();
        if (effective_n < q) {
            const auto keep = std::min<Eigen::Index>(n, 2 * q);
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](Eigen::Index a, Eigen::Index b) { return w[a] > w[b]; });
            w.setZero();
            for (Eigen::Index k = 0; k < keep; ++k) w[order[static_cast<std::size_t>(k)]] = 1.0 / keep;
            diag.weight_guard_used = true;
        }

        const OptimResult mstep = weighted_gauss_newton(model, data.x, data.y, w, fit.theta_hat, opts.mstep);
        if (mstep.termination == Termination::Degenerate) {
            diag.mstep_failed = true;
            break;
        }
        const double next_objective = modal_objective(model, data, mstep.theta_hat, h);
        if (next_objective < objective - 1e-12) {
            // only reachable through the weight guard; keep the ascent guarantee
            break;
        }
        const double change = (mstep.theta_hat - fit.theta_hat).lpNorm<Eigen::Infinity>();
        fit.theta_hat = mstep.theta_hat;
        objective = next_objective;
        diag.objective_trace.push_back(objective);
        if (change < opts.param_tol) {
            diag.converged = true;
            break;
        }
    }
    diag.final_objective = objective;
    return fit;
}

ModalFit modal_estimate(const RegressionModel& model, const Dataset& input, double h,
                        const Eigen::VectorXd& theta0, const EmOptions& opts, const ModalStartOptions& start) {
    input.validate(model);
    const Dataset data = canonical(input);
    ModalFit direct = modal_em(model, data, h, theta0, opts);
    if (!start.continuation) return direct;

    const Eigen::VectorXd r = residuals_at(model, data, theta0);
    const double center = median_of({r.data(), r.data() + r.size()});
    std::vector<double> dev(static_cast<std::size_t>(r.size()));
    for (Eigen::Index i = 0; i < r.size(); ++i) dev[static_cast<std::size_t>(i)] = std::abs(r[i] - center);
    const double scale = median_of(std::move(dev)) / 0.6745;
    double stage_h = std::max(h, start.start_multiplier * scale);
    if (!(stage_h > h)) return direct;

    EmOptions stage_opts = opts;
    stage_opts.param_tol = std::max(opts.param_tol, start.stage_tol);
    Eigen::VectorXd theta = theta0;
    while (stage_h > h) {
        theta = modal_em(model, data, stage_h, theta, stage_opts).theta_hat;
        stage_h = std::max(h, stage_h * start.shrink);
    }
    ModalFit annealed = modal_em(model, data, h, theta, opts);
    if (annealed.diagnostics.final_objective > direct.diagnostics.final_objective) {
        annealed.diagnostics.from_continuation = true;
        return annealed;
    }
    return direct;
}

OptimResult lse_fit(const RegressionModel& model, const Dataset& input, const Eigen::VectorXd& theta0,
                    const GaussNewtonOptions& opts) {
    input.validate(model);
    const Dataset data = canonical(input);
    return weighted_gauss_newton(model, data.x, data.y, Eigen::VectorXd::Ones(data.n()), theta0, opts);
}

double huber_rho(double r, double c) noexcept {
    const double a = std::abs(r);
    return a <= c ? 0.5 * r * r : c * a - 0.5 * c * c;
}

HuberFit huber_fit(const RegressionModel& model, const Dataset& input, const Eigen::VectorXd& theta0,
                   const HuberOptions& opts) {
    input.validate(model);
    const Dataset data = canonical(input);
    if (data.n() <= model.dim_theta()) throw std::invalid_argument("huber_fit: need n > q");

    HuberFit fit;
    Eigen::VectorXd theta = theta0;
    Eigen::VectorXd weights(data.n());
    bool converged = false;
    int outer = 0;
    OptimResult inner;
    for (; outer < opts.max_outer; ++outer) {
        const Eigen::VectorXd r = residuals_at(model, data, theta);
        if (opts.fixed_c) {
            fit.c = *opts.fixed_c;
        } else {
            const double center = median_of({r.data(), r.data() + r.size()});
            std::vector<double> dev(static_cast<std::size_t>(r.size()));
            for (Eigen::Index i = 0; i < r.size(); ++i) dev[static_cast<std::size_t>(i)] = std::abs(r[i] - center);
            const double mad = median_of(std::move(dev));
            if (!(mad > 0.0)) {
                fit.mad_fallback = true;
                fit.result = lse_fit(model, data, theta0, opts.inner);
                fit.c = 0.0;
                return fit;
            }
            fit.c = opts.efficiency_constant * mad / 0.6745;
        }
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            const double a = std::abs(r[i]);
            weights[i] = a <= fit.c ? 1.0 : fit.c / a;
        }
        inner = weighted_gauss_newton(model, data.x, data.y, weights, theta, opts.inner);
        if (inner.termination == Termination::Degenerate) break;
        const double change = (inner.theta_hat - theta).lpNorm<Eigen::Infinity>();
        theta = inner.theta_hat;
        if (change < opts.param_tol) {
            converged = true;
            ++outer;
            break;
        }
    }

    fit.result.theta_hat = theta;
    fit.result.iterations = outer;
    fit.result.converged = converged;
    fit.result.clamped = inner.clamped;
    fit.result.termination = converged ? Termination::StepSmall
                             : inner.termination == Termination::Degenerate ? Termination::Degenerate
                                                                             : Termination::MaxIter;
    const Eigen::VectorXd r = residuals_at(model, data, theta);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) loss += huber_rho(r[i], fit.c);
    fit.result.objective_value = loss;
    return fit;
}

OptimResult median_fit(const RegressionModel& model, const Dataset& input, const Eigen::VectorXd& theta0,
                       const NelderMeadOptions& opts) {
    input.validate(model);
    const Dataset data = canonical(input);
    if (data.n() <= model.dim_theta()) throw std::invalid_argument("median_fit: need n > q");
    Eigen::VectorXd fitted;
    auto l1 = [&](const Eigen::VectorXd& theta) {
        model.evaluate_rows(data.x, theta, fitted);
        return (data.y - fitted).lpNorm<1>();
    };
    return nelder_mead(l1, theta0, opts);
}

Eigen::VectorXd default_start(const RegressionModel& model, const Dataset& data) {
    if (model.kind() == ModelKind::Linear) return Eigen::VectorXd::Zero(model.dim_theta());
    Eigen::VectorXd start(2);
    start << data.y.mean(), 0.0;
    return start;
}

}  // namespace modesimex
