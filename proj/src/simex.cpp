#include "modesimex/simex.hpp"

#include "modesimex/io.hpp"
#include "modesimex/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace modesimex {

int parameter_count(Extrapolant family) noexcept { return family == Extrapolant::Linear ? 2 : 3; }

std::string_view to_string(Extrapolant family) noexcept {
    switch (family) {
        case Extrapolant::Linear: return "linear";
        case Extrapolant::Quadratic: return "quadratic";
        case Extrapolant::Rational: return "rational";
    }
    return "unknown";
}

Extrapolant parse_extrapolant(std::string_view name) {
    if (name == "linear") return Extrapolant::Linear;
    if (name == "quadratic") return Extrapolant::Quadratic;
    if (name == "rational") return Extrapolant::Rational;
    throw std::invalid_argument("unknown extrapolant '" + std::string(name) +
                                "' (expected linear, quadratic or rational)");
}

std::string_view to_string(EstimatorKind kind) noexcept {
    switch (kind) {
        case EstimatorKind::ModalEm: return "modal";
        case EstimatorKind::Lse: return "lse";
        case EstimatorKind::Huber: return "huber";
        case EstimatorKind::Median: return "median";
    }
    return "unknown";
}

std::vector<double> equally_spaced_grid(int points, double max) {
    if (points < 1) throw std::invalid_argument("lambda grid needs at least one point");
    if (!(max >= 0.0)) throw std::invalid_argument("lambda grid maximum must be nonnegative");
    std::vector<double> grid(static_cast<std::size_t>(points), 0.0);
    for (int j = 1; j < points; ++j) grid[static_cast<std::size_t>(j)] = max * j / (points - 1);
    return grid;
}

void SimexConfig::validate(int p) const {
    const auto m = static_cast<int>(lambda_grid.size());
    if (m < parameter_count(extrapolant)) {
        throw std::invalid_argument("lambda grid has " + std::to_string(m) + " points but the " +
                                    std::string(to_string(extrapolant)) + " extrapolant needs at least " +
                                    std::to_string(parameter_count(extrapolant)));
    }
    for (std::size_t j = 0; j < lambda_grid.size(); ++j) {
        if (!(lambda_grid[j] >= 0.0) || !std::isfinite(lambda_grid[j])) {
            throw std::invalid_argument("lambda values must be finite and nonnegative");
        }
        if (j > 0 && !(lambda_grid[j] > lambda_grid[j - 1])) {
            throw std::invalid_argument("lambda grid must be strictly increasing");
        }
    }
    if (B < 1) throw std::invalid_argument("B must be positive");
    if (threads < 1) throw std::invalid_argument("threads must be positive");
    if (sigma_u.rows() != p || sigma_u.cols() != p) {
        throw std::invalid_argument("measurement-error covariance must be " + std::to_string(p) + " x " +
                                    std::to_string(p));
    }
    if (!sigma_u.allFinite() || !sigma_u.isApprox(sigma_u.transpose(), 1e-12)) {
        throw std::invalid_argument("measurement-error covariance must be symmetric");
    }
    if (Eigen::LLT<Eigen::MatrixXd>(sigma_u).info() != Eigen::Success) {
        throw std::invalid_argument("measurement-error covariance is not positive definite");
    }
}

void EstimatorSpec::validate() const {
    if (kind == EstimatorKind::ModalEm) {
        if (!bandwidth || !(*bandwidth > 0.0)) {
            throw std::invalid_argument("the modal estimator requires a positive bandwidth");
        }
    } else if (bandwidth) {
        throw std::invalid_argument("a bandwidth is only meaningful for the modal estimator");
    }
}

EstimateOutcome run_estimator(const EstimatorSpec& spec, const RegressionModel& model, const Dataset& data,
                              const Eigen::VectorXd& theta0) {
    switch (spec.kind) {
        case EstimatorKind::ModalEm: {
            const ModalFit fit = modal_estimate(model, data, *spec.bandwidth, theta0, spec.em, spec.modal_start);
            return {fit.theta_hat, fit.diagnostics.converged, fit.diagnostics.iterations};
        }
        case EstimatorKind::Lse: {
            const OptimResult r = lse_fit(model, data, theta0, spec.gauss_newton);
            return {r.theta_hat, r.converged, r.iterations};
        }
        case EstimatorKind::Huber: {
            const HuberFit fit = huber_fit(model, data, theta0, spec.huber);
            return {fit.result.theta_hat, fit.result.converged, fit.result.iterations};
        }
        case EstimatorKind::Median: {
            const OptimResult r = median_fit(model, data, theta0, spec.nelder_mead);
            return {r.theta_hat, r.converged, r.iterations};
        }
    }
    throw std::logic_error("unhandled estimator kind");
}

namespace {

Eigen::VectorXd lse_start(const EstimatorSpec& spec, const RegressionModel& model, const Dataset& data) {
    return lse_fit(model, data, default_start(model, data), spec.gauss_newton).theta_hat;
}

}  // namespace

EstimateOutcome naive_estimate(const EstimatorSpec& spec, const RegressionModel& model, const Dataset& data) {
    spec.validate();
    data.validate(model);
    return run_estimator(spec, model, data, lse_start(spec, model, data));
}

RandomStream pseudo_stream(const SimexConfig& config, std::size_t lambda_index, std::size_t b) {
    return RandomStream(config.seed, {static_cast<std::uint64_t>(StreamPurpose::PseudoError), config.replication,
                                      static_cast<std::uint64_t>(lambda_index), static_cast<std::uint64_t>(b)});
}

Eigen::MatrixXd simulate_pseudo(const Eigen::MatrixXd& w, double lambda, const Eigen::MatrixXd& sigma_u,
                                RandomStream& stream) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
    if (sigma_u.rows() != w.cols() || sigma_u.cols() != w.cols()) {
        throw std::invalid_argument("measurement-error covariance does not match the covariate dimension");
    }
    const Eigen::LLT<Eigen::MatrixXd> chol(sigma_u);
    if (chol.info() != Eigen::Success) {
        throw std::invalid_argument("measurement-error covariance is not positive definite");
    }
    if (lambda == 0.0) return w;
    const Eigen::MatrixXd lower = chol.matrixL();
    const double scale = std::sqrt(lambda);
    const Eigen::Index p = w.cols();
    Eigen::MatrixXd out = w;
    Eigen::VectorXd z(p);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index k = 0; k < p; ++k) z[k] = stream.normal();
        out.row(i) += scale * (lower * z).transpose();
    }
    return out;
}

namespace {

EstimateOutcome estimate_at_lambda(const EstimatorSpec& spec, const RegressionModel& model, const Dataset& data,
                                   const SimexConfig& config, std::size_t lambda_index, std::size_t b,
                                   const Eigen::VectorXd& start) {
    RandomStream stream = pseudo_stream(config, lambda_index, b);
    const Dataset pseudo(data.y, simulate_pseudo(data.x, config.lambda_grid[lambda_index], config.sigma_u, stream));
    try {
        return run_estimator(spec, model, pseudo, start);
    } catch (const std::invalid_argument&) {
        // e.g. a non-finite start for this draw; counted as a non-converged fit
        return {start, false, 0};
    }
}

Eigen::VectorXd polynomial_fit(std::span<const double> lambdas, std::span<const double> values, int degree) {
    const auto m = static_cast<Eigen::Index>(lambdas.size());
    Eigen::MatrixXd design(m, degree + 1);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        double power = 1.0;
        for (int k = 0; k <= degree; ++k) {
            design(j, k) = power;
            power *= lambdas[static_cast<std::size_t>(j)];
        }
        rhs[j] = values[static_cast<std::size_t>(j)];
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < degree + 1) {
        throw std::invalid_argument("extrapolant fit is singular (too few distinct lambda values)");
    }
    return qr.solve(rhs);
}

/// Exact (a, c, d) through three points, or nullopt when the points admit no such curve.
std::optional<Eigen::Vector3d> rational_through(double l1, double v1, double l2, double v2, double l3, double v3) {
    const double num = (v1 - v2) * (l3 - l2);
    const double den = (v2 - v3) * (l2 - l1);
    if (den == 0.0) return std::nullopt;
    const double ratio = num / den;
    if (!std::isfinite(ratio) || ratio == 1.0) return std::nullopt;
    const double d = (l3 - ratio * l1) / (ratio - 1.0);
    const double c = (v1 - v2) * (d + l1) * (d + l2) / (l2 - l1);
    const double a = v1 - c / (d + l1);
    Eigen::Vector3d gamma(a, c, d);
    if (!gamma.allFinite()) return std::nullopt;
    return gamma;
}

constexpr double kPoleDistance = 1e-9;
constexpr double kPoleGuard = 1e-6;

}  // namespace

double evaluate_extrapolant(Extrapolant family, const Eigen::VectorXd& gamma, double lambda) {
    if (gamma.size() != parameter_count(family)) {
        throw std::invalid_argument("extrapolant parameter vector has the wrong length");
    }
    switch (family) {
        case Extrapolant::Linear: return gamma[0] + gamma[1] * lambda;
        case Extrapolant::Quadratic: return gamma[0] + gamma[1] * lambda + gamma[2] * lambda * lambda;
        case Extrapolant::Rational: {
            const double denom = gamma[2] + lambda;
            if (std::abs(denom) <= kPoleDistance) {
                throw std::domain_error("rational extrapolant evaluated at its pole");
            }
            return gamma[0] + gamma[1] / denom;
        }
    }
    throw std::logic_error("unhandled extrapolant");
}

ExtrapolantFitResult fit_extrapolant(std::span<const double> lambdas, std::span<const double> values,
                                     Extrapolant family) {
    if (lambdas.size() != values.size()) throw std::invalid_argument("lambda and value counts differ");
    const int d = parameter_count(family);
    if (static_cast<int>(lambdas.size()) < d) {
        throw std::invalid_argument("extrapolant needs at least " + std::to_string(d) + " lambda values");
    }
    for (std::size_t j = 0; j < lambdas.size(); ++j) {
        if (!std::isfinite(lambdas[j]) || !std::isfinite(values[j])) {
            throw std::invalid_argument("extrapolant fit received non-finite input");
        }
    }

    ExtrapolantFitResult out;
    if (family == Extrapolant::Linear || family == Extrapolant::Quadratic) {
        out.gamma = polynomial_fit(lambdas, values, d - 1);
    } else {
        const std::size_t m = lambdas.size();
        const std::size_t mid = (m - 1) / 2;
        const auto init = rational_through(lambdas[0], values[0], lambdas[mid], values[mid], lambdas[m - 1],
                                           values[m - 1]);
        auto admissible = [&](double dd) {
            for (const double l : lambdas) {
                if (std::abs(dd + l) <= kPoleDistance) return false;
            }
            return true;
        };
        Eigen::VectorXd start(3);
        if (init && admissible((*init)[2])) {
            start = *init;
        } else {
            double mean = 0.0;
            for (const double v : values) mean += v;
            start << mean / static_cast<double>(m), 1.0, 1.5;
        }
        auto residuals = [&](const Eigen::VectorXd& g, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
            if (!admissible(g[2])) return false;
            r.resize(static_cast<Eigen::Index>(m));
            jac.resize(static_cast<Eigen::Index>(m), 3);
            for (std::size_t j = 0; j < m; ++j) {
                const auto row = static_cast<Eigen::Index>(j);
                const double inv = 1.0 / (g[2] + lambdas[j]);
                r[row] = g[0] + g[1] * inv - values[j];
                jac(row, 0) = 1.0;
                jac(row, 1) = inv;
                jac(row, 2) = -g[1] * inv * inv;
            }
            return true;
        };
        GaussNewtonOptions opts;
        opts.grad_tol = 1e-14;
        opts.step_tol = 1e-14;
        const OptimResult fit = damped_gauss_newton(residuals, start, opts);
        out.gamma = fit.theta_hat;
        if (!out.gamma.allFinite()) throw std::runtime_error("rational extrapolant fit diverged");
        if (std::abs(out.gamma[2] - 1.0) <= kPoleGuard) {
            throw std::runtime_error("rational extrapolant has its pole at lambda = -1 (d = " +
                                     format_number(out.gamma[2]) + ")");
        }
    }
    for (std::size_t j = 0; j < lambdas.size(); ++j) {
        const double e = values[j] - evaluate_extrapolant(family, out.gamma, lambdas[j]);
        out.sse += e * e;
    }
    return out;
}

SimexResult simex_estimate(const EstimatorSpec& spec, const Dataset& data, const RegressionModel& model,
                           const SimexConfig& config) {
    spec.validate();
    data.validate(model);
    config.validate(model.dim_x());

    const std::size_t m = config.lambda_grid.size();
    const auto b_count = static_cast<std::size_t>(config.B);
    const int q = model.dim_theta();

    LambdaTrace trace;
    trace.lambdas = config.lambda_grid;
    trace.theta_by_lambda = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), q);
    trace.per_b.assign(m, std::vector<EstimateOutcome>(b_count));
    trace.dropped_count.assign(m, 0);

    Eigen::VectorXd start = lse_start(spec, model, data);
    for (std::size_t j = 0; j < m; ++j) {
        auto& fits = trace.per_b[j];
        parallel_for(b_count, config.threads,
                     [&](std::size_t b) { fits[b] = estimate_at_lambda(spec, model, data, config, j, b, start); });

        Eigen::VectorXd sum = Eigen::VectorXd::Zero(q);
        int kept = 0;
        for (const auto& fit : fits) {
            if (fit.converged && fit.theta.allFinite()) {
                sum += fit.theta;
                ++kept;
            }
        }
        trace.dropped_count[j] = config.B - kept;
        if (5 * trace.dropped_count[j] > config.B) trace.quality_warning = true;
        if (kept == 0) {
            throw SimexError("no converged fits at lambda = " + format_number(config.lambda_grid[j]),
                             std::move(trace));
        }
        trace.theta_by_lambda.row(static_cast<Eigen::Index>(j)) = (sum / kept).transpose();
        start = trace.theta_by_lambda.row(static_cast<Eigen::Index>(j)).transpose();
    }

    ExtrapolationFit fit;
    fit.family = config.extrapolant;
    fit.gamma_hat.resize(q, parameter_count(config.extrapolant));
    fit.theta_simex.resize(q);
    try {
        for (int k = 0; k < q; ++k) {
            const Eigen::VectorXd column = trace.theta_by_lambda.col(k);
            const auto component = fit_extrapolant(config.lambda_grid, {column.data(), m}, config.extrapolant);
            fit.gamma_hat.row(k) = component.gamma.transpose();
            fit.residual_sse += component.sse;
            fit.theta_simex[k] = evaluate_extrapolant(config.extrapolant, component.gamma, -1.0);
        }
    } catch (const std::exception& e) {
        throw SimexError(std::string("extrapolation failed: ") + e.what(), std::move(trace));
    }

    SimexResult result;
    result.theta_simex = fit.theta_simex;
    result.quality_warning = trace.quality_warning;
    result.trace = std::move(trace);
    result.fit = std::move(fit);
    return result;
}

bool naive_equivalence_check(const EstimatorSpec& spec, const Dataset& data, const RegressionModel& model) {
    const EstimateOutcome naive = naive_estimate(spec, model, data);
    SimexConfig config;
    config.lambda_grid = {0.0};
    config.B = 1;
    config.sigma_u = Eigen::MatrixXd::Identity(model.dim_x(), model.dim_x());
    const EstimateOutcome at_zero =
        estimate_at_lambda(spec, model, data, config, 0, 0, lse_start(spec, model, data));
    const double tol = spec.kind == EstimatorKind::Median ? 1e-6 : 1e-10;
    return (at_zero.theta - naive.theta).lpNorm<Eigen::Infinity>() <= tol;
}

void write_trace_csv(std::ostream& out, const LambdaTrace& trace) {
    const auto q = trace.theta_by_lambda.cols();
    out << "lambda,b,converged";
    for (Eigen::Index k = 1; k <= q; ++k) out << ",theta_" << k;
    out << ",em_iterations\n";
    for (std::size_t j = 0; j < trace.per_b.size(); ++j) {
        for (std::size_t b = 0; b < trace.per_b[j].size(); ++b) {
            const auto& fit = trace.per_b[j][b];
            out << format_number(trace.lambdas[j]) << ',' << b + 1 << ',' << (fit.converged ? 1 : 0);
            for (Eigen::Index k = 0; k < q; ++k) out << ',' << format_number(fit.theta[k]);
            out << ',' << fit.iterations << '\n';
        }
    }
}

}  // namespace modesimex
