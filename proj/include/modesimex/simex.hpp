#pragma once

#include "modesimex/estimators.hpp"
#include "modesimex/model.hpp"
#include "modesimex/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace modesimex {

enum class Extrapolant { Linear, Quadratic, Rational };

[[nodiscard]] int parameter_count(Extrapolant family) noexcept;
[[nodiscard]] std::string_view to_string(Extrapolant family) noexcept;
[[nodiscard]] Extrapolant parse_extrapolant(std::string_view name);

enum class EstimatorKind { ModalEm, Lse, Huber, Median };

[[nodiscard]] std::string_view to_string(EstimatorKind kind) noexcept;

/// `points` equally spaced values from 0 to `max` inclusive.
[[nodiscard]] std::vector<double> equally_spaced_grid(int points, double max);

struct SimexConfig {
    std::vector<double> lambda_grid = equally_spaced_grid(10, 2.0);
    int B = 50;
    /// Known measurement-error covariance (p x p).
    Eigen::MatrixXd sigma_u;
    Extrapolant extrapolant = Extrapolant::Quadratic;
    std::uint64_t seed = 0;
    /// Extra key component so independent datasets sharing a seed draw different pseudo-errors.
    std::uint64_t replication = 0;
    int threads = 1;

    /// Throws std::invalid_argument on any violated invariant.
    void validate(int p) const;
};

/// Which per-dataset estimator to run, plus its tuning.
struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::Lse;
    /// Kernel bandwidth; required for ModalEm only.
    std::optional<double> bandwidth;
    EmOptions em{};
    ModalStartOptions modal_start{};
    HuberOptions huber{};
    GaussNewtonOptions gauss_newton{};
    NelderMeadOptions nelder_mead{};

    void validate() const;
};

struct EstimateOutcome {
    Eigen::VectorXd theta;
    bool converged = false;
    int iterations = 0;
};

[[nodiscard]] EstimateOutcome run_estimator(const EstimatorSpec& spec, const RegressionModel& model,
                                            const Dataset& data, const Eigen::VectorXd& theta0);

/// The estimator applied directly to (y, w), started from the least-squares fit.
[[nodiscard]] EstimateOutcome naive_estimate(const EstimatorSpec& spec, const RegressionModel& model,
                                             const Dataset& data);

struct LambdaTrace {
    std::vector<double> lambdas;
    /// Row j is the average of the converged per-b estimates at lambda_j.
    Eigen::MatrixXd theta_by_lambda;
    /// per_b[j][b]
    std::vector<std::vector<EstimateOutcome>> per_b;
    std::vector<int> dropped_count;
    bool quality_warning = false;

    [[nodiscard]] bool per_b_converged(std::size_t j, std::size_t b) const { return per_b[j][b].converged; }
};

struct ExtrapolationFit {
    Extrapolant family = Extrapolant::Quadratic;
    /// Row k holds the fitted parameters for component k of theta.
    Eigen::MatrixXd gamma_hat;
    double residual_sse = 0.0;
    Eigen::VectorXd theta_simex;
};

struct SimexResult {
    Eigen::VectorXd theta_simex;
    LambdaTrace trace;
    ExtrapolationFit fit;
    bool quality_warning = false;
};

/// Raised when the extrapolation step cannot be completed; carries the lambda trace.
class SimexError : public std::runtime_error {
public:
    SimexError(const std::string& what, LambdaTrace trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    [[nodiscard]] const LambdaTrace& trace() const noexcept { return trace_; }

private:
    LambdaTrace trace_;
};

/// Pseudo-error stream for grid index j and remeasurement b.
[[nodiscard]] RandomStream pseudo_stream(const SimexConfig& config, std::size_t lambda_index, std::size_t b);

/// W + sqrt(lambda) V with V rows i.i.d. N_p(0, Sigma_u). lambda = 0 returns w without drawing.
[[nodiscard]] Eigen::MatrixXd simulate_pseudo(const Eigen::MatrixXd& w, double lambda,
                                              const Eigen::MatrixXd& sigma_u, RandomStream& stream);

/// Full simulation / estimation / extrapolation pipeline.
[[nodiscard]] SimexResult simex_estimate(const EstimatorSpec& spec, const Dataset& data,
                                         const RegressionModel& model, const SimexConfig& config);

struct ExtrapolantFitResult {
    Eigen::VectorXd gamma;
    double sse = 0.0;
};

[[nodiscard]] ExtrapolantFitResult fit_extrapolant(std::span<const double> lambdas, std::span<const double> values,
                                                   Extrapolant family);

/// Linear a + b l, Quadratic a + b l + c l^2, Rational a + c / (d + l).
[[nodiscard]] double evaluate_extrapolant(Extrapolant family, const Eigen::VectorXd& gamma, double lambda);

/// Checks that the engine's lambda = 0 estimate equals the naive estimate on W.
[[nodiscard]] bool naive_equivalence_check(const EstimatorSpec& spec, const Dataset& data,
                                           const RegressionModel& model);

/// CSV with columns lambda,b,converged,theta_1..theta_q,em_iterations.
void write_trace_csv(std::ostream& out, const LambdaTrace& trace);

}  // namespace modesimex
