#pragma once

#include "modesimex/rng.hpp"
#include "modesimex/simex.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace modesimex {

struct MixtureComponent {
    double weight;
    double mean;
    double sd;
};

/// Finite normal mixture for the model error.
struct ErrorMixture {
    std::vector<MixtureComponent> components;

    /// 0.5 N(-1, 2.5^2) + 0.5 N(1, 0.5^2)
    static ErrorMixture study_default();

    // Reference functionals of the default mixture (stored, not recomputed).
    static constexpr double kDefaultMean = 0.0;
    static constexpr double kDefaultMode = 1.0;
    static constexpr double kDefaultMedian = 0.67;

    void validate() const;
};

[[nodiscard]] Eigen::VectorXd sample_mixture(const ErrorMixture& mix, int n, RandomStream& stream);

/// The six estimation methods, in table order.
enum class Method { NMean, SMean, SHuber, SMedian, SModal, NModal };

inline constexpr std::array<Method, 6> kAllMethods{Method::NMean,   Method::SMean,  Method::SHuber,
                                                   Method::SMedian, Method::SModal, Method::NModal};

[[nodiscard]] std::string_view to_string(Method method) noexcept;
/// Accepts the table names case-insensitively ("S-Modal", "s-modal").
[[nodiscard]] Method parse_method(std::string_view name);
[[nodiscard]] bool is_simex(Method method) noexcept;
[[nodiscard]] EstimatorKind estimator_of(Method method) noexcept;

struct Truth {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
};

/// One cell of the simulation design: Y = alpha exp(beta X) + gamma exp(beta X) eps, W = X + U.
struct Scenario {
    int n = 200;
    double sigma_u2 = 0.01;
    double bandwidth_c = 0.8;
    int reps = 100;
    Truth truth{};
    ErrorMixture mixture = ErrorMixture::study_default();

    void validate() const;
    /// (alpha-like, beta) target of a method: mean, median or mode functional.
    [[nodiscard]] Eigen::Vector2d target(Method method) const;
    [[nodiscard]] double bandwidth() const;
};

struct Replication {
    Eigen::VectorXd y;
    Eigen::VectorXd x_true;
    Eigen::VectorXd w;
};

[[nodiscard]] Replication generate_replication(const Scenario& scenario, int rep_index, std::uint64_t master_seed);

struct ParameterSummary {
    double mean = 0.0;
    double bias = 0.0;
    double mse = 0.0;
};

/// Mean, bias and population-form MSE of the estimates against target.
[[nodiscard]] ParameterSummary summarize(std::span<const double> estimates, double target);

struct MethodResult {
    Method method = Method::NMean;
    Eigen::Vector2d target = Eigen::Vector2d::Zero();
    /// Per replication, empty when the method failed on that replication.
    std::vector<std::optional<Eigen::Vector2d>> estimates;
    std::array<ParameterSummary, 2> stats{};
    int failed = 0;
};

struct ScenarioResult {
    Scenario scenario;
    std::vector<MethodResult> methods;

    [[nodiscard]] const MethodResult* find(Method method) const noexcept;
};

struct StudyOptions {
    /// lambda grid, B, extrapolant and seed; sigma_u comes from the scenario.
    SimexConfig simex{};
    int threads = 1;
    std::function<void(int completed, int total)> progress;
};

/// Runs every requested method on the same generated data for each replication.
[[nodiscard]] ScenarioResult run_scenario(const Scenario& scenario, std::span<const Method> methods,
                                          const StudyOptions& options);

enum class TableFormat { Csv, Text };

[[nodiscard]] TableFormat parse_table_format(std::string_view name);

void emit_table(const ScenarioResult& result, TableFormat format, std::ostream& out);

/// Contents of a scenario file.
struct ScenarioSpec {
    Scenario scenario;
    int lambda_points = 10;
    double lambda_max = 2.0;
    int B = 50;
    Extrapolant extrapolant = Extrapolant::Quadratic;
    std::uint64_t seed = 20240917;
    std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};

    [[nodiscard]] SimexConfig simex_config() const;
};

/// Parses `key = value` lines (blank lines and '#' comments ignored). Keys: n, sigma_u2, bandwidth_c,
/// reps, lambda_points, lambda_max, B, extrapolant, seed, methods.
[[nodiscard]] ScenarioSpec parse_scenario(std::istream& in);

/// Applies one key to a spec; shared by the file parser and CLI overrides.
void apply_scenario_key(ScenarioSpec& spec, std::string_view key, std::string_view value);

}  // namespace modesimex
