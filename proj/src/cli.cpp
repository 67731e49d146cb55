#include "modesimex/cli.hpp"

#include "modesimex/io.hpp"
#include "modesimex/kernel.hpp"
#include "modesimex/simstudy.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#ifndef MODESIMEX_SCENARIO_DIR
#define MODESIMEX_SCENARIO_DIR "scenarios"
#endif

namespace modesimex {

OracleOutcome analytic_extrapolation_check(Extrapolant family) {
    constexpr double theta0 = 1.0;
    constexpr double sx2 = 1.0;
    constexpr double su2 = 0.25;
    const std::vector<double> grid = equally_spaced_grid(10, 2.0);
    std::vector<double> values;
    values.reserve(grid.size());
    for (const double l : grid) values.push_back(theta0 * sx2 / (sx2 + (1.0 + l) * su2));

    OracleOutcome outcome;
    outcome.name = "analytic extrapolation (" + std::string(to_string(family)) + ")";
    outcome.expected = theta0;
    outcome.tolerance = 1e-6;
    const auto fit = fit_extrapolant(grid, values, family);
    outcome.observed = evaluate_extrapolant(family, fit.gamma, -1.0);
    outcome.passed = std::abs(outcome.observed - theta0) < outcome.tolerance;
    return outcome;
}

OracleOutcome linear_monte_carlo_check(const LinearOracleOptions& opts) {
    constexpr double theta0 = 1.0;
    constexpr double su2 = 0.25;
    RandomStream x_stream(opts.seed, {static_cast<std::uint64_t>(StreamPurpose::Covariate), 0});
    RandomStream e_stream(opts.seed, {static_cast<std::uint64_t>(StreamPurpose::ModelError), 0});
    RandomStream u_stream(opts.seed, {static_cast<std::uint64_t>(StreamPurpose::MeasurementError), 0});
    Eigen::VectorXd y(opts.n);
    Eigen::MatrixXd w(opts.n, 1);
    for (int i = 0; i < opts.n; ++i) {
        const double x = x_stream.normal();
        y[i] = theta0 * x + e_stream.normal();
        w(i, 0) = x + std::sqrt(su2) * u_stream.normal();
    }

    EstimatorSpec spec;
    spec.kind = EstimatorKind::ModalEm;
    spec.bandwidth = Bandwidth::from_rule(opts.bandwidth_c, opts.n).h();
    SimexConfig config;
    config.B = opts.B;
    config.sigma_u = Eigen::MatrixXd::Constant(1, 1, su2);
    config.extrapolant = Extrapolant::Rational;
    config.seed = opts.seed;
    config.threads = opts.threads;

    OracleOutcome outcome;
    outcome.name = "linear-normal Monte Carlo (S-Modal, rational)";
    outcome.expected = theta0;
    outcome.tolerance = 0.05;
    const SimexResult result = simex_estimate(spec, Dataset(y, w), RegressionModel::linear(1), config);
    outcome.observed = result.theta_simex[0];
    outcome.passed = std::abs(outcome.observed - theta0) < outcome.tolerance;
    return outcome;
}

namespace {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2, kParseError = 3, kCheckFailed = 4 };

struct CliError {
    int code;
    std::string category;
    std::string message;
};

void report_error(std::ostream& err, const CliError& e) {
    err << "error: " << e.category << ": " << e.message << '\n';
}

std::filesystem::path resolve_scenario(const std::string& name) {
    std::filesystem::path path(name);
    if (std::filesystem::exists(path)) return path;
    for (const auto& candidate : {std::filesystem::path(MODESIMEX_SCENARIO_DIR) / name,
                                  std::filesystem::path(MODESIMEX_SCENARIO_DIR) / (name + ".txt")}) {
        if (std::filesystem::exists(candidate)) return candidate;
    }
    throw CliError{kUsageError, "config", "scenario file not found: " + name};
}

/// Writes to the file if a path is given, otherwise to `fallback`.
template <class Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn&& fn) {
    if (path.empty() || path == "-") {
        fn(fallback);
        return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw CliError{kRuntimeError, "io", "cannot open output file " + path};
    fn(file);
    if (!file) throw CliError{kRuntimeError, "io", "failed writing " + path};
}

struct FitArgs {
    std::string input;
    std::optional<double> sigma_u2;
    std::string sigma_u_file;
    std::string method = "S-Modal";
    std::string model = "exp";
    double bandwidth_c = 0.8;
    std::optional<double> bandwidth;
    int lambda_points = 10;
    double lambda_max = 2.0;
    int B = 50;
    std::string extrapolant = "quadratic";
    std::uint64_t seed = 20240917;
    int threads = 1;
    std::string output;
    std::string trace;
};

struct SimulateArgs {
    std::string scenario;
    std::optional<int> n;
    std::optional<double> sigma_u2;
    std::optional<double> bandwidth_c;
    std::optional<int> reps;
    std::optional<int> lambda_points;
    std::optional<double> lambda_max;
    std::optional<int> B;
    std::optional<std::string> extrapolant;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> methods;
    int threads = 1;
    std::string output;
    std::string format = "csv";
};

struct OracleArgs {
    std::string extrapolant = "rational";
    std::uint64_t seed = 20240917;
    int threads = 1;
    bool skip_monte_carlo = false;
};

Eigen::MatrixXd read_sigma_u(const FitArgs& args, int p) {
    if (!args.sigma_u_file.empty()) {
        std::ifstream in(args.sigma_u_file);
        if (!in) throw CliError{kUsageError, "config", "cannot open covariance file " + args.sigma_u_file};
        CsvTable table;
        try {
            table = read_numeric_csv(in, false);
        } catch (const ParseError& e) {
            throw CliError{kParseError, "parse", args.sigma_u_file + ": " + e.what()};
        }
        if (table.values.rows() != p || table.values.cols() != p) {
            throw CliError{kUsageError, "config",
                           "covariance file must hold a " + std::to_string(p) + " x " + std::to_string(p) + " matrix"};
        }
        return table.values;
    }
    if (args.sigma_u2) {
        if (p != 1) throw CliError{kUsageError, "config", "--sigma-u2 needs a single covariate; use --sigma-u-file"};
        return Eigen::MatrixXd::Constant(1, 1, *args.sigma_u2);
    }
    throw CliError{kUsageError, "config", "measurement-error variance is required (--sigma-u2 or --sigma-u-file)"};
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) out << (k ? "," : "") << format_number(v[k]);
}

int cmd_fit(const FitArgs& args, std::ostream& out, std::ostream& err) {
    std::ifstream in(args.input);
    if (!in) throw CliError{kUsageError, "config", "cannot open input file " + args.input};
    CsvTable table;
    try {
        table = read_numeric_csv(in);
    } catch (const ParseError& e) {
        throw CliError{kParseError, "parse", args.input + ": " + e.what()};
    }
    if (table.header.size() < 2 || table.header[0] != "y" || table.header[1].rfind("w", 0) != 0) {
        throw CliError{kParseError, "parse", args.input + ": line 1: header must be y,w or y,w1,...,wp"};
    }
    const auto p = static_cast<int>(table.header.size()) - 1;
    const RegressionModel model = [&] {
        try {
            return RegressionModel::from_name(args.model, p);
        } catch (const std::invalid_argument& e) {
            throw CliError{kUsageError, "config", e.what()};
        }
    }();
    if (model.dim_x() != p) {
        throw CliError{kUsageError, "config",
                       "model '" + args.model + "' expects " + std::to_string(model.dim_x()) +
                           " covariate column(s), input has " + std::to_string(p)};
    }
    const Dataset data(table.values.col(0), table.values.rightCols(p));

    Method method;
    SimexConfig config;
    EstimatorSpec spec;
    try {
        method = parse_method(args.method);
        config.lambda_grid = equally_spaced_grid(args.lambda_points, args.lambda_max);
        config.B = args.B;
        config.extrapolant = parse_extrapolant(args.extrapolant);
        config.seed = args.seed;
        config.threads = args.threads;
        config.sigma_u = read_sigma_u(args, p);
        config.validate(p);
        data.validate(model);
        spec.kind = estimator_of(method);
        if (spec.kind == EstimatorKind::ModalEm) {
            spec.bandwidth = args.bandwidth ? *args.bandwidth
                                            : Bandwidth::from_rule(args.bandwidth_c, static_cast<int>(data.n())).h();
        }
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw CliError{kUsageError, "config", e.what()};
    }

    std::ostringstream report;
    report << "method," << to_string(method) << '\n';
    report << "model," << model.name() << '\n';
    report << "n," << data.n() << '\n';
    if (spec.bandwidth) report << "bandwidth," << format_number(*spec.bandwidth) << '\n';

    if (!is_simex(method)) {
        const EstimateOutcome naive = naive_estimate(spec, model, data);
        report << "theta,";
        write_vector(report, naive.theta);
        report << "\nconverged," << (naive.converged ? "true" : "false") << '\n';
        report << "iterations," << naive.iterations << '\n';
    } else {
        SimexResult result;
        try {
            result = simex_estimate(spec, data, model, config);
        } catch (const SimexError& e) {
            if (!args.trace.empty()) with_output(args.trace, out, [&](std::ostream& s) { write_trace_csv(s, e.trace()); });
            throw CliError{kRuntimeError, "simex", e.what()};
        }
        report << "extrapolant," << to_string(config.extrapolant) << '\n';
        report << "B," << config.B << '\n';
        report << "theta_simex,";
        write_vector(report, result.theta_simex);
        report << '\n';
        for (Eigen::Index k = 0; k < result.fit.gamma_hat.rows(); ++k) {
            report << "gamma_" << k + 1 << ',';
            write_vector(report, result.fit.gamma_hat.row(k).transpose());
            report << '\n';
        }
        report << "extrapolation_sse," << format_number(result.fit.residual_sse) << '\n';
        report << "quality_warning," << (result.quality_warning ? "true" : "false") << '\n';
        report << "lambda_trace\nlambda";
        for (int k = 1; k <= model.dim_theta(); ++k) report << ",theta_" << k;
        report << ",dropped\n";
        for (std::size_t j = 0; j < result.trace.lambdas.size(); ++j) {
            report << format_number(result.trace.lambdas[j]) << ',';
            write_vector(report, result.trace.theta_by_lambda.row(static_cast<Eigen::Index>(j)).transpose());
            report << ',' << result.trace.dropped_count[j] << '\n';
        }
        if (result.quality_warning) err << "warning: more than 20% of fits did not converge at some lambda\n";
        if (!args.trace.empty()) {
            with_output(args.trace, out, [&](std::ostream& s) { write_trace_csv(s, result.trace); });
        }
    }
    with_output(args.output, out, [&](std::ostream& s) { s << report.str(); });
    return kOk;
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
    ScenarioSpec spec;
    try {
        if (!args.scenario.empty()) {
            const auto path = resolve_scenario(args.scenario);
            std::ifstream in(path);
            if (!in) throw CliError{kUsageError, "config", "cannot open scenario file " + path.string()};
            try {
                spec = parse_scenario(in);
            } catch (const ParseError& e) {
                throw CliError{kParseError, "parse", path.string() + ": " + e.what()};
            }
        } else if (!args.n || !args.sigma_u2 || !args.reps) {
            throw CliError{kUsageError, "config", "simulate needs --scenario or at least --n, --sigma-u2 and --reps"};
        }
        auto apply = [&](std::string_view key, const auto& value) {
            if (!value) return;
            std::ostringstream text;
            text << *value;
            apply_scenario_key(spec, key, text.str());
        };
        apply("n", args.n);
        apply("sigma_u2", args.sigma_u2 ? std::optional<std::string>(format_number(*args.sigma_u2)) : std::nullopt);
        apply("bandwidth_c",
              args.bandwidth_c ? std::optional<std::string>(format_number(*args.bandwidth_c)) : std::nullopt);
        apply("reps", args.reps);
        apply("lambda_points", args.lambda_points);
        apply("lambda_max", args.lambda_max ? std::optional<std::string>(format_number(*args.lambda_max)) : std::nullopt);
        apply("B", args.B);
        apply("extrapolant", args.extrapolant);
        apply("seed", args.seed);
        apply("methods", args.methods);
        spec.scenario.validate();
        spec.simex_config().validate(1);
    } catch (const std::invalid_argument& e) {
        throw CliError{kUsageError, "config", e.what()};
    }
    TableFormat format;
    try {
        format = parse_table_format(args.format);
    } catch (const std::invalid_argument& e) {
        throw CliError{kUsageError, "config", e.what()};
    }

    StudyOptions options;
    options.simex = spec.simex_config();
    options.threads = args.threads;
    options.progress = [&err](int done, int total) {
        err << "replications completed: " << done << '/' << total << '\n';
    };
    const ScenarioResult result = run_scenario(spec.scenario, spec.methods, options);
    with_output(args.output, out, [&](std::ostream& s) { emit_table(result, format, s); });
    return kOk;
}

int cmd_oracle_check(const OracleArgs& args, std::ostream& out, std::ostream& err) {
    Extrapolant family;
    try {
        family = parse_extrapolant(args.extrapolant);
    } catch (const std::invalid_argument& e) {
        throw CliError{kUsageError, "config", e.what()};
    }
    std::vector<OracleOutcome> outcomes{analytic_extrapolation_check(family)};
    if (!args.skip_monte_carlo) {
        LinearOracleOptions opts;
        opts.seed = args.seed;
        opts.threads = args.threads;
        outcomes.push_back(linear_monte_carlo_check(opts));
    }
    bool all_passed = true;
    for (const auto& o : outcomes) {
        out << (o.passed ? "PASS " : "FAIL ") << o.name << ": observed " << format_number(o.observed)
            << ", expected " << format_number(o.expected) << " +/- " << format_number(o.tolerance) << '\n';
        if (!o.passed) {
            all_passed = false;
            err << "error: check: " << o.name << " observed " << format_number(o.observed) << '\n';
        }
    }
    return all_passed ? kOk : kCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"SIMEX estimation for parametric modal regression with measurement error", "modesimex"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a CSV file with columns y,w[1..p]");
    fit_cmd->add_option("--input,-i", fit.input, "Input CSV")->required();
    fit_cmd->add_option("--sigma-u2", fit.sigma_u2, "Measurement-error variance (single covariate)");
    fit_cmd->add_option("--sigma-u-file", fit.sigma_u_file, "CSV holding the p x p measurement-error covariance");
    fit_cmd->add_option("--method", fit.method, "N-Mean, S-Mean, S-Huber, S-Median, S-Modal or N-Modal")
        ->capture_default_str();
    fit_cmd->add_option("--model", fit.model, "exp or linear")->capture_default_str();
    fit_cmd->add_option("--bandwidth-c", fit.bandwidth_c, "Bandwidth constant c in h = c n^(-1/7)")
        ->capture_default_str();
    fit_cmd->add_option("--bandwidth", fit.bandwidth, "Explicit bandwidth h (overrides --bandwidth-c)");
    fit_cmd->add_option("--lambda-points", fit.lambda_points)->capture_default_str();
    fit_cmd->add_option("--lambda-max", fit.lambda_max)->capture_default_str();
    fit_cmd->add_option("--B", fit.B, "Remeasurements per lambda")->capture_default_str();
    fit_cmd->add_option("--extrapolant", fit.extrapolant, "linear, quadratic or rational")->capture_default_str();
    fit_cmd->add_option("--seed", fit.seed)->capture_default_str();
    fit_cmd->add_option("--threads", fit.threads)->capture_default_str();
    fit_cmd->add_option("--output,-o", fit.output, "Report path (default: standard output)");
    fit_cmd->add_option("--trace", fit.trace, "Per-(lambda, b) trace CSV path");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo scenario");
    sim_cmd->add_option("--scenario,-s", sim.scenario, "Scenario file or bundled name (table1 .. table6)");
    sim_cmd->add_option("--n", sim.n);
    sim_cmd->add_option("--sigma-u2", sim.sigma_u2);
    sim_cmd->add_option("--bandwidth-c", sim.bandwidth_c);
    sim_cmd->add_option("--reps", sim.reps);
    sim_cmd->add_option("--lambda-points", sim.lambda_points);
    sim_cmd->add_option("--lambda-max", sim.lambda_max);
    sim_cmd->add_option("--B", sim.B);
    sim_cmd->add_option("--extrapolant", sim.extrapolant);
    sim_cmd->add_option("--seed", sim.seed);
    sim_cmd->add_option("--methods", sim.methods, "Comma-separated method names");
    sim_cmd->add_option("--threads", sim.threads)->capture_default_str();
    sim_cmd->add_option("--output,-o", sim.output, "Table path (default: standard output)");
    sim_cmd->add_option("--format", sim.format, "csv or text")->capture_default_str();

    OracleArgs oracle;
    auto* oracle_cmd = app.add_subcommand("oracle-check", "Run the built-in extrapolation oracles");
    oracle_cmd->add_option("--extrapolant", oracle.extrapolant, "Family for the analytic check")
        ->capture_default_str();
    oracle_cmd->add_option("--seed", oracle.seed)->capture_default_str();
    oracle_cmd->add_option("--threads", oracle.threads)->capture_default_str();
    oracle_cmd->add_flag("--skip-monte-carlo", oracle.skip_monte_carlo, "Run only the analytic check");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        report_error(err, {kUsageError, "usage", e.what()});
        return kUsageError;
    }

    try {
        for (const int threads : {fit.threads, sim.threads, oracle.threads}) {
            if (threads < 1) throw CliError{kUsageError, "config", "--threads must be at least 1"};
        }
        if (fit_cmd->parsed()) return cmd_fit(fit, out, err);
        if (sim_cmd->parsed()) return cmd_simulate(sim, out, err);
        return cmd_oracle_check(oracle, out, err);
    } catch (const CliError& e) {
        report_error(err, e);
        return e.code;
    } catch (const std::exception& e) {
        report_error(err, {kRuntimeError, "runtime", e.what()});
        return kRuntimeError;
    }
}

}  // namespace modesimex
