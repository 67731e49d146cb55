#include "modesimex/simstudy.hpp"

#include "modesimex/io.hpp"
#include "modesimex/kernel.hpp"
#include "modesimex/parallel.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>

namespace modesimex {

ErrorMixture ErrorMixture::study_default() { return {{{0.5, -1.0, 2.5}, {0.5, 1.0, 0.5}}}; }

void ErrorMixture::validate() const {
    if (components.empty()) throw std::invalid_argument("mixture has no components");
    double total = 0.0;
    for (const auto& c : components) {
        if (!(c.weight > 0.0)) throw std::invalid_argument("mixture weights must be positive");
        if (!(c.sd > 0.0)) throw std::invalid_argument("mixture standard deviations must be positive");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture weights must sum to 1");
}

Eigen::VectorXd sample_mixture(const ErrorMixture& mix, int n, RandomStream& stream) {
    mix.validate();
    if (n < 1) throw std::invalid_argument("sample_mixture needs n >= 1");
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) {
        const double u = stream.uniform();
        std::size_t k = 0;
        double cumulative = mix.components[0].weight;
        while (u >= cumulative && k + 1 < mix.components.size()) cumulative += mix.components[++k].weight;
        const auto& c = mix.components[k];
        out[i] = c.mean + c.sd * stream.normal();
    }
    return out;
}

std::string_view to_string(Method method) noexcept {
    switch (method) {
        case Method::NMean: return "N-Mean";
        case Method::SMean: return "S-Mean";
        case Method::SHuber: return "S-Huber";
        case Method::SMedian: return "S-Median";
        case Method::SModal: return "S-Modal";
        case Method::NModal: return "N-Modal";
    }
    return "unknown";
}

namespace {

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

Method parse_method(std::string_view name) {
    const std::string key = lowercase(trim(name));
    for (const Method m : kAllMethods) {
        if (lowercase(to_string(m)) == key) return m;
    }
    throw std::invalid_argument("unknown method '" + std::string(name) +
                                "' (expected N-Mean, S-Mean, S-Huber, S-Median, S-Modal or N-Modal)");
}

bool is_simex(Method method) noexcept { return method != Method::NMean && method != Method::NModal; }

EstimatorKind estimator_of(Method method) noexcept {
    switch (method) {
        case Method::NMean:
        case Method::SMean: return EstimatorKind::Lse;
        case Method::SHuber: return EstimatorKind::Huber;
        case Method::SMedian: return EstimatorKind::Median;
        case Method::SModal:
        case Method::NModal: return EstimatorKind::ModalEm;
    }
    return EstimatorKind::Lse;
}

void Scenario::validate() const {
    if (n < 3) throw std::invalid_argument("scenario n must be at least 3");
    if (!(sigma_u2 > 0.0)) throw std::invalid_argument("scenario sigma_u2 must be positive");
    if (!(bandwidth_c > 0.0)) throw std::invalid_argument("scenario bandwidth_c must be positive");
    if (reps < 1) throw std::invalid_argument("scenario reps must be positive");
    mixture.validate();
}

Eigen::Vector2d Scenario::target(Method method) const {
    switch (method) {
        case Method::SMedian: return {truth.alpha + ErrorMixture::kDefaultMedian * truth.gamma, truth.beta};
        case Method::SModal:
        case Method::NModal: return {truth.alpha + ErrorMixture::kDefaultMode * truth.gamma, truth.beta};
        default: return {truth.alpha, truth.beta};
    }
}

double Scenario::bandwidth() const { return Bandwidth::from_rule(bandwidth_c, n).h(); }

Replication generate_replication(const Scenario& scenario, int rep_index, std::uint64_t master_seed) {
    scenario.validate();
    const auto rep = static_cast<std::uint64_t>(rep_index);
    RandomStream x_stream(master_seed, {static_cast<std::uint64_t>(StreamPurpose::Covariate), rep});
    RandomStream e_stream(master_seed, {static_cast<std::uint64_t>(StreamPurpose::ModelError), rep});
    RandomStream u_stream(master_seed, {static_cast<std::uint64_t>(StreamPurpose::MeasurementError), rep});

    const int n = scenario.n;
    Replication out;
    out.x_true.resize(n);
    for (int i = 0; i < n; ++i) out.x_true[i] = x_stream.uniform();
    const Eigen::VectorXd eps = sample_mixture(scenario.mixture, n, e_stream);
    const auto& t = scenario.truth;
    const Eigen::ArrayXd growth = (t.beta * out.x_true.array()).exp();
    out.y = (t.alpha * growth + t.gamma * growth * eps.array()).matrix();
    const double sd_u = std::sqrt(scenario.sigma_u2);
    out.w.resize(n);
    for (int i = 0; i < n; ++i) out.w[i] = out.x_true[i] + sd_u * u_stream.normal();
    return out;
}

ParameterSummary summarize(std::span<const double> estimates, double target) {
    if (estimates.empty()) throw std::invalid_argument("summarize needs at least one estimate");
    double sum = 0.0;
    double sq = 0.0;
    for (const double e : estimates) {
        sum += e;
        sq += (e - target) * (e - target);
    }
    const auto count = static_cast<double>(estimates.size());
    ParameterSummary s;
    s.mean = sum / count;
    s.bias = s.mean - target;
    s.mse = sq / count;
    return s;
}

const MethodResult* ScenarioResult::find(Method method) const noexcept {
    for (const auto& m : methods) {
        if (m.method == method) return &m;
    }
    return nullptr;
}

namespace {

std::optional<Eigen::Vector2d> run_method(Method method, const Scenario& scenario, const Dataset& data,
                                          const RegressionModel& model, const SimexConfig& simex) {
    EstimatorSpec spec;
    spec.kind = estimator_of(method);
    if (spec.kind == EstimatorKind::ModalEm) spec.bandwidth = scenario.bandwidth();
    Eigen::VectorXd theta;
    try {
        if (is_simex(method)) {
            const SimexResult r = simex_estimate(spec, data, model, simex);
            theta = r.theta_simex;
        } else {
            const EstimateOutcome r = naive_estimate(spec, model, data);
            if (!r.converged) return std::nullopt;
            theta = r.theta;
        }
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (!theta.allFinite()) return std::nullopt;
    return Eigen::Vector2d(theta[0], theta[1]);
}

}  // namespace

ScenarioResult run_scenario(const Scenario& scenario, std::span<const Method> methods,
                            const StudyOptions& options) {
    scenario.validate();
    if (methods.empty()) throw std::invalid_argument("run_scenario needs at least one method");
    SimexConfig simex = options.simex;
    simex.sigma_u = Eigen::MatrixXd::Constant(1, 1, scenario.sigma_u2);
    simex.threads = 1;
    simex.validate(1);

    // table order regardless of request order
    std::vector<Method> ordered;
    for (const Method m : kAllMethods) {
        if (std::find(methods.begin(), methods.end(), m) != methods.end()) ordered.push_back(m);
    }

    ScenarioResult result;
    result.scenario = scenario;
    for (const Method m : ordered) {
        MethodResult mr;
        mr.method = m;
        mr.target = scenario.target(m);
        mr.estimates.resize(static_cast<std::size_t>(scenario.reps));
        result.methods.push_back(std::move(mr));
    }

    const RegressionModel model = RegressionModel::exponential();
    std::mutex progress_mutex;
    int completed = 0;
    parallel_for(static_cast<std::size_t>(scenario.reps), options.threads, [&](std::size_t rep) {
        const Replication data = generate_replication(scenario, static_cast<int>(rep), simex.seed);
        const Dataset observed(data.y, data.w);
        SimexConfig local = simex;
        local.replication = rep;
        for (auto& mr : result.methods) mr.estimates[rep] = run_method(mr.method, scenario, observed, model, local);
        if (options.progress) {
            std::lock_guard lock(progress_mutex);
            options.progress(++completed, scenario.reps);
        }
    });

    for (auto& mr : result.methods) {
        std::array<std::vector<double>, 2> values;
        for (const auto& e : mr.estimates) {
            if (!e) {
                ++mr.failed;
                continue;
            }
            values[0].push_back((*e)[0]);
            values[1].push_back((*e)[1]);
        }
        if (values[0].empty()) continue;
        for (int k = 0; k < 2; ++k) mr.stats[static_cast<std::size_t>(k)] = summarize(values[static_cast<std::size_t>(k)], mr.target[k]);
    }
    return result;
}

TableFormat parse_table_format(std::string_view name) {
    if (name == "csv") return TableFormat::Csv;
    if (name == "text") return TableFormat::Text;
    throw std::invalid_argument("unknown format '" + std::string(name) + "' (expected csv or text)");
}

void emit_table(const ScenarioResult& result, TableFormat format, std::ostream& out) {
    static constexpr std::array<std::string_view, 2> kParams{"alpha", "beta"};
    static constexpr std::array<std::string_view, 3> kStatsCsv{"mean", "bias", "mse"};
    static constexpr std::array<std::string_view, 3> kStatsText{"Mean", "Bias", "MSE"};
    auto stat_value = [](const MethodResult& m, std::size_t param, std::size_t stat) {
        const auto& s = m.stats[param];
        return stat == 0 ? s.mean : stat == 1 ? s.bias : s.mse;
    };

    if (format == TableFormat::Csv) {
        out << "parameter,statistic,method,value\n";
        for (std::size_t p = 0; p < kParams.size(); ++p) {
            for (std::size_t s = 0; s < kStatsCsv.size(); ++s) {
                for (const auto& m : result.methods) {
                    const bool empty = !m.estimates.empty() && m.failed == static_cast<int>(m.estimates.size());
                    out << kParams[p] << ',' << kStatsCsv[s] << ',' << to_string(m.method) << ','
                        << (empty ? std::string("nan") : format_number(stat_value(m, p, s))) << '\n';
                }
            }
        }
        return;
    }

    const auto& sc = result.scenario;
    std::ostringstream text;
    text << "n=" << sc.n << ", sigma_u2=" << format_number(sc.sigma_u2) << ", c=" << format_number(sc.bandwidth_c)
         << ", reps=" << sc.reps << '\n';
    text << std::setw(8) << "" << std::setw(6) << "";
    for (const auto& m : result.methods) text << std::setw(10) << to_string(m.method);
    text << '\n';
    text << std::fixed << std::setprecision(3);
    for (std::size_t p = 0; p < kParams.size(); ++p) {
        for (std::size_t s = 0; s < kStatsText.size(); ++s) {
            text << std::left << std::setw(8) << (s == 0 ? kParams[p] : "") << std::setw(6) << kStatsText[s]
                 << std::right;
            for (const auto& m : result.methods) {
                const bool empty = !m.estimates.empty() && m.failed == static_cast<int>(m.estimates.size());
                if (empty) {
                    text << std::setw(10) << "nan";
                } else {
                    text << std::setw(10) << stat_value(m, p, s);
                }
            }
            text << '\n';
        }
    }
    bool any_failed = false;
    for (const auto& m : result.methods) any_failed |= m.failed > 0;
    if (any_failed) {
        text << "failed replications:";
        for (const auto& m : result.methods) text << ' ' << to_string(m.method) << '=' << m.failed;
        text << '\n';
    }
    out << text.str();
}

SimexConfig ScenarioSpec::simex_config() const {
    SimexConfig config;
    config.lambda_grid = equally_spaced_grid(lambda_points, lambda_max);
    config.B = B;
    config.extrapolant = extrapolant;
    config.seed = seed;
    config.sigma_u = Eigen::MatrixXd::Constant(1, 1, scenario.sigma_u2);
    return config;
}

namespace {

template <class T>
T parse_value(std::string_view key, std::string_view text) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw std::invalid_argument("invalid value '" + std::string(text) + "' for key '" + std::string(key) + "'");
    }
    return value;
}

}  // namespace

void apply_scenario_key(ScenarioSpec& spec, std::string_view key, std::string_view value) {
    value = trim(value);
    if (key == "n") {
        spec.scenario.n = parse_value<int>(key, value);
    } else if (key == "sigma_u2") {
        spec.scenario.sigma_u2 = parse_value<double>(key, value);
    } else if (key == "bandwidth_c") {
        spec.scenario.bandwidth_c = parse_value<double>(key, value);
    } else if (key == "reps") {
        spec.scenario.reps = parse_value<int>(key, value);
    } else if (key == "lambda_points") {
        spec.lambda_points = parse_value<int>(key, value);
    } else if (key == "lambda_max") {
        spec.lambda_max = parse_value<double>(key, value);
    } else if (key == "B") {
        spec.B = parse_value<int>(key, value);
    } else if (key == "extrapolant") {
        spec.extrapolant = parse_extrapolant(value);
    } else if (key == "seed") {
        spec.seed = parse_value<std::uint64_t>(key, value);
    } else if (key == "methods") {
        spec.methods.clear();
        std::size_t start = 0;
        while (start <= value.size()) {
            const auto comma = value.find(',', start);
            const auto item = trim(value.substr(start, comma == std::string_view::npos ? comma : comma - start));
            if (!item.empty()) spec.methods.push_back(parse_method(item));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (spec.methods.empty()) throw std::invalid_argument("methods list is empty");
    } else {
        throw std::invalid_argument("unknown scenario key '" + std::string(key) + "'");
    }
}

ScenarioSpec parse_scenario(std::istream& in) {
    ScenarioSpec spec;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        body = trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
        try {
            apply_scenario_key(spec, trim(body.substr(0, eq)), body.substr(eq + 1));
        } catch (const std::invalid_argument& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    spec.scenario.validate();
    spec.simex_config().validate(1);
    return spec;
}

}  // namespace modesimex
