#pragma once

#include "modesimex/simex.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace modesimex {

struct OracleOutcome {
    std::string name;
    bool passed = false;
    double observed = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
};

/// Fits the closed-form linear-normal attenuation curve theta0 sx2 / (sx2 + (1 + l) su2) (theta0 = 1,
/// sx2 = 1, su2 = 0.25) on the default grid and extrapolates to -1. Passes when |estimate - 1| < 1e-6.
[[nodiscard]] OracleOutcome analytic_extrapolation_check(Extrapolant family = Extrapolant::Rational);

struct LinearOracleOptions {
    int n = 10000;
    int B = 50;
    double bandwidth_c = 0.8;
    std::uint64_t seed = 20240917;
    int threads = 1;
};

/// S-Modal on Y = X + e, W = X + U with X, e ~ N(0, 1), U ~ N(0, 0.25), rational extrapolant.
/// Passes when the estimate is within 0.05 of 1.
[[nodiscard]] OracleOutcome linear_monte_carlo_check(const LinearOracleOptions& opts = {});

/// Entry point of the command-line tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace modesimex
