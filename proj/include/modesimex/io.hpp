#pragma once

#include <Eigen/Dense>

#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

namespace modesimex {

/// Shortest decimal that round-trips to the same double; integral values keep a trailing ".0".
[[nodiscard]] std::string format_number(double value);

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct CsvTable {
    std::vector<std::string> header;
    /// rows x columns
    Eigen::MatrixXd values;
};

/// Reads a numeric CSV with a header row. Blank lines are skipped.
[[nodiscard]] CsvTable read_numeric_csv(std::istream& in, bool expect_header = true);

}  // namespace modesimex
