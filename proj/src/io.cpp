#include "modesimex/io.hpp"

#include <array>
#include <charconv>
#include <sstream>
#include <string_view>

namespace modesimex {

std::string format_number(double value) {
    std::array<char, 64> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    std::string text(buf.data(), ec == std::errc{} ? end : buf.data());
    if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
    return text;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

}  // namespace

CsvTable read_numeric_csv(std::istream& in, bool expect_header) {
    CsvTable table;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto cells = split_commas(body);
        if (expect_header && table.header.empty()) {
            for (const auto cell : cells) {
                if (cell.empty()) throw ParseError("empty column name in header", line_no);
                table.header.emplace_back(cell);
            }
            columns = cells.size();
            continue;
        }
        if (columns == 0) columns = cells.size();
        if (cells.size() != columns) {
            throw ParseError("expected " + std::to_string(columns) + " fields, found " +
                                 std::to_string(cells.size()),
                             line_no);
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto cell : cells) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
                throw ParseError("not a number: '" + std::string(cell) + "'", line_no);
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (expect_header && table.header.empty()) throw ParseError("missing header row", line_no + 1);
    table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < columns; ++k) {
            table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
        }
    }
    return table;
}

}  // namespace modesimex
