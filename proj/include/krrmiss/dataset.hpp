#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "krrmiss/error.hpp"
#include "krrmiss/kernels.hpp"
#include "krrmiss/ridge.hpp"

namespace krrmiss {

/// Covariates, outcomes (NaN where missing) and response indicators.
struct Dataset {
    Matrix X;
    Vector y;
    ResponsePattern delta;
    std::vector<std::string> covariate_names;
    std::string outcome_name = "y";

    [[nodiscard]] Index size() const { return X.rows(); }
};

struct CsvSchema {
    std::string outcome_column;
    std::vector<std::string> covariate_columns;   ///< empty: every other column
    std::optional<std::string> response_column;   ///< absent: infer from missing outcomes
};

namespace detail {

inline bool is_missing_cell(std::string_view cell) { return cell.empty() || cell == "NA"; }

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

/// Splits one CSV record; double quotes group fields and "" escapes a quote.
inline std::vector<std::string> split_record(std::string_view line, std::size_t line_number) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw InputError("csv line " + std::to_string(line_number) + ": unterminated quote");
    fields.emplace_back(trim(cur));
    return fields;
}

inline std::optional<double> parse_double(std::string_view cell) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (first == last || ec != std::errc{} || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::string cell_location(std::size_t row, const std::string& column) {
    return "row " + std::to_string(row) + ", column '" + column + "'";
}

}  // namespace detail

/// Reads a header-first CSV. Data rows are numbered from 1. Outcome cells
/// that are empty or "NA" become nonrespondents; covariates must be present.
[[nodiscard]] inline Dataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file " + path.string());
    if (schema.outcome_column.empty()) throw InputError("no outcome column given");

    std::string line;
    std::size_t line_number = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_number;
        if (!detail::trim(line).empty()) {
            header = detail::split_record(line, line_number);
            break;
        }
    }
    if (header.empty()) throw InputError("input file " + path.string() + " is empty");
    if (header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
        header[0].erase(0, 3);
    }

    const auto find_column = [&](const std::string& name) -> std::size_t {
        std::optional<std::size_t> at;
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (header[j] != name) continue;
            if (at) throw InputError("column '" + name + "' appears more than once in the header");
            at = j;
        }
        if (!at) throw InputError("column '" + name + "' not found in the header");
        return *at;
    };

    const std::size_t outcome = find_column(schema.outcome_column);
    std::optional<std::size_t> response;
    if (schema.response_column) {
        response = find_column(*schema.response_column);
        if (*response == outcome) throw InputError("response column cannot be the outcome column");
    }
    std::vector<std::size_t> covariates;
    if (schema.covariate_columns.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (j != outcome && (!response || j != *response)) covariates.push_back(j);
        }
    } else {
        for (const auto& name : schema.covariate_columns) {
            const std::size_t j = find_column(name);
            if (j == outcome) throw InputError("column '" + name + "' is both outcome and covariate");
            if (response && j == *response) throw InputError("column '" + name + "' is both response and covariate");
            covariates.push_back(j);
        }
    }
    if (covariates.empty()) throw InputError("no covariate columns");

    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    std::vector<int> ds;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_record(line, line_number);
        if (cells.size() != header.size()) {
            throw InputError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                             " fields, found " + std::to_string(cells.size()));
        }
        std::vector<double> x;
        x.reserve(covariates.size());
        for (std::size_t j : covariates) {
            const auto& cell = cells[j];
            if (detail::is_missing_cell(cell)) {
                throw InputError("missing covariate at " + detail::cell_location(row, header[j]));
            }
            const auto v = detail::parse_double(cell);
            if (!v) throw InputError("non-numeric value '" + cell + "' at " + detail::cell_location(row, header[j]));
            x.push_back(*v);
        }
        const auto& ycell = cells[outcome];
        double yv = std::numeric_limits<double>::quiet_NaN();
        if (!detail::is_missing_cell(ycell)) {
            const auto v = detail::parse_double(ycell);
            if (!v) {
                throw InputError("non-numeric value '" + ycell + "' at " +
                                 detail::cell_location(row, header[outcome]));
            }
            yv = *v;
        }
        int d = std::isnan(yv) ? 0 : 1;
        if (response) {
            const auto& dcell = cells[*response];
            if (dcell != "0" && dcell != "1") {
                throw InputError("response indicator must be 0 or 1 at " +
                                 detail::cell_location(row, header[*response]));
            }
            d = dcell == "1" ? 1 : 0;
            if (d == 1 && std::isnan(yv)) {
                throw InputError("responded unit has a missing outcome at " +
                                 detail::cell_location(row, header[outcome]));
            }
            if (d == 0) yv = std::numeric_limits<double>::quiet_NaN();
        }
        xs.push_back(std::move(x));
        ys.push_back(yv);
        ds.push_back(d);
    }
    if (xs.empty()) throw InputError("input file " + path.string() + " has a header but no data rows");

    Dataset data;
    data.X.resize(static_cast<Index>(xs.size()), static_cast<Index>(covariates.size()));
    data.y.resize(static_cast<Index>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < covariates.size(); ++j) {
            data.X(static_cast<Index>(i), static_cast<Index>(j)) = xs[i][j];
        }
        data.y(static_cast<Index>(i)) = ys[i];
    }
    data.delta = ResponsePattern(ds);
    for (std::size_t j : covariates) data.covariate_names.push_back(header[j]);
    data.outcome_name = header[outcome];
    return data;
}

/// Writes covariates then the outcome ("NA" for nonrespondents) with enough
/// digits to re-read every value exactly.
inline void write_csv(const Dataset& data, const std::filesystem::path& path) {
    if (static_cast<Index>(data.covariate_names.size()) != data.X.cols()) {
        throw InputError("write_csv: covariate names do not match the covariate matrix");
    }
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    for (const auto& name : data.covariate_names) out << name << ',';
    out << data.outcome_name << '\n';
    out << std::setprecision(17);
    for (Index i = 0; i < data.X.rows(); ++i) {
        for (Index j = 0; j < data.X.cols(); ++j) out << data.X(i, j) << ',';
        if (data.delta.responded(i)) {
            out << data.y(i);
        } else {
            out << "NA";
        }
        out << '\n';
    }
}

}  // namespace krrmiss
