#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grove/dataset.hpp"

namespace grove {

enum class ColumnRole { kNumeric, kCategorical, kLabel, kIgnore, kTag };

inline const char* role_name(ColumnRole r) {
    switch (r) {
        case ColumnRole::kNumeric: return "numeric";
        case ColumnRole::kCategorical: return "categorical";
        case ColumnRole::kLabel: return "label";
        case ColumnRole::kIgnore: return "ignore";
        case ColumnRole::kTag: return "tag";
    }
    return "?";
}

/// Column-role schema for CSV loading, stored as a small "name = role" text
/// file. Roles: numeric, categorical, label, ignore, plus tag for the
/// simulator's submodel column.
struct CsvSchema {
    std::vector<std::pair<std::string, ColumnRole>> roles;

    const ColumnRole* find(const std::string& name) const {
        for (const auto& [col, role] : roles)
            if (col == name) return &role;
        return nullptr;
    }

    void set(const std::string& name, ColumnRole role) { roles.emplace_back(name, role); }

    static CsvSchema load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open schema file: " + path);
        CsvSchema schema;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (line.find_first_not_of(" \t") == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 'column = role'");
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t");
                const auto e = s.find_last_not_of(" \t");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            const std::string name = trim(line.substr(0, eq));
            const std::string role = trim(line.substr(eq + 1));
            ColumnRole r;
            if (role == "numeric") r = ColumnRole::kNumeric;
            else if (role == "categorical") r = ColumnRole::kCategorical;
            else if (role == "label") r = ColumnRole::kLabel;
            else if (role == "ignore") r = ColumnRole::kIgnore;
            else if (role == "tag") r = ColumnRole::kTag;
            else throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown role '" + role + "'");
            if (name.empty())
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty column name");
            schema.set(name, r);
        }
        return schema;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open schema file for writing: " + path);
        for (const auto& [col, role] : roles) out << col << " = " << role_name(role) << "\n";
    }
};

struct CsvLoad {
    Dataset ds;
    std::size_t dropped_rows = 0;          // rows skipped because of missing values
    std::vector<std::string> class_names;  // label levels in lexicographic order
};

namespace detail {

inline bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA"; }

inline void split_csv_line(const std::string& line, std::vector<std::string>& cells) {
    cells.clear();
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        const auto b = cell.find_first_not_of(" \t");
        const auto e = cell.find_last_not_of(" \t");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
}

inline double parse_double(const std::string& cell, std::size_t data_row, const std::string& col) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw std::runtime_error("data row " + std::to_string(data_row) + ": non-numeric value '" + cell +
                                 "' in numeric column '" + col + "'");
    return v;
}

}  // namespace detail

/// Load a one-header-line CSV ('.' decimal separator, comma fields). Every
/// header column must have a schema role; rows with missing values (empty or
/// NA cells) in a used column are dropped and counted; malformed rows raise
/// with their data row index. Categorical and label levels are coded in
/// lexicographic order of their string form.
inline CsvLoad load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file, expected a header line");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    detail::split_csv_line(line, header);
    std::vector<ColumnRole> roles(header.size());
    for (std::size_t j = 0; j < header.size(); ++j) {
        const ColumnRole* r = schema.find(header[j]);
        if (!r) throw std::runtime_error(path + ": column '" + header[j] + "' has no schema role");
        roles[j] = *r;
    }
    for (const auto& [col, role] : schema.roles)
        if (std::find(header.begin(), header.end(), col) == header.end())
            throw std::runtime_error(path + ": schema column '" + col + "' not present in the file");
    int label_col = -1, tag_col = -1;
    for (std::size_t j = 0; j < roles.size(); ++j) {
        if (roles[j] == ColumnRole::kLabel) {
            if (label_col >= 0) throw std::runtime_error(path + ": more than one label column");
            label_col = static_cast<int>(j);
        }
        if (roles[j] == ColumnRole::kTag) {
            if (tag_col >= 0) throw std::runtime_error(path + ": more than one tag column");
            tag_col = static_cast<int>(j);
        }
    }

    // Pass 1: split and validate rows, keep raw cells of surviving rows.
    std::vector<std::vector<std::string>> rows;
    std::size_t dropped = 0, data_row = 0;
    std::vector<std::string> cells;
    while (std::getline(in, line)) {
        ++data_row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        detail::split_csv_line(line, cells);
        if (cells.size() != header.size())
            throw std::runtime_error("data row " + std::to_string(data_row) + ": expected " +
                                     std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
        bool missing = false;
        for (std::size_t j = 0; j < cells.size(); ++j)
            if (roles[j] != ColumnRole::kIgnore && detail::is_missing(cells[j])) missing = true;
        if (missing) {
            ++dropped;
            continue;
        }
        for (std::size_t j = 0; j < cells.size(); ++j)
            if (roles[j] == ColumnRole::kNumeric) detail::parse_double(cells[j], data_row, header[j]);
        rows.push_back(cells);
    }

    // Level maps: lexicographic order gives stable, implementation-independent codes.
    std::map<std::string, std::int32_t> label_levels;
    std::vector<std::map<std::string, std::int32_t>> cat_levels(header.size());
    for (const auto& r : rows) {
        if (label_col >= 0) label_levels[r[static_cast<std::size_t>(label_col)]] = 0;
        for (std::size_t j = 0; j < r.size(); ++j)
            if (roles[j] == ColumnRole::kCategorical) cat_levels[j][r[j]] = 0;
    }
    CsvLoad out;
    for (auto& [name, code] : label_levels) {
        code = static_cast<std::int32_t>(out.class_names.size());
        out.class_names.push_back(name);
    }
    for (auto& levels : cat_levels) {
        std::int32_t next = 0;
        for (auto& [name, code] : levels) code = next++;
    }

    Dataset& ds = out.ds;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (roles[j] == ColumnRole::kNumeric || roles[j] == ColumnRole::kCategorical)
            ds.column_names.push_back(header[j]);
    ds.n_cols = ds.column_names.size();
    ds.n_rows = rows.size();
    ds.n_classes = label_col >= 0 ? std::max<std::size_t>(1, label_levels.size()) : 1;
    ds.features.resize(ds.n_rows * ds.n_cols);
    ds.labels.assign(ds.n_rows, 0);
    if (tag_col >= 0) ds.submodel_tags.resize(ds.n_rows);

    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::size_t out_j = 0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            switch (roles[j]) {
                case ColumnRole::kNumeric:
                    ds.features[i * ds.n_cols + out_j++] = detail::parse_double(r[j], i + 1, header[j]);
                    break;
                case ColumnRole::kCategorical:
                    ds.features[i * ds.n_cols + out_j++] = static_cast<double>(cat_levels[j].at(r[j]));
                    break;
                case ColumnRole::kLabel:
                    ds.labels[i] = label_levels.at(r[j]);
                    break;
                case ColumnRole::kTag: {
                    if (r[j] != "1" && r[j] != "2")
                        throw std::runtime_error("data row " + std::to_string(i + 1) + ": tag column '" + header[j] +
                                                 "' must be 1 or 2, found '" + r[j] + "'");
                    ds.submodel_tags[i] = static_cast<std::uint8_t>(r[j] == "1" ? 1 : 2);
                    break;
                }
                case ColumnRole::kIgnore:
                    break;
            }
        }
    }
    out.dropped_rows = dropped;
    ds.validate();
    return out;
}

/// Write a dataset as CSV (features, then `label`, then `submodel` when tags
/// are present). Doubles use %.17g so a reload reproduces them bit-exactly.
inline void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open csv file for writing: " + path);
    for (std::size_t j = 0; j < ds.n_cols; ++j) {
        if (j) out << ',';
        out << (j < ds.column_names.size() ? ds.column_names[j] : "c" + std::to_string(j + 1));
    }
    out << (ds.n_cols ? "," : "") << "label";
    if (ds.has_tags()) out << ",submodel";
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < ds.n_rows; ++i) {
        for (std::size_t j = 0; j < ds.n_cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.at(i, j));
            out << buf << ',';
        }
        out << ds.labels[i];
        if (ds.has_tags()) out << ',' << static_cast<int>(ds.submodel_tags[i]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

/// Schema matching write_csv output for a dataset.
inline CsvSchema schema_for(const Dataset& ds) {
    CsvSchema schema;
    for (std::size_t j = 0; j < ds.n_cols; ++j)
        schema.set(j < ds.column_names.size() ? ds.column_names[j] : "c" + std::to_string(j + 1),
                   ColumnRole::kNumeric);
    schema.set("label", ColumnRole::kLabel);
    if (ds.has_tags()) schema.set("submodel", ColumnRole::kTag);
    return schema;
}

}  // namespace grove
