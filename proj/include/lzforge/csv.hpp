#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lzforge {

// lossless double round-trip
inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

struct CsvTable {
    std::vector<std::string> comments;  // emitted as "# ..." lines before the header
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& c : table.comments) out << "# " << c << '\n';
    for (std::size_t j = 0; j < table.columns.size(); ++j)
        out << (j ? "," : "") << table.columns[j];
    out << '\n';
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size())
            throw std::logic_error("csv row width mismatch in " + path);
        for (std::size_t j = 0; j < row.size(); ++j)
            out << (j ? "," : "") << format_g17(row[j]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    CsvTable table;
    std::string line;
    bool have_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::size_t k = 1;
            if (k < line.size() && line[k] == ' ') ++k;
            table.comments.push_back(line.substr(k));
            continue;
        }
        auto cells = detail::split_csv_line(line);
        if (!have_header) {
            table.columns = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != table.columns.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": row width does not match header");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& cell : cells) {
            std::size_t used = 0;
            double val = 0.0;
            try {
                val = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": not a number: '" + cell + "'");
            }
            while (used < cell.size() && (cell[used] == ' ' || cell[used] == '\t')) ++used;
            if (used != cell.size())
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": trailing junk in '" + cell + "'");
            row.push_back(val);
        }
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw std::runtime_error(path + ": no header row found");
    return table;
}

// column lookup helper; throws when the column is absent
inline std::size_t csv_column(const CsvTable& t, const std::string& name) {
    for (std::size_t j = 0; j < t.columns.size(); ++j)
        if (t.columns[j] == name) return j;
    throw std::runtime_error("csv column not found: " + name);
}

}  // namespace lzforge
