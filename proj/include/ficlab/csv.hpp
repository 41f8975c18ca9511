#pragma once

// CSV input with a mandatory header row, plus small file helpers shared by
// the command line tool and the tests. Cells are kept as strings so files
// with label columns round-trip; col() converts a column on demand. Lines
// starting with '#' carry metadata (key=value) and are kept separately.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ficlab/limitcore.hpp"

namespace ficlab {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> cells; // one vector per column
    std::map<std::string, std::string> metadata; // from leading '#' lines

    int rows() const { return cells.empty() ? 0 : static_cast<int>(cells[0].size()); }
    int cols() const { return static_cast<int>(columns.size()); }

    int find(const std::string& name) const {
        for (int j = 0; j < cols(); ++j)
            if (columns[j] == name) return j;
        return -1;
    }
    const std::vector<std::string>& raw(const std::string& name) const {
        int j = find(name);
        if (j < 0) throw IoError("column '" + name + "' not found");
        return cells[j];
    }
    Vec col(const std::string& name) const {
        const auto& c = raw(name);
        Vec v(static_cast<Eigen::Index>(c.size()));
        for (std::size_t i = 0; i < c.size(); ++i) {
            try {
                std::size_t used = 0;
                v[static_cast<Eigen::Index>(i)] = std::stod(c[i], &used);
                if (used != c[i].size()) throw std::invalid_argument(c[i]);
            } catch (const std::exception&) {
                throw IoError("column '" + name + "', row " + std::to_string(i + 1) +
                              ": cannot parse '" + c[i] + "' as a number");
            }
        }
        return v;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, sep)) out.push_back(trim(field));
    if (!line.empty() && line.back() == sep) out.push_back("");
    return out;
}

} // namespace detail

inline CsvTable parse_csv(std::istream& in, const std::string& what) {
    CsvTable t;
    std::string line;
    bool have_header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = detail::trim(line);
        if (s.empty()) continue;
        if (s[0] == '#') {
            std::size_t eq = s.find('=');
            if (eq != std::string::npos)
                t.metadata[detail::trim(s.substr(1, eq - 1))] = detail::trim(s.substr(eq + 1));
            continue;
        }
        auto fields = detail::split(s, ',');
        if (!have_header) {
            t.columns = fields;
            t.cells.resize(fields.size());
            have_header = true;
            continue;
        }
        if (fields.size() != t.columns.size())
            throw IoError(what + ": line " + std::to_string(lineno) + " has " +
                          std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(t.columns.size()));
        for (std::size_t j = 0; j < fields.size(); ++j) t.cells[j].push_back(fields[j]);
    }
    if (!have_header) throw IoError(what + ": empty file (a header row is required)");
    return t;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return parse_csv(in, path);
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace ficlab
