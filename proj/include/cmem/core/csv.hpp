#pragma once

#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "cmem/core/errors.hpp"

namespace cmem::csv {

/// Shortest round-trippable decimal (17 significant digits).
inline std::string format17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Writes a header line and rows of numeric columns.
inline void write_columns(const std::string& path, const std::vector<std::string>& header,
                          const std::vector<std::span<const double>>& columns) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    const std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << format17(columns[c][r]);
        out << '\n';
    }
}

}  // namespace cmem::csv
