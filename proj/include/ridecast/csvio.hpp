#pragma once

#include <string>
#include <vector>

#include "ridecast/common.hpp"

namespace ridecast {

struct CsvRow {
    int line = 0; // 1-based line number in the file
    std::vector<std::string> fields;
};

struct CsvFile {
    std::vector<std::string> header;
    std::vector<CsvRow> rows;
};

// Reads a comma-separated file with a mandatory header row. No quoting rules:
// none of the artifact's schemas embed commas. Every row must have the same
// field count as the header; violations report the line number.
CsvFile read_csv(const std::string& path);

// Requires exactly the given header (order-sensitive).
void expect_header(const CsvFile& csv, const std::vector<std::string>& expected,
                   const std::string& path);

double parse_double_field(const CsvRow& row, size_t col, const std::string& what);
long long parse_int_field(const CsvRow& row, size_t col, const std::string& what);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace ridecast
