#include "ridecast/csvio.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ridecast {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

CsvFile read_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open " + path);
    CsvFile csv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (csv.header.empty()) {
            csv.header = split_fields(line);
            continue;
        }
        CsvRow row;
        row.line = lineno;
        row.fields = split_fields(line);
        require(row.fields.size() == csv.header.size(),
                path + " line " + std::to_string(lineno) + ": expected " +
                    std::to_string(csv.header.size()) + " fields, got " +
                    std::to_string(row.fields.size()));
        csv.rows.push_back(std::move(row));
    }
    require(!csv.header.empty(), path + " is empty (missing header)");
    return csv;
}

void expect_header(const CsvFile& csv, const std::vector<std::string>& expected,
                   const std::string& path) {
    if (csv.header == expected) return;
    std::ostringstream want;
    for (size_t i = 0; i < expected.size(); ++i) want << (i ? "," : "") << expected[i];
    throw invalid_input(path + ": header must be exactly \"" + want.str() + "\"");
}

double parse_double_field(const CsvRow& row, size_t col, const std::string& what) {
    const std::string& s = row.fields[col];
    require(!s.empty(), "line " + std::to_string(row.line) + ": empty " + what);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    require(errno == 0 && end == s.c_str() + s.size(),
            "line " + std::to_string(row.line) + ": cannot parse " + what + " \"" + s + "\"");
    return v;
}

long long parse_int_field(const CsvRow& row, size_t col, const std::string& what) {
    const std::string& s = row.fields[col];
    require(!s.empty(), "line " + std::to_string(row.line) + ": empty " + what);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    require(errno == 0 && end == s.c_str() + s.size(),
            "line " + std::to_string(row.line) + ": cannot parse " + what + " \"" + s + "\"");
    return v;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write " + path);
    out << content;
    ensure(out.good(), "write failed for " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace ridecast
