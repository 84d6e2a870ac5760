#include "feedertk/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace feedertk::csv {

int Table::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    throw CsvError("missing column '" + name + "'");
}

Table parse_csv(const std::string& text, const std::string& origin) {
    Table t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        fields.push_back(cur);
        if (first) {
            t.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != t.header.size())
                throw CsvError(origin + ":" + std::to_string(lineno) + ": field count mismatch");
            t.rows.push_back(std::move(fields));
        }
    }
    if (first) throw CsvError(origin + ": empty file (header row required)");
    return t;
}

Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw CsvError("cannot write '" + path + "'");
    auto emit = [&](const std::vector<std::string>& fields) {
        for (size_t i = 0; i < fields.size(); ++i) {
            if (i) out << ',';
            out << fields[i];
        }
        out << '\n';
    };
    emit(header);
    for (const auto& r : rows) emit(r);
}

std::string num(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        int n = snprintf(buf, sizeof buf, "%.*g", prec, v);
        double back;
        auto [p, ec] = std::from_chars(buf, buf + n, back);
        (void)p;
        if (ec == std::errc() && back == v) return std::string(buf, n);
    }
    return std::string(buf);
}

}  // namespace feedertk::csv
