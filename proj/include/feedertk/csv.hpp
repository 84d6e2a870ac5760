#ifndef FEEDERTK_CSV_HPP
#define FEEDERTK_CSV_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace feedertk::csv {

class CsvError : public std::runtime_error {
public:
    explicit CsvError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // throws if absent
};

/// Plain comma-separated values, UTF-8, header row required, no quoting.
Table read_csv(const std::string& path);
Table parse_csv(const std::string& text, const std::string& origin);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Shortest decimal representation that round-trips the double exactly.
std::string num(double v);

}  // namespace feedertk::csv

#endif
