#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace dge::eval {

using CsvCell = std::variant<double, long long, std::string>;

// Comma-separated table: header row first, LF line endings, reals printed with 9
// significant digits. Strings containing a comma, quote or newline are quoted.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    // Throws DimensionError when the row width differs from the header.
    void add_row(std::vector<CsvCell> row);

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    std::string str() const;
    // Atomic write (temporary file, then rename).
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<CsvCell>> rows_;
};

std::string format_real(double v);

// Minimal reader for the tables written above: header and rows of raw fields.
struct CsvData {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column; throws InvalidInput when absent.
    std::size_t column(const std::string& name) const;
};

CsvData parse_csv(const std::string& text);

}  // namespace dge::eval
