#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace convlab {

/// Shortest decimal string that round-trips to the same double. Locale
/// independent, '.' decimal separator.
std::string format_double(double v);

/// As format_double, but always a valid TOML float literal.
std::string format_toml_float(double v);

/// Comma-separated writer with a mandatory header row and LF line endings.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

    CsvWriter& cell(double v);
    CsvWriter& cell(long long v);
    CsvWriter& cell(const std::string& v);
    void end_row();

    void row(std::initializer_list<double> values);

private:
    void separator();

    std::ofstream out_;
    std::filesystem::path path_;
    std::size_t columns_;
    std::size_t current_ = 0;
};

} // namespace convlab
