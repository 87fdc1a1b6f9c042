#include "convlab/format.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace convlab {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_toml_float(double v) {
    std::string s = format_double(v);
    if (std::isfinite(v) && s.find_first_of(".eE") == std::string::npos) {
        s += ".0";
    }
    return s;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path), columns_(header.size()) {
    if (!out_) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    for (const auto& h : header) {
        cell(h);
    }
    end_row();
}

void CsvWriter::separator() {
    if (current_ > 0) out_ << ',';
    ++current_;
}

CsvWriter& CsvWriter::cell(double v) {
    separator();
    out_ << format_double(v);
    return *this;
}

CsvWriter& CsvWriter::cell(long long v) {
    separator();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
    separator();
    out_ << v;
    return *this;
}

void CsvWriter::end_row() {
    if (current_ != columns_) {
        throw std::logic_error(path_.string() + ": row has " + std::to_string(current_) + " cells, header has " +
                               std::to_string(columns_));
    }
    out_ << '\n';
    current_ = 0;
}

void CsvWriter::row(std::initializer_list<double> values) {
    for (double v : values) cell(v);
    end_row();
}

} // namespace convlab
