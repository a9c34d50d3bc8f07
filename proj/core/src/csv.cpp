#include "fdt2/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace fdt2 {

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw std::runtime_error("float formatting failed");
    return std::string(buf.data(), ptr);
}

CsvWriter::CsvWriter(std::ostream& out, std::vector<std::string> header)
    : out_(out), columns_(header.size()) {
    for (const auto& h : header) field(h);
    end_row();
}

void CsvWriter::raw(std::string_view v) {
    if (current_ > 0) out_ << ',';
    out_ << v;
    ++current_;
}

CsvWriter& CsvWriter::field(std::string_view v) {
    if (v.find_first_of(",\"\n") == std::string_view::npos) {
        raw(v);
        return *this;
    }
    std::string quoted = "\"";
    for (char c : v) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    raw(quoted);
    return *this;
}

CsvWriter& CsvWriter::field(double v) {
    raw(format_real(v));
    return *this;
}

CsvWriter& CsvWriter::field(std::uint64_t v) {
    raw(std::to_string(v));
    return *this;
}

CsvWriter& CsvWriter::field(std::int64_t v) {
    raw(std::to_string(v));
    return *this;
}

void CsvWriter::end_row() {
    if (current_ != columns_) {
        throw std::logic_error("CSV row has " + std::to_string(current_) + " fields, header has " +
                               std::to_string(columns_));
    }
    out_ << '\n';
    current_ = 0;
}

}  // namespace fdt2
