#pragma once

#include <cstdint>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace fdt2 {

// Shortest decimal that round-trips to the same double; locale independent.
std::string format_real(double v);

// Minimal CSV writer. The header is written on construction and every row
// must have the same number of fields.
class CsvWriter {
public:
    CsvWriter(std::ostream& out, std::vector<std::string> header);

    CsvWriter& field(std::string_view v);
    CsvWriter& field(double v);
    CsvWriter& field(std::uint64_t v);
    CsvWriter& field(std::int64_t v);
    CsvWriter& field(int v) { return field(static_cast<std::int64_t>(v)); }
    // Terminates the current row; throws if its width differs from the header.
    void end_row();

private:
    void raw(std::string_view v);

    std::ostream& out_;
    std::size_t columns_;
    std::size_t current_ = 0;
};

}  // namespace fdt2
