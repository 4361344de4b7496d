#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mlink/error.hpp"

namespace mlink {

/// Shortest round-trip decimal rendering of a double. Used for every
/// float written to a report so reruns are byte-identical.
inline std::string format_f64(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// CSV report writer: header row, LF line endings, decimal f64 cells.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
        row_out(header);
    }

    CsvWriter& cell(const std::string& s) {
        row_.push_back(s);
        return *this;
    }
    CsvWriter& cell(double v) { return cell(format_f64(v)); }
    CsvWriter& cell(std::int64_t v) { return cell(std::to_string(v)); }
    CsvWriter& cell(std::size_t v) { return cell(std::to_string(v)); }

    void end_row() {
        require(row_.size() == columns_, "csv: row has " + std::to_string(row_.size()) +
                                             " cells, header has " + std::to_string(columns_));
        row_out(row_);
        row_.clear();
    }

    const std::string& text() const { return out_; }

    void write_file(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        require(f.good(), "csv: cannot open " + path + " for writing");
        f << out_;
    }

private:
    void row_out(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ += ',';
            out_ += cells[i];
        }
        out_ += '\n';
    }

    std::size_t columns_;
    std::vector<std::string> row_;
    std::string out_;
};

}  // namespace mlink
