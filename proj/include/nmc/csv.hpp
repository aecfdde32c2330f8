#pragma once

#include <string>
#include <vector>

namespace nmc {

/// 15 significant digits, the format used by every numeric CSV column.
std::string format_number(double v);

/// Header plus rows of preformatted cells. Serializes with LF endings.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    std::string to_string() const;
    /// Column index by name; throws InvalidInput when absent.
    std::size_t column(const std::string& name) const;
};

/// Minimal RFC-4180-style reader (quoted fields, CRLF tolerated).
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

/// Writes to a sibling temp file then renames, so readers never see a
/// partial file. Throws IoError (and leaves nothing behind) on failure.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace nmc
