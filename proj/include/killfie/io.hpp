#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace killfie::io {

std::string read_file(const std::string& path);

/// Writes through a temporary sibling and renames, so readers never observe
/// a half-written file.
void write_file(const std::string& path, std::string_view contents);

/// One parsed CSV record plus the 1-based line it started on.
struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields, doubled quotes, embedded newlines.
/// A trailing empty line is not a record.
std::vector<CsvRow> parse_csv(std::string_view text);

std::string csv_escape(std::string_view field);
std::string csv_line(const std::vector<std::string>& fields);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace killfie::io
