#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace labq {

// Rectangular string table. TSV cells are backslash-escaped (\t \n \r \\),
// CSV follows RFC 4180 quoting; the delimiter comes from the file extension
// (.csv -> comma, anything else -> tab).
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

Table read_delimited(const std::filesystem::path& path, bool has_header = true);
void write_tsv(const std::filesystem::path& path, const Table& table);

}  // namespace labq
