#include "labq/table_io.hpp"

#include <fstream>
#include <sstream>

#include "labq/errors.hpp"

namespace labq {

namespace {

bool is_csv(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    return ext == ".csv" || ext == ".CSV";
}

std::string unescape_tsv(const std::string& field) {
    if (field.find('\\') == std::string::npos) return field;
    std::string out;
    out.reserve(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (field[i] != '\\' || i + 1 == field.size()) {
            out.push_back(field[i]);
            continue;
        }
        switch (field[++i]) {
            case 't': out.push_back('\t'); break;
            case 'n': out.push_back('\n'); break;
            case 'r': out.push_back('\r'); break;
            case '\\': out.push_back('\\'); break;
            default:
                out.push_back('\\');
                out.push_back(field[i]);
        }
    }
    return out;
}

std::string escape_tsv(const std::string& field) {
    std::string out;
    out.reserve(field.size());
    for (char c : field) {
        switch (c) {
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\\': out += "\\\\"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::vector<std::vector<std::string>> parse_tsv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> row;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                row.push_back(unescape_tsv(line.substr(start, i - start)));
                start = i + 1;
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// State machine so quoted fields may span lines.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_started = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        if (!row_started && row.empty() && field.empty()) return;
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        row_started = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"': in_quotes = true; row_started = true; break;
            case ',': end_field(); row_started = true; break;
            case '\r': break;
            case '\n': end_row(); break;
            default: field.push_back(c); row_started = true;
        }
    }
    if (row_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

}  // namespace

Table read_delimited(const std::filesystem::path& path, bool has_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());

    auto rows = is_csv(path) ? parse_csv(text) : parse_tsv(text);

    Table table;
    if (has_header) {
        if (rows.empty()) throw SchemaError("empty table: " + path.string());
        table.header = std::move(rows.front());
        rows.erase(rows.begin());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != table.header.size())
                throw SchemaError(path.string() + ": row " + std::to_string(r + 1) +
                                  " has " + std::to_string(rows[r].size()) +
                                  " fields, header has " +
                                  std::to_string(table.header.size()));
        }
    }
    table.rows = std::move(rows);
    return table;
}

void write_tsv(const std::filesystem::path& path, const Table& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    auto write_row = [&out](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << '\t';
            out << escape_tsv(row[i]);
        }
        out << '\n';
    };
    if (!table.header.empty()) write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
}

}  // namespace labq
