#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace nliaudit::csv {

// Minimal RFC-4180 CSV. Fields containing commas, quotes or newlines are
// quoted; quotes are doubled. Enough for annotation files and report tables.

std::string escape(const std::string& field);
std::string join_row(const std::vector<std::string>& fields);

// Parses a whole document (quoted fields may span lines). Throws ParseError
// on unterminated quotes.
std::vector<std::vector<std::string>> parse_file(const std::filesystem::path& path);
std::vector<std::vector<std::string>> parse_string(const std::string& text);

void write_file(const std::filesystem::path& path,
                const std::vector<std::vector<std::string>>& rows);

}  // namespace nliaudit::csv
