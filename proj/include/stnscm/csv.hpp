#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace stnscm {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // Line number (1-based, header is line 1) of each row for error messages.
  std::vector<std::size_t> lines;

  // Index of a named column; throws ValidationError when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

// Plain comma-separated text, no quoting. Blank lines are skipped.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text, const std::string& source = "<memory>");

double parse_double(const std::string& field, const std::string& context);
long long parse_int(const std::string& field, const std::string& context);
// Shortest text that parses back to the same double.
std::string format_double(double value);

// Writes through a temporary sibling and renames into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace stnscm
