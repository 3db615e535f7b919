#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nemo::csv {

/// Shortest decimal representation that parses back to the same double.
std::string format(double value);
double parse_double(std::string_view text);
std::vector<std::string> split(std::string_view line, char sep = ',');

/// Reads a whole file; throws IoError.
std::string read_file(const std::string& path);
/// Writes atomically enough for our purposes; throws IoError.
void write_file(const std::string& path, const std::string& contents);

/// Non-empty lines that do not start with '#'.
std::vector<std::string> data_lines(const std::string& contents);

}  // namespace nemo::csv
