#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hforget {

// Shortest decimal string that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string_view> split_csv_line(std::string_view line);

std::string sha256_hex(std::string_view data);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace hforget
