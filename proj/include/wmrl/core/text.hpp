#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace wmrl {

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

std::string_view trim(std::string_view s);

/// Parses `key=value` lines; blank lines and lines starting with '#' are
/// skipped. Duplicate keys and malformed lines are format errors.
std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& context);

double parse_double(std::string_view s, const std::string& what);
std::uint64_t parse_u64(std::string_view s, const std::string& what);
std::int64_t parse_i64(std::string_view s, const std::string& what);
bool parse_bool(std::string_view s, const std::string& what);

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace wmrl
