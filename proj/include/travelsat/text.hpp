#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace travelsat::text {

std::string_view trim(std::string_view s);

/// Splits on a single-character delimiter. Double-quoted fields may contain
/// the delimiter; a doubled quote inside quotes is a literal quote.
std::vector<std::string> split_delimited(std::string_view line, char delim = ',');

/// Splits into lines, dropping a trailing '\r' on each.
std::vector<std::string_view> lines(std::string_view s);

/// Parses the whole (trimmed) string as a finite double.
std::optional<double> parse_double(std::string_view s);

/// Shortest representation that round-trips exactly.
std::string format_double(double value);

/// Fixed-point with the given number of decimals.
std::string format_fixed(double value, int decimals);

std::string read_file(const std::string& path);

/// Writes via a temporary file and rename, so readers never see partial content.
void write_file_atomic(const std::string& path, std::string_view content);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

}  // namespace travelsat::text
