#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace esl {

std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);  // "fnv1a64:%016x"

/// Round-trip decimal form used in every output file.
std::string format_number(double x);

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// CSV with leading `# key: value` metadata lines. Returns the bytes written.
std::string write_csv(const std::filesystem::path& path, const Metadata& metadata,
                      const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows);
std::string write_csv(const std::filesystem::path& path, const Metadata& metadata,
                      const std::vector<std::string>& columns,
                      const std::vector<std::vector<std::string>>& rows);

/// Pretty-printed JSON with a trailing newline. Returns the bytes written.
std::string write_json(const std::filesystem::path& path, const nlohmann::json& value);

std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Numeric body of a CSV written by write_csv (metadata and header skipped).
std::vector<std::vector<double>> read_csv_numbers(const std::filesystem::path& path);

/// Value of a `# key: value` metadata line in a CSV file ("" when absent).
std::string csv_metadata(const std::filesystem::path& path, std::string_view key);

}  // namespace esl
