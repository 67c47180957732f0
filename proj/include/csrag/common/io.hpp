#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace csrag::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

void append_file(const std::filesystem::path& path, std::string_view content);

/// One JSON value per non-blank line.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

std::string to_jsonl_line(const nlohmann::json& value);

/// Fixed-point decimal rendering used by every persisted report.
std::string format_fixed(double value, int decimals);

}  // namespace csrag::io
