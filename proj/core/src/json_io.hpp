#pragma once

// Internal JSON/JSONL helpers shared by the core sources and the tools.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

namespace lail::detail {

using Json = nlohmann::json;

/// Key that marks a provenance line at the top of a JSONL artifact.
inline constexpr std::string_view kMetaKey = "_meta";

std::string describe_location(std::string_view source, std::size_t line_no);

/// Parses one line as a JSON object; DataError names the location.
Json parse_object_line(std::string_view line, std::string_view source, std::size_t line_no);

/// Calls `fn(object, line_no)` for every record line, skipping blank lines and
/// `_meta` lines. Throws DataError if the file cannot be opened or a line is
/// malformed. When `tolerate_torn_tail` is set, an unparsable final line
/// without a trailing newline is ignored (an interrupted append).
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn,
                    bool tolerate_torn_tail = false);

/// The `_meta` object of a JSONL file's first line, if present.
std::optional<Json> read_jsonl_meta(const std::filesystem::path& path);

/// Compact single-line dump with a trailing newline.
std::string dump_line(const Json& value);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Appends `content` and flushes.
void append_file(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Drops a torn final line (no trailing newline) left by an interrupted append.
void truncate_torn_tail(const std::filesystem::path& path);

const Json& require_field(const Json& object, std::string_view key, std::string_view source,
                          std::size_t line_no);
std::string require_string(const Json& object, std::string_view key, std::string_view source,
                           std::size_t line_no);

}  // namespace lail::detail
