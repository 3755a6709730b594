#include "json_io.hpp"

#include <fstream>
#include <sstream>

#include "lail/error.hpp"

namespace lail::detail {

std::string describe_location(std::string_view source, std::size_t line_no) {
  return std::string(source) + ":" + std::to_string(line_no);
}

Json parse_object_line(std::string_view line, std::string_view source, std::size_t line_no) {
  Json value;
  try {
    value = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw DataError(describe_location(source, line_no) + ": malformed JSON: " + e.what());
  }
  if (!value.is_object()) {
    throw DataError(describe_location(source, line_no) + ": expected a JSON object");
  }
  return value;
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn,
                    bool tolerate_torn_tail) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string source = path.string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const bool last_without_newline = in.eof();
    Json object;
    try {
      object = parse_object_line(line, source, line_no);
    } catch (const DataError&) {
      if (tolerate_torn_tail && last_without_newline) return;
      throw;
    }
    if (object.contains(kMetaKey)) continue;
    fn(object, line_no);
  }
}

std::optional<Json> read_jsonl_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  try {
    Json value = Json::parse(line);
    if (value.is_object() && value.contains(kMetaKey)) return value.at(kMetaKey);
  } catch (const Json::parse_error&) {
  }
  return std::nullopt;
}

std::string dump_line(const Json& value) {
  std::string out = value.dump(-1, ' ', false, Json::error_handler_t::strict);
  out.push_back('\n');
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void append_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append to " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw DataError("append failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void truncate_torn_tail(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return;
  const std::string content = read_file(path);
  if (content.empty() || content.back() == '\n') return;
  const auto last_newline = content.rfind('\n');
  const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
  std::filesystem::resize_file(path, keep);
}

const Json& require_field(const Json& object, std::string_view key, std::string_view source,
                          std::size_t line_no) {
  auto it = object.find(key);
  if (it == object.end()) {
    throw DataError(describe_location(source, line_no) + ": missing required field \"" +
                    std::string(key) + "\"");
  }
  return *it;
}

std::string require_string(const Json& object, std::string_view key, std::string_view source,
                           std::size_t line_no) {
  const Json& value = require_field(object, key, source, line_no);
  if (!value.is_string()) {
    throw DataError(describe_location(source, line_no) + ": field \"" + std::string(key) +
                    "\" must be a string");
  }
  return value.get<std::string>();
}

}  // namespace lail::detail
