#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ordikit/error.hpp"

namespace ordikit {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("file_not_found", "cannot open " + path.string(), {path.string()});
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("io_error", "cannot write " + path.string(), {path.string()});
  out << contents;
  if (!out) fail("io_error", "short write to " + path.string(), {path.string()});
}

/// Splits on '\n', dropping a trailing '\r' per line. A final newline does
/// not produce an empty trailing line.
inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

inline bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

/// Parses one JSONL line, reporting `line_no` (1-based) on failure.
inline json parse_json_line(const std::string& line, std::size_t line_no,
                            const std::string& source) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    fail("parse_error", source + ":" + std::to_string(line_no) + ": " + e.what());
  }
}

}  // namespace ordikit
