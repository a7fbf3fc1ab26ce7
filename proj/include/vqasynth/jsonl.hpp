#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vqasynth::jsonl {

using ordered_json = nlohmann::ordered_json;

struct Line {
    std::size_t number = 0;  // 1-based
    std::string text;
};

// Reads non-empty lines; a trailing '\r' is dropped. Throws Error{Io} when
// the file cannot be opened.
std::vector<Line> read_lines(const std::filesystem::path& path);

// Compact, UTF-8 preserving serialization used for every line-oriented file.
std::string dump(const ordered_json& j);

// Parses one line; throws Error{Parse} mentioning the path and line number.
ordered_json parse_line(const Line& line, const std::filesystem::path& path);

// Writes all lines to a sibling temp file and renames it into place.
void write_lines_atomic(const std::filesystem::path& path, const std::vector<std::string>& lines);

void write_text_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_text(const std::filesystem::path& path);

template <typename T, typename Fn>
std::vector<T> read_records(const std::filesystem::path& path, Fn&& from_json) {
    std::vector<T> out;
    for (const auto& line : read_lines(path)) out.push_back(from_json(parse_line(line, path)));
    return out;
}

}  // namespace vqasynth::jsonl
