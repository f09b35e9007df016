#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace relhal::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);

// Lowercase, trim and collapse internal whitespace runs to a single space.
std::string normalize(std::string_view s);

// Like normalize(), but ASCII punctuation becomes whitespace first.
std::string normalize_loose(std::string_view s);

std::vector<std::string> split_words(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

bool starts_with_word(std::string_view haystack, std::string_view word);

struct ConfigLine {
  std::size_t line_no;
  std::string content;
};

// Reads a plain-text config: one entry per line, `#` starts a comment,
// blank lines are skipped. Content is trimmed but otherwise untouched.
std::vector<ConfigLine> read_config_lines(std::istream& in);

// Replaces every `{key}` occurrence.
std::string substitute(std::string_view tmpl, std::string_view key, std::string_view value);

}  // namespace relhal::text
