#include "relhal/text.hpp"

#include <cctype>
#include <string>

namespace relhal::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string normalize_loose(std::string_view s) {
  std::string spaced(s);
  for (char& c : spaced) {
    if (std::ispunct(static_cast<unsigned char>(c))) c = ' ';
  }
  return normalize(spaced);
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) words.emplace_back(s.substr(start, i - start));
  }
  return words;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    parts.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

bool starts_with_word(std::string_view haystack, std::string_view word) {
  if (haystack.substr(0, word.size()) != word) return false;
  return haystack.size() == word.size() || is_space(haystack[word.size()]);
}

std::vector<ConfigLine> read_config_lines(std::istream& in) {
  std::vector<ConfigLine> lines;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view content(raw);
    if (auto hash = content.find('#'); hash != std::string_view::npos) content = content.substr(0, hash);
    content = trim(content);
    if (!content.empty()) lines.push_back({line_no, std::string(content)});
  }
  return lines;
}

std::string substitute(std::string_view tmpl, std::string_view key, std::string_view value) {
  const std::string needle = "{" + std::string(key) + "}";
  std::string out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = tmpl.find(needle, start);
    if (pos == std::string_view::npos) break;
    out.append(tmpl.substr(start, pos - start));
    out.append(value);
    start = pos + needle.size();
  }
  out.append(tmpl.substr(start));
  return out;
}

}  // namespace relhal::text
