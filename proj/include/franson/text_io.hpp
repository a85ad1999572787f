#pragma once

// Small helpers shared by the text file formats: shortest round-trip number
// formatting, "# key: value" header blocks and CSV field splitting.

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "franson/error.hpp"

namespace franson::text {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  double v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Ordered "# key: value" header. Insertion order is preserved so that
/// re-emitting a parsed header reproduces the original bytes.
struct Header {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries.emplace_back(key, value);
  }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    return std::nullopt;
  }

  std::string require(const std::string& key, const std::string& source) const {
    auto v = get(key);
    if (!v) throw ParseError(source, 0, "missing header key '" + key + "'");
    return *v;
  }

  void write(std::ostream& os) const {
    for (const auto& [k, v] : entries) os << "# " << k << ": " << v << '\n';
  }

  bool operator==(const Header&) const = default;
};

/// Reads leading "# key: value" lines; stops at the first non-comment line,
/// which is returned through `first_data_line` (empty when the stream ended).
inline Header read_header(std::istream& is, const std::string& source, std::size_t& line_no,
                          std::string& first_data_line) {
  Header h;
  std::string line;
  first_data_line.clear();
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] != '#') {
      first_data_line = line;
      return h;
    }
    std::string_view body = trim(std::string_view(line).substr(1));
    const auto colon = body.find(':');
    if (colon == std::string_view::npos) throw ParseError(source, line_no, "header line without ':'");
    h.entries.emplace_back(std::string(trim(body.substr(0, colon))),
                           std::string(trim(body.substr(colon + 1))));
  }
  return h;
}

} // namespace franson::text
