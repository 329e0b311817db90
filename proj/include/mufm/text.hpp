#ifndef MUFM_TEXT_HPP
#define MUFM_TEXT_HPP

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "mufm/error.hpp"

namespace mufm {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF. Blank lines
/// are skipped.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, was_quoted = false, any = false;
  auto take = [&] { return was_quoted ? field : std::string(trim(field)); };
  auto end_row = [&] {
    if (any || !field.empty() || !row.empty()) {
      row.push_back(take());
      rows.push_back(std::move(row));
    }
    row.clear();
    field.clear();
    quoted = was_quoted = any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted && c == '"') {
      if (i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else {
        quoted = false;
        was_quoted = any = true;
      }
    } else if (quoted) {
      field += c;
    } else if (c == '"' && trim(field).empty()) {
      field.clear();
      quoted = true;
    } else if (c == ',') {
      row.push_back(take());
      field.clear();
      was_quoted = false;
      any = true;
    } else if (c == '\n') {
      end_row();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw Error(ErrorCode::ParseError, "unterminated quoted CSV field");
  end_row();
  return rows;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string join_csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(fields[i]);
  }
  return out;
}

inline int parse_int(std::string_view s) {
  s = trim(s);
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw Error(ErrorCode::ParseError, "not an integer: '" + std::string(s) + "'");
  return v;
}

inline double parse_double(std::string_view s) {
  s = trim(s);
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw Error(ErrorCode::ParseError, "not a number: '" + std::string(s) + "'");
  return v;
}

}  // namespace mufm

#endif  // MUFM_TEXT_HPP
