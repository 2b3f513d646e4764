#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "trustlex/error.hpp"

namespace trustlex::csv {

// Shortest representation that parses back to the same double. Used by every
// CSV/text writer so that reruns are byte-identical.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool needs_quoting(std::string_view field) {
  return field.find_first_of(",\"\n\r") != std::string_view::npos;
}

inline std::string format_field(std::string_view field) {
  if (!needs_quoting(field)) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string format_row(const std::vector<std::string> &fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += format_field(fields[i]);
  }
  out.push_back('\n');
  return out;
}

// Splits one physical line. Quoted fields may contain commas and escaped
// quotes but not newlines.
inline std::vector<std::string> parse_line(const std::string &line,
                                           const std::string &context = {}) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  std::size_t i = 0;
  fields.reserve(8);
  while (i < line.size()) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c == '\r' && i + 1 == line.size()) {
      // tolerate CRLF input
    } else {
      cur.push_back(c);
    }
    ++i;
  }
  if (quoted) throw DataError("unterminated quote" + (context.empty() ? "" : " in " + context));
  fields.push_back(std::move(cur));
  return fields;
}

class Reader {
 public:
  Reader(std::istream &in, std::string source_name)
      : in_(in), source_(std::move(source_name)) {}

  // Reads the next non-empty line into fields. Returns false at EOF.
  bool next(std::vector<std::string> &fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty() || line == "\r") continue;
      fields = parse_line(line, where());
      return true;
    }
    return false;
  }

  std::size_t line_no() const { return line_no_; }
  std::string where() const { return source_ + ":" + std::to_string(line_no_); }
  const std::string &source() const { return source_; }

 private:
  std::istream &in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

}  // namespace trustlex::csv
