#pragma once

// Small helpers shared by the line-oriented config parsers.

#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "orchestra/errors.hpp"

namespace orchestra::text {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::string_view strip_comment(std::string_view line) {
  const auto hash = line.find('#');
  return hash == std::string_view::npos ? line : line.substr(0, hash);
}

inline std::optional<double> to_double(std::string_view tok) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> to_int(std::string_view tok) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

inline double need_double(std::string_view tok, std::size_t line) {
  auto v = to_double(tok);
  if (!v) throw ParseError("line " + std::to_string(line) + ": expected a number, got '" +
                               std::string(tok) + "'",
                           line);
  return *v;
}

inline long long need_int(std::string_view tok, std::size_t line) {
  auto v = to_int(tok);
  if (!v) throw ParseError("line " + std::to_string(line) + ": expected an integer, got '" +
                               std::string(tok) + "'",
                           line);
  return *v;
}

[[noreturn]] inline void fail(std::size_t line, const std::string& msg) {
  throw ParseError("line " + std::to_string(line) + ": " + msg, line);
}

/// Iterates non-empty, comment-stripped lines as token lists.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    auto toks = split(strip_comment(line));
    if (!toks.empty()) fn(toks, number);
  }
}

}  // namespace orchestra::text
