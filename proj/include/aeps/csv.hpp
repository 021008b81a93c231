#pragma once

#include "aeps/common.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace aeps::csv {

// Shortest round-trip representation, so written files are stable and
// re-reading them reproduces the exact doubles.
inline std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("csv: cannot format number");
  return std::string(buf, ptr);
}

inline std::string fmt(bool v) { return v ? "1" : "0"; }

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void header(std::initializer_list<std::string_view> cols) {
    bool first = true;
    for (auto c : cols) {
      if (!first) out_ << ',';
      out_ << c;
      first = false;
    }
    out_ << '\n';
  }

  void header(const std::vector<std::string>& cols) { cells(cols); }

  void cells(const std::vector<std::string>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) out_ << (i == 0 ? "" : ",") << vals[i];
    out_ << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... vals) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(vals), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(bool v) { return fmt(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }

  std::ostream& out_;
};

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error("csv: not a number: '" + std::string(s) + "'");
  }
  return v;
}

// Reads a numeric table and checks the header matches `expected` exactly.
inline std::vector<std::vector<double>> read_numeric(std::istream& in,
                                                     const std::vector<std::string>& expected) {
  std::string line;
  if (!std::getline(in, line)) throw Error("csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto cols = split(line);
  if (cols != expected) {
    std::ostringstream msg;
    msg << "csv: unexpected header '" << line << "'";
    throw Error(msg.str());
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != expected.size()) throw Error("csv: wrong column count in '" + line + "'");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace aeps::csv
