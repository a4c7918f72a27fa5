#pragma once

// Plain-text reports: one "key: value" pair per line, '#' starts a comment
// line. Keys are dotted paths; order of insertion is preserved. Floating
// values are written with 17 significant digits so they parse back exactly.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fuselab/errors.hpp"

namespace fuselab {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Report {
 public:
  void add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }
  void add(std::string key, const char* value) { add(std::move(key), std::string(value)); }
  void add(std::string key, double value) { add(std::move(key), format_double(value)); }
  void add(std::string key, int value) { add(std::move(key), std::to_string(value)); }
  void add(std::string key, std::size_t value) { add(std::move(key), std::to_string(value)); }
  void add(std::string key, bool value) { add(std::move(key), std::string(value ? "true" : "false")); }

  void append(const Report& other, const std::string& prefix = {}) {
    for (const auto& [k, v] : other.entries_) entries_.emplace_back(prefix + k, v);
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  const std::string& get(const std::string& key) const {
    const auto* v = find(key);
    if (v == nullptr) throw ParseError("report: missing key '" + key + "'");
    return *v;
  }

  double get_double(const std::string& key) const {
    const auto& s = get(key);
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s == "nan") return NAN;
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw ParseError("");
      return v;
    } catch (...) {
      throw ParseError("report: key '" + key + "' is not numeric: '" + s + "'");
    }
  }

  std::string render() const {
    std::ostringstream out;
    out << "# fuselab report v1\n";
    for (const auto& [k, v] : entries_) out << k << ": " << v << '\n';
    return out.str();
  }

  static Report parse(const std::string& text) {
    Report r;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto sep = line.find(": ");
      if (sep == std::string::npos) throw ParseError("report: malformed line '" + line + "'");
      r.add(line.substr(0, sep), line.substr(sep + 2));
    }
    return r;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << render();
  }

  static Report load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::ostringstream s;
    s << in.rdbuf();
    return parse(s.str());
  }

 private:
  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return &v;
    return nullptr;
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace fuselab
