#pragma once

// Shared plumbing for the on-disk formats: a text manifest of key=value lines
// terminated by "end", followed by a little-endian binary payload.

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "fuselab/errors.hpp"

namespace fuselab::io {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(buf, 8);
}

inline void write_f64_le(std::ostream& out, double v) { write_u64_le(out, std::bit_cast<std::uint64_t>(v)); }

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(buf, 4);
}

inline std::uint64_t read_u64_le(std::istream& in, const std::string& what) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw ParseError("truncated payload while reading " + what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

inline double read_f64_le(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(read_u64_le(in, what));
}

inline std::uint32_t read_u32_le(std::istream& in, const std::string& what) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) throw ParseError("truncated payload while reading " + what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

inline void expect_end_of_payload(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after payload");
}

// Ordered manifest; keys keep insertion order for writing.
struct Manifest {
  std::string magic;
  std::vector<std::pair<std::string, std::string>> entries;

  void set(std::string key, std::string value) { entries.emplace_back(std::move(key), std::move(value)); }

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }

  const std::string& require(std::string_view key) const {
    const auto* v = find(key);
    if (v == nullptr) throw ParseError("missing manifest field '" + std::string(key) + "'");
    return *v;
  }

  template <typename Int>
  Int require_int(std::string_view key) const {
    const auto& s = require(key);
    Int value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw ParseError("manifest field '" + std::string(key) + "' is not an integer: '" + s + "'");
    }
    return value;
  }

  void write(std::ostream& out) const {
    out << magic << '\n';
    for (const auto& [k, v] : entries) out << k << '=' << v << '\n';
    out << "end\n";
  }

  static Manifest read(std::istream& in, std::string_view expected_magic) {
    Manifest m;
    if (!std::getline(in, m.magic) || m.magic != expected_magic) {
      throw ParseError("bad magic line: expected '" + std::string(expected_magic) + "'");
    }
    std::string line;
    while (true) {
      if (!std::getline(in, line)) throw ParseError("manifest not terminated by 'end'");
      if (line == "end") break;
      const auto eq = line.find('=');
      if (eq == std::string::npos || eq == 0) throw ParseError("malformed manifest line: '" + line + "'");
      m.entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return m;
  }
};

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return in;
}

}  // namespace fuselab::io
