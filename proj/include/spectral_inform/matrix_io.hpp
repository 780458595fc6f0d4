#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace spectral_inform {

// Binary layout: "SPNM1\n" "<n> <m>\n" then n*m IEEE-754 doubles, row-major,
// little-endian. Text fallback: comma or whitespace separated rows, '#'
// comments and blank lines ignored.

inline constexpr std::string_view kMatrixMagic = "SPNM1";

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
  }
  return v;
}

inline std::string shortest(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline Matrix parse_binary(std::string_view bytes, std::size_t start) {
  // start points at the magic.
  std::size_t pos = start + kMatrixMagic.size();
  if (pos >= bytes.size() || bytes[pos] != '\n')
    throw InputError("matrix file, byte offset " + std::to_string(pos) + ": expected newline after SPNM1");
  ++pos;
  const std::size_t eol = bytes.find('\n', pos);
  if (eol == std::string_view::npos)
    throw InputError("matrix file, line 2: missing dimension line");
  const std::string_view dims = bytes.substr(pos, eol - pos);
  unsigned long long n = 0, m = 0;
  const char* p = dims.data();
  const char* end = dims.data() + dims.size();
  auto skip = [&] {
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
  };
  skip();
  auto r1 = std::from_chars(p, end, n);
  if (r1.ec != std::errc()) throw InputError("matrix file, line 2, column 1: expected row count");
  p = r1.ptr;
  skip();
  auto r2 = std::from_chars(p, end, m);
  if (r2.ec != std::errc())
    throw InputError("matrix file, line 2, column " + std::to_string(p - dims.data() + 1) + ": expected column count");
  p = r2.ptr;
  skip();
  if (p != end)
    throw InputError("matrix file, line 2, column " + std::to_string(p - dims.data() + 1) + ": trailing characters");
  if (n == 0 || m == 0) throw InputError("matrix file, line 2: dimensions must be positive");
  const std::size_t data = eol + 1;
  const unsigned long long need = n * m * 8ULL;
  if (m != 0 && need / m / 8ULL != n) throw InputError("matrix file, line 2: dimensions overflow");
  if (bytes.size() - data < need)
    throw InputError("matrix file, byte offset " + std::to_string(bytes.size()) + ": truncated data, expected " +
                     std::to_string(need) + " bytes after offset " + std::to_string(data));
  if (bytes.size() - data > need)
    throw InputError("matrix file, byte offset " + std::to_string(data + need) + ": trailing bytes after matrix data");
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  std::size_t off = data;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j, off += 8) {
      std::uint64_t raw;
      std::memcpy(&raw, bytes.data() + off, 8);
      raw = to_little(raw);
      double v;
      std::memcpy(&v, &raw, 8);
      x(i, j) = v;
    }
  return x;
}

inline Matrix parse_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    ++line_no;
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') {
      if (eol == text.size()) break;
      continue;
    }
    std::vector<double> row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p == end) break;
      double v;
      auto r = std::from_chars(p, end, v);
      if (r.ec != std::errc())
        throw InputError("matrix csv, line " + std::to_string(line_no) + ", column " +
                         std::to_string(p - line.data() + 1) + ": expected a number");
      row.push_back(v);
      p = r.ptr;
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p < end && *p == ',') {
        ++p;
        while (p < end && (*p == ' ' || *p == '\t')) ++p;
        if (p == end)
          throw InputError("matrix csv, line " + std::to_string(line_no) + ", column " +
                           std::to_string(p - line.data() + 1) + ": trailing comma");
      } else if (p < end && !(p[-1] == ' ' || p[-1] == '\t')) {
        throw InputError("matrix csv, line " + std::to_string(line_no) + ", column " +
                         std::to_string(p - line.data() + 1) + ": unexpected character");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw InputError("matrix csv, line " + std::to_string(line_no) + ": expected " +
                       std::to_string(rows.front().size()) + " values, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
    if (eol == text.size()) break;
  }
  if (rows.empty()) throw InputError("matrix csv: no data rows");
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return x;
}

}  // namespace detail

/// Parses either format from raw bytes.
inline Matrix parse_matrix(std::string_view bytes) {
  const std::size_t first = bytes.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && bytes.substr(first, kMatrixMagic.size()) == kMatrixMagic)
    return detail::parse_binary(bytes, first);
  return detail::parse_csv(bytes);
}

inline Matrix read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open matrix file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_matrix(bytes);
}

inline void write_matrix_binary(std::ostream& os, const Matrix& x) {
  os << kMatrixMagic << '\n' << x.rows() << ' ' << x.cols() << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double v = x(i, j);
      std::uint64_t raw;
      std::memcpy(&raw, &v, 8);
      raw = detail::to_little(raw);
      os.write(reinterpret_cast<const char*>(&raw), 8);
    }
}

/// Shortest round-trip decimal representation per entry.
inline void write_matrix_csv(std::ostream& os, const Matrix& x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (j) os << ',';
      os << detail::shortest(x(i, j));
    }
    os << '\n';
  }
}

inline void write_matrix(const std::string& path, const Matrix& x, bool csv = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write matrix file '" + path + "'");
  if (csv)
    write_matrix_csv(out, x);
  else
    write_matrix_binary(out, x);
  if (!out) throw InputError("write failed for '" + path + "'");
}

}  // namespace spectral_inform
