#pragma once

// CSV tables with round-trip-exact numbers, and the content digest used in
// run manifests.

#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qcurv/core.hpp"

namespace qcurv {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(const std::vector<double>& row) {
    std::vector<std::string> cells;
    for (double v : row) cells.push_back(format_number(v));
    add_cells(std::move(cells));
  }
  // Text cells are written verbatim; they must not contain commas.
  void add_cells(std::vector<std::string> cells) {
    require(cells.size() == header_.size(), ErrorKind::InvalidArgument, "csv row width does not match header");
    for (const auto& c : cells)
      require(c.find_first_of(",\n") == std::string::npos, ErrorKind::InvalidArgument, "csv cell contains a separator");
    rows_.push_back(std::move(cells));
  }
  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < header_.size(); ++i) os << (i ? "," : "") << header_[i];
    os << '\n';
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    }
    return os.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// 64-bit FNV-1a
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex_digest(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace qcurv
