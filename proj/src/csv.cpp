#include "ntrans/csv.hpp"

#include <cstdio>
#include <stdexcept>

namespace ntrans {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CsvWriter::CsvWriter(const std::string& path, const std::string& provenance,
                     const std::vector<std::string>& columns)
    : out_(path), n_columns_(columns.size()) {
  if (!out_) throw std::runtime_error("csv: cannot open " + path);
  out_ << "# " << provenance << "\n";
  for (std::size_t q = 0; q < columns.size(); ++q)
    out_ << columns[q] << (q + 1 < columns.size() ? "," : "");
  out_ << "\n";
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != n_columns_)
    throw std::logic_error("csv: row width does not match the header");
  for (std::size_t q = 0; q < cells.size(); ++q)
    out_ << cells[q] << (q + 1 < cells.size() ? "," : "");
  out_ << "\n";
}

}  // namespace ntrans
