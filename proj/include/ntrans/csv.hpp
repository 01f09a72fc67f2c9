#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace ntrans {

// Floats are written with 17 significant digits so round-trips are exact.
std::string format_g17(double v);

std::uint64_t fnv1a64(std::string_view bytes);

// Comma-separated output: one '#' provenance line, a header row, then data.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& provenance,
            const std::vector<std::string>& columns);

  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::size_t n_columns_;
};

}  // namespace ntrans
