#include "fcnet/activation.hpp"
#include "fcnet/synthdata.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcnet {

void write_activation_pgm(const std::filesystem::path& path, const ActivationMap& map) { write_pgm(path, map.norm); }

void write_activation_csv(const std::filesystem::path& path, const ActivationMap& map) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  char buf[32];
  for (Index r = 0; r < map.rows(); ++r) {
    for (Index c = 0; c < map.cols(); ++c) {
      if (c) os << ',';
      const auto res = std::to_chars(buf, buf + sizeof buf, map.raw(r, c));
      os.write(buf, res.ptr - buf);
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Tensor read_activation_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<double> values;
  Index rows = 0, cols = -1;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Index count = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc()) throw std::runtime_error("bad number '" + cell + "' in " + path.string());
      values.push_back(v);
      ++count;
    }
    if (cols >= 0 && count != cols) throw std::runtime_error("ragged rows in " + path.string());
    cols = count;
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("empty activation CSV " + path.string());
  return Tensor::from_values({rows, cols}, std::span<const double>(values));
}

}  // namespace fcnet
