#pragma once

// FCT1 tensor interchange: "FCT1" magic, u32 LE rank, u32 LE extents, then
// float32 LE values in row-major order.

#include "fcnet/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace fcnet {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_fct1(std::ostream& os, const Tensor& tensor);
void write_fct1(const std::filesystem::path& path, const Tensor& tensor);

/// Values come back widened from single precision.
Tensor read_fct1(std::istream& is);
Tensor read_fct1(const std::filesystem::path& path);

/// Round every value through float32, as a save/load cycle would.
Tensor round_to_single(const Tensor& tensor);

}  // namespace fcnet
