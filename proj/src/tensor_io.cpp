#include "fcnet/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace fcnet {
namespace {

constexpr std::array<char, 4> kMagic{'F', 'C', 'T', '1'};
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> bytes{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                  static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(bytes.data(), bytes.size());
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) {
    throw FormatError(std::string("FCT1: truncated while reading ") + what);
  }
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

}  // namespace

void write_fct1(std::ostream& os, const Tensor& tensor) {
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, static_cast<std::uint32_t>(tensor.rank()));
  for (Index extent : tensor.shape()) put_u32(os, static_cast<std::uint32_t>(extent));
  for (double v : tensor.values()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!os) throw FormatError("FCT1: write failed");
}

void write_fct1(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("FCT1: cannot open " + path.string() + " for writing");
  write_fct1(os, tensor);
}

Tensor read_fct1(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("FCT1: bad magic");
  const std::uint32_t rank = get_u32(is, "rank");
  if (rank == 0 || rank > kMaxRank) throw FormatError("FCT1: unsupported rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& extent : shape) {
    extent = get_u32(is, "extents");
    if (extent == 0) throw FormatError("FCT1: zero extent");
  }
  Tensor out(shape);
  for (double& v : out.values()) v = std::bit_cast<float>(get_u32(is, "values"));
  return out;
}

Tensor read_fct1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("FCT1: cannot open " + path.string());
  return read_fct1(is);
}

Tensor round_to_single(const Tensor& tensor) { return tensor.cast<float>().cast<double>(); }

}  // namespace fcnet
