#include "glab/fvec.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "glab/error.hpp"

namespace glab {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& source) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw LoadError(source + ": truncated FVEC header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_fvec(std::ostream& out, const Tensor& matrix) {
  const std::size_t count = matrix.rows();
  const std::size_t dim = matrix.rank() == 0 ? 1 : matrix.cols();
  if (count > UINT32_MAX || dim > UINT32_MAX) throw ShapeError("FVEC: matrix too large");
  out.write(kFvecMagic, 5);
  put_u32(out, static_cast<std::uint32_t>(count));
  put_u32(out, static_cast<std::uint32_t>(dim));
  std::vector<char> buf(matrix.size() * 4);
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(matrix[i]));
    for (int j = 0; j < 4; ++j) buf[i * 4 + j] = static_cast<char>((bits >> (8 * j)) & 0xffu);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw LoadError("FVEC: write failed");
}

Tensor read_fvec(std::istream& in, const std::string& source) {
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kFvecMagic, 5) != 0) {
    throw LoadError(source + ": bad magic, expected \"FVEC1\"");
  }
  const std::uint32_t count = get_u32(in, source);
  const std::uint32_t dim = get_u32(in, source);
  const std::size_t n = static_cast<std::size_t>(count) * dim;
  std::vector<unsigned char> buf(n * 4);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw LoadError(source + ": truncated FVEC payload (expected " + std::to_string(n) + " floats)");
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int j = 0; j < 4; ++j) bits |= static_cast<std::uint32_t>(buf[i * 4 + j]) << (8 * j);
    const float f = std::bit_cast<float>(bits);
    if (!std::isfinite(f)) throw LoadError(source + ": non-finite value at index " + std::to_string(i));
    data[i] = static_cast<double>(f);
  }
  return Tensor(Shape{count, dim}, std::move(data));
}

void write_fvec_file(const std::filesystem::path& path, const Tensor& matrix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  write_fvec(out, matrix);
}

Tensor read_fvec_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return read_fvec(in, path.string());
}

}  // namespace glab
