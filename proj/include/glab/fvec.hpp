#pragma once

#include <filesystem>
#include <iosfwd>

#include "glab/tensor.hpp"

namespace glab {

// FVEC1 layout: magic "FVEC1", u32 count, u32 dim (little-endian), then
// count*dim little-endian float32 values, row-major. Values are promoted to
// double on load.
inline constexpr char kFvecMagic[] = "FVEC1";

void write_fvec(std::ostream& out, const Tensor& matrix);
Tensor read_fvec(std::istream& in, const std::string& source = "<stream>");

void write_fvec_file(const std::filesystem::path& path, const Tensor& matrix);
Tensor read_fvec_file(const std::filesystem::path& path);

}  // namespace glab
