#pragma once

#include <filesystem>
#include <iosfwd>

#include "hpx/tensor.hpp"

namespace hpx {

// HPX1 tensor file: "HPX1", u32 LE rank, u32 LE dims, float32 LE row-major payload.
void write_hpx1(std::ostream& os, const Tensor& t);
Tensor read_hpx1(std::istream& is);
void save_hpx1(const std::filesystem::path& path, const Tensor& t);
Tensor load_hpx1(const std::filesystem::path& path);

// Binary 8-bit PGM of a [H, W] tensor. Values are min-max normalized to
// [0, 255] unless the tensor is constant, which maps to 0.
void save_pgm(const std::filesystem::path& path, const Tensor& image);

// Reads binary PGM (P5) or PPM (P6) as [H, W, 3] with values in [0, 1];
// grayscale is replicated over the three channels.
Tensor load_pnm(const std::filesystem::path& path);

}  // namespace hpx
