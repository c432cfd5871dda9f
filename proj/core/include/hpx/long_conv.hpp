#pragma once

#include <cstddef>
#include <span>

#include "hpx/autograd.hpp"

namespace hpx {

// Tap layout of a long-convolution kernel along one spatial axis of length L.
//   causal:   L taps at offsets 0 .. L-1
//   centered: 2L-1 taps at offsets -(L-1) .. L-1 (index L-1 is offset 0)
//   none:     1 tap at offset 0, i.e. no mixing along that axis
enum class KernelAlign { causal, centered, none };

std::size_t kernel_extent(std::size_t length, KernelAlign align);

// y[i] = sum_s u[s] * h[i - s] over every spatial axis, per channel, with zero
// padding outside the input. u is [L, C] or [Ly, Lx, C]; kernel is [K, C] or
// [Ky, Kx, C] with K = kernel_extent(L, align). Evaluated as a circular FFT
// convolution on buffers padded to at least 2L-1 per axis; outputs are read
// from the index window that holds offset-aligned results (0 .. L-1 for causal,
// L-1 .. 2L-2 for centered). Padding is rounded up to a 2,3,5-smooth length,
// which leaves the selected outputs unchanged.
Var long_conv(const Var& u, const Var& kernel, std::span<const KernelAlign> aligns);
Tensor long_conv(const Tensor& u, const Tensor& kernel, std::span<const KernelAlign> aligns);

}  // namespace hpx
