#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>

#include "hpx/autograd.hpp"

namespace hpx {

// Real form of the truncated complex exponential basis rho_k(t) = e^{i 2 pi k t / period}:
// column 0 is the constant k = 0 term, then (sin, cos) pairs for k = 1 .. K-1.
struct PositionalBasis1D {
    std::size_t filter_length{};
    std::size_t period{};
    std::size_t k{};
    long first_position{};
    Tensor features{};  // [filter_length, 2K - 1]
};

PositionalBasis1D build_basis_1d(std::size_t filter_length, std::size_t period, std::size_t k,
                                 long first_position = 0);

// Sine/cosine encoding over the centered (2Ly-1) x (2Lx-1) kernel grid. The
// first K/2 features encode the vertical offset, the last K/2 the horizontal
// one; each half holds (sin, cos) pairs at integer frequencies over the
// kernel extent, with a trailing cosine when K/2 is odd.
struct PositionalBasis2D {
    std::size_t lx{};
    std::size_t ly{};
    std::size_t k{};
    Tensor features{};  // [(2Ly-1) * (2Lx-1), K]
};

PositionalBasis2D build_basis_2d(std::size_t lx, std::size_t ly, std::size_t k);

enum class WindowVariant { causal, bidirectional, radial2d };

// Modulation envelope exp(-alpha * distance) + b with per-channel alpha >= 0 and b.
struct WindowParams {
    Tensor alpha{};  // [C]
    Tensor bias{};   // [C]
    WindowVariant variant{WindowVariant::bidirectional};
    double center_x{0.0};
    double center_y{0.0};
};

// Kernel taps of one implicit filter: their offsets, basis features and window
// distances. Offsets are (t) for 1D and (t_y, t_x) for 2D.
struct KernelGrid {
    WindowVariant variant{};
    Shape extent{};       // {K} or {Ky, Kx}
    Tensor positions{};   // [P, 1] or [P, 2]
    Tensor features{};    // [P, F]
    Tensor distances{};   // [P], already multiplied by distance_scale
    std::array<double, 2> distance_scale{1.0, 1.0};  // (y, x); x used for 1D

    std::size_t num_positions() const { return positions.dim(0); }
    std::size_t feature_dim() const { return features.dim(1); }
};

// Feature-map extent a grid serves: L for 1D grids, max(Ly, Lx) for 2D.
std::size_t grid_feature_extent(const KernelGrid& grid);
// Unscaled distance of each tap from the kernel origin, capped at F - 1 so the
// corners of a full 2D kernel count as reaching the edge along the axes.
Tensor tap_radius(const KernelGrid& grid);

// t = 0 .. L-1, period L.
KernelGrid causal_grid(std::size_t length, std::size_t k);
// t = -(L-1) .. L-1, period 2L-1.
KernelGrid bidirectional_grid(std::size_t length, std::size_t k);
// (t_y, t_x) over the centered (2Ly-1) x (2Lx-1) grid.
KernelGrid pixel_grid(std::size_t ly, std::size_t lx, std::size_t k);

// Window distances for a set of positions; 2D positions use the Euclidean
// distance to (center_y, center_x).
Tensor window_distances(const WindowParams& window, const Tensor& positions, std::array<double, 2> scale = {1.0, 1.0});

Tensor eval_window(const WindowParams& window, const Tensor& positions);

// FFN mapping basis features to per-channel kernel values: two hidden layers
// with sine activations, linear output.
struct FilterFFN {
    Tensor w0{}, b0{};
    Tensor w1{}, b1{};
    Tensor w2{}, b2{};

    std::size_t in_features() const { return w0.dim(0); }
    std::size_t hidden() const { return w0.dim(1); }
    std::size_t channels() const { return w2.dim(1); }
    std::size_t num_params() const;

    static FilterFFN init(std::size_t in_features, std::size_t hidden, std::size_t channels, std::mt19937_64& rng);
};

WindowParams init_window(WindowVariant variant, std::size_t channels, std::size_t length, std::mt19937_64& rng);

struct FilterFFNVars {
    Var w0, b0, w1, b1, w2, b2;
};

Var filter_ffn_forward(const Var& features, const FilterFFNVars& ffn);

// kernel[p, c] = FFN(features)[p, c] * window[p, c], as Vars.
Var materialize_filter(const KernelGrid& grid, const FilterFFNVars& ffn, const Var& alpha, const Var& bias);

// Same, on plain tensors. Result is [P, C].
Tensor materialize_filter(const KernelGrid& grid, const FilterFFN& ffn, const WindowParams& window);

// Rebuilds the grid for a new input extent and re-evaluates basis, FFN and
// window there. Offsets are compared in units of the kernel period, so taps
// whose normalized coordinate coincides with an old tap reproduce its value.
// Sizes are input extents: {L} for 1D, {Ly, Lx} for radial2d.
KernelGrid resample_grid(WindowVariant variant, std::size_t k, const Shape& old_size, const Shape& new_size);
Tensor resample_filter(const FilterFFN& ffn, const WindowParams& window, std::size_t k, const Shape& old_size,
                       const Shape& new_size);

}  // namespace hpx
