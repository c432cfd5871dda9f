#include "hpx/long_conv.hpp"

#include <algorithm>
#include <array>
#include <vector>

#include "hpx/fft.hpp"
#include "hpx/parallel.hpp"

namespace hpx {

namespace {

// Spatial geometry with rank-1 inputs lifted to a leading unit axis.
struct Geometry {
    std::array<std::size_t, 2> length{1, 1};
    std::array<std::size_t, 2> taps{1, 1};
    std::array<long, 2> first_offset{0, 0};
    std::array<std::size_t, 2> padded{1, 1};
    std::size_t channels{1};
    std::array<bool, 2> causal{false, false};
    // Single-tap axes: the kernel value is shared by every position along them.
    std::array<bool, 2> broadcast{false, false};
    std::vector<std::size_t> axes{};  // buffer axes that are transformed

    std::size_t input_size() const { return length[0] * length[1]; }
    std::size_t kernel_size() const { return taps[0] * taps[1]; }
    std::size_t padded_size() const { return padded[0] * padded[1]; }
    Shape padded_shape() const { return {padded[0], padded[1]}; }
};

Geometry make_geometry(const Shape& us, const Shape& ks, std::span<const KernelAlign> aligns) {
    const std::size_t rank = us.size();
    if (rank < 2 || rank > 3 || ks.size() != rank) {
        throw Error("long_conv: expected [L, C] or [Ly, Lx, C] input with matching kernel rank, got " +
                    shape_str(us) + " and " + shape_str(ks));
    }
    const std::size_t spatial = rank - 1;
    if (aligns.size() != spatial) {
        throw Error("long_conv: need one alignment per spatial axis");
    }
    if (us.back() != ks.back()) {
        throw Error("long_conv: channel mismatch " + shape_str(us) + " vs kernel " + shape_str(ks));
    }
    Geometry g;
    g.channels = us.back();
    for (std::size_t a = 0; a < spatial; ++a) {
        const std::size_t slot = a + (2 - spatial);
        const std::size_t l = us[a];
        const std::size_t k = ks[a];
        if (k != kernel_extent(l, aligns[a])) {
            throw Error("long_conv: kernel extent " + std::to_string(k) + " does not match input length " +
                        std::to_string(l));
        }
        const long lo = aligns[a] == KernelAlign::centered ? -static_cast<long>(l - 1) : 0L;
        g.length[slot] = l;
        g.taps[slot] = k;
        g.first_offset[slot] = lo;
        g.causal[slot] = aligns[a] == KernelAlign::causal;
        // Minimal alias-free period for the forward and both correlations.
        const long need = std::max<long>({static_cast<long>(l) - lo, static_cast<long>(l + k - 1) + lo,
                                          static_cast<long>(2 * l - 1), static_cast<long>(k)});
        // A single-tap axis is a pointwise product, so it needs no transform.
        if (aligns[a] == KernelAlign::none) {
            g.padded[slot] = l;
            g.broadcast[slot] = true;
        } else {
            g.padded[slot] = next_fast_length(static_cast<std::size_t>(need));
            g.axes.push_back(slot);
        }
    }
    if (g.axes.empty()) {
        throw Error("long_conv: at least one axis must be convolved");
    }
    return g;
}

std::size_t wrap(long i, std::size_t n) {
    const long m = static_cast<long>(n);
    return static_cast<std::size_t>(((i % m) + m) % m);
}

// Scatter channel c of a [ny, nx, C] tensor into the top-left of a padded buffer.
void load(std::vector<Complex>& buf, const Tensor& t, std::size_t c, std::size_t ny, std::size_t nx,
          const Geometry& g) {
    std::fill(buf.begin(), buf.end(), Complex{});
    for (std::size_t y = 0; y < ny; ++y) {
        for (std::size_t x = 0; x < nx; ++x) {
            buf[y * g.padded[1] + x] = t[(y * nx + x) * g.channels + c];
        }
    }
}

// Kernel channel c, replicated along broadcast axes.
void load_kernel(std::vector<Complex>& buf, const Tensor& h, std::size_t c, const Geometry& g) {
    std::fill(buf.begin(), buf.end(), Complex{});
    const std::size_t ny = g.broadcast[0] ? g.padded[0] : g.taps[0];
    const std::size_t nx = g.broadcast[1] ? g.padded[1] : g.taps[1];
    for (std::size_t y = 0; y < ny; ++y) {
        const std::size_t sy = g.broadcast[0] ? 0 : y;
        for (std::size_t x = 0; x < nx; ++x) {
            const std::size_t sx = g.broadcast[1] ? 0 : x;
            buf[y * g.padded[1] + x] = h[(sy * g.taps[1] + sx) * g.channels + c];
        }
    }
}

// Kernel gradient: like gather_add over the taps, summing broadcast axes.
void gather_kernel_grad(Tensor& dst, const std::vector<Complex>& buf, std::size_t c, const Geometry& g) {
    const std::size_t ny = g.broadcast[0] ? g.padded[0] : g.taps[0];
    const std::size_t nx = g.broadcast[1] ? g.padded[1] : g.taps[1];
    for (std::size_t y = 0; y < ny; ++y) {
        const std::size_t py = g.broadcast[0] ? y : wrap(static_cast<long>(y) + g.first_offset[0], g.padded[0]);
        const std::size_t dy = g.broadcast[0] ? 0 : y;
        for (std::size_t x = 0; x < nx; ++x) {
            const std::size_t px = g.broadcast[1] ? x : wrap(static_cast<long>(x) + g.first_offset[1], g.padded[1]);
            const std::size_t dx = g.broadcast[1] ? 0 : x;
            dst[(dy * g.taps[1] + dx) * g.channels + c] += buf[py * g.padded[1] + px].real();
        }
    }
}

// dst[i] += buf[(i + shift) mod N] for i over an [ny, nx] window, restricted
// to the index box [begin, end).
void gather_add(Tensor& dst, const std::vector<Complex>& buf, std::size_t c, std::size_t ny, std::size_t nx,
                std::array<long, 2> shift, const Geometry& g, std::array<std::size_t, 2> begin = {0, 0},
                std::array<std::size_t, 2> end = {~std::size_t{0}, ~std::size_t{0}}) {
    for (std::size_t y = begin[0]; y < std::min(ny, end[0]); ++y) {
        const std::size_t py = wrap(static_cast<long>(y) + shift[0], g.padded[0]);
        for (std::size_t x = begin[1]; x < std::min(nx, end[1]); ++x) {
            const std::size_t px = wrap(static_cast<long>(x) + shift[1], g.padded[1]);
            dst[(y * nx + x) * g.channels + c] += buf[py * g.padded[1] + px].real();
        }
    }
}

// Bounding box of the non-zero entries of channel c in an [ny, nx, C] tensor.
struct Support {
    std::array<std::size_t, 2> begin{0, 0};
    std::array<std::size_t, 2> end{0, 0};
};

Support support(const Tensor& t, std::size_t c, std::size_t ny, std::size_t nx, std::size_t channels) {
    Support s{{ny, nx}, {0, 0}};
    for (std::size_t y = 0; y < ny; ++y) {
        for (std::size_t x = 0; x < nx; ++x) {
            if (t[(y * nx + x) * channels + c] != 0.0) {
                s.begin = {std::min(s.begin[0], y), std::min(s.begin[1], x)};
                s.end = {std::max(s.end[0], y + 1), std::max(s.end[1], x + 1)};
            }
        }
    }
    return s;
}

// Along causal axes, output i only sees inputs s <= i, so outputs before the
// first non-zero input are exactly zero and input gradients past the last
// non-zero output gradient are exactly zero. Enforcing this keeps FFT
// round-off out of positions that are structurally zero.
std::array<std::size_t, 2> causal_begin(const Support& s, const Geometry& g) {
    return {g.causal[0] ? s.begin[0] : 0, g.causal[1] ? s.begin[1] : 0};
}

std::array<std::size_t, 2> causal_end(const Support& s, const Geometry& g) {
    constexpr auto kAll = ~std::size_t{0};
    return {g.causal[0] ? s.end[0] : kAll, g.causal[1] ? s.end[1] : kAll};
}

Tensor forward_impl(const Tensor& u, const Tensor& h, const Geometry& g) {
    Tensor out(u.shape());
    parallel_for(g.channels, [&](std::size_t c) {
        std::vector<Complex> ub(g.padded_size());
        std::vector<Complex> hb(g.padded_size());
        load(ub, u, c, g.length[0], g.length[1], g);
        load_kernel(hb, h, c, g);
        fft_axes_inplace(ub, g.padded_shape(), g.axes, false);
        fft_axes_inplace(hb, g.padded_shape(), g.axes, false);
        for (std::size_t i = 0; i < ub.size(); ++i) {
            ub[i] *= hb[i];
        }
        fft_axes_inplace(ub, g.padded_shape(), g.axes, true);
        const auto from = causal_begin(support(u, c, g.length[0], g.length[1], g.channels), g);
        gather_add(out, ub, c, g.length[0], g.length[1], {-g.first_offset[0], -g.first_offset[1]}, g, from);
    });
    return out;
}

}  // namespace

std::size_t kernel_extent(std::size_t length, KernelAlign align) {
    switch (align) {
        case KernelAlign::causal:
            return length;
        case KernelAlign::centered:
            return 2 * length - 1;
        case KernelAlign::none:
            break;
    }
    return 1;
}

Tensor long_conv(const Tensor& u, const Tensor& kernel, std::span<const KernelAlign> aligns) {
    const auto g = make_geometry(u.shape(), kernel.shape(), aligns);
    return forward_impl(u, kernel, g);
}

Var long_conv(const Var& u, const Var& kernel, std::span<const KernelAlign> aligns) {
    const auto g = make_geometry(u.shape(), kernel.shape(), aligns);
    const auto& uv = u.value();
    const auto& hv = kernel.value();
    Tensor out = forward_impl(uv, hv, g);
    return u.tape()->record(std::move(out), {u, kernel}, [g, &uv, &hv](const Tensor& grad,
                                                                       std::span<Tensor* const> grads) {
        Tensor* gu = grads[0];
        Tensor* gh = grads[1];
        parallel_for(g.channels, [&](std::size_t c) {
            std::vector<Complex> gb(g.padded_size());
            std::vector<Complex> buf(g.padded_size());
            std::vector<Complex> other(g.padded_size());
            load(gb, grad, c, g.length[0], g.length[1], g);
            fft_axes_inplace(gb, g.padded_shape(), g.axes, false);
            // du[s] = sum_j h[j] g[s + lo + j]: correlation of g with h.
            if (gu) {
                load_kernel(other, hv, c, g);
                fft_axes_inplace(other, g.padded_shape(), g.axes, false);
                for (std::size_t i = 0; i < buf.size(); ++i) {
                    buf[i] = gb[i] * std::conj(other[i]);
                }
                fft_axes_inplace(buf, g.padded_shape(), g.axes, true);
                const auto to = causal_end(support(grad, c, g.length[0], g.length[1], g.channels), g);
                gather_add(*gu, buf, c, g.length[0], g.length[1], g.first_offset, g, {0, 0}, to);
            }
            // dh[j] = sum_s u[s] g[s + lo + j]: correlation of g with u.
            if (gh) {
                load(other, uv, c, g.length[0], g.length[1], g);
                fft_axes_inplace(other, g.padded_shape(), g.axes, false);
                for (std::size_t i = 0; i < buf.size(); ++i) {
                    buf[i] = gb[i] * std::conj(other[i]);
                }
                fft_axes_inplace(buf, g.padded_shape(), g.axes, true);
                gather_kernel_grad(*gh, buf, c, g);
            }
        });
    });
}

}  // namespace hpx
