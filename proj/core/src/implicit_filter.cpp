#include "hpx/implicit_filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hpx/ops.hpp"

namespace hpx {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// sin/cos features of one axis offset, written into row[0 .. width).
void encode_axis(double* row, std::size_t width, double t, double period) {
    std::size_t col = 0;
    for (std::size_t f = 1; col < width; ++f) {
        const double phase = kTwoPi * static_cast<double>(f) * t / period;
        if (col + 1 < width) {
            row[col++] = std::sin(phase);
            row[col++] = std::cos(phase);
        } else {
            row[col++] = std::cos(phase);
        }
    }
}

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

KernelGrid grid_1d(WindowVariant variant, std::size_t length, std::size_t k, double scale) {
    const bool causal = variant == WindowVariant::causal;
    const std::size_t taps = causal ? length : 2 * length - 1;
    const long first = causal ? 0L : -static_cast<long>(length - 1);
    KernelGrid g;
    g.variant = variant;
    g.extent = {taps};
    g.distance_scale = {1.0, scale};
    g.features = build_basis_1d(taps, taps, k, first).features;
    g.positions = Tensor({taps, 1});
    for (std::size_t i = 0; i < taps; ++i) {
        g.positions[i] = static_cast<double>(first + static_cast<long>(i));
    }
    WindowParams w;
    w.variant = variant;
    g.distances = window_distances(w, g.positions, g.distance_scale);
    return g;
}

KernelGrid grid_2d(std::size_t ly, std::size_t lx, std::size_t k, std::array<double, 2> scale) {
    const std::size_t ky = 2 * ly - 1, kx = 2 * lx - 1;
    KernelGrid g;
    g.variant = WindowVariant::radial2d;
    g.extent = {ky, kx};
    g.distance_scale = scale;
    g.features = build_basis_2d(lx, ly, k).features;
    g.positions = Tensor({ky * kx, 2});
    for (std::size_t y = 0; y < ky; ++y) {
        for (std::size_t x = 0; x < kx; ++x) {
            g.positions[(y * kx + x) * 2] = static_cast<double>(y) - static_cast<double>(ly - 1);
            g.positions[(y * kx + x) * 2 + 1] = static_cast<double>(x) - static_cast<double>(lx - 1);
        }
    }
    WindowParams w;
    w.variant = WindowVariant::radial2d;
    g.distances = window_distances(w, g.positions, g.distance_scale);
    return g;
}

}  // namespace

PositionalBasis1D build_basis_1d(std::size_t filter_length, std::size_t period, std::size_t k, long first_position) {
    if (k == 0) {
        throw Error("build_basis_1d: embedding dimension K must be >= 1");
    }
    if (filter_length == 0 || period == 0) {
        throw Error("build_basis_1d: filter length and period must be >= 1");
    }
    const std::size_t width = 2 * k - 1;
    PositionalBasis1D b{filter_length, period, k, first_position, Tensor({filter_length, width})};
    for (std::size_t i = 0; i < filter_length; ++i) {
        double* row = b.features.data().data() + i * width;
        row[0] = 1.0;
        const double t = static_cast<double>(first_position + static_cast<long>(i));
        for (std::size_t f = 1; f < k; ++f) {
            const double phase = kTwoPi * static_cast<double>(f) * t / static_cast<double>(period);
            row[2 * f - 1] = std::sin(phase);
            row[2 * f] = std::cos(phase);
        }
    }
    return b;
}

PositionalBasis2D build_basis_2d(std::size_t lx, std::size_t ly, std::size_t k) {
    if (k == 0 || k % 2 != 0) {
        throw Error("build_basis_2d: K must be even and positive, got " + std::to_string(k));
    }
    if (lx == 0 || ly == 0) {
        throw Error("build_basis_2d: extents must be >= 1");
    }
    const std::size_t ky = 2 * ly - 1, kx = 2 * lx - 1;
    const std::size_t half = k / 2;
    PositionalBasis2D b{lx, ly, k, Tensor({ky * kx, k})};
    for (std::size_t y = 0; y < ky; ++y) {
        for (std::size_t x = 0; x < kx; ++x) {
            double* row = b.features.data().data() + (y * kx + x) * k;
            encode_axis(row, half, static_cast<double>(y) - static_cast<double>(ly - 1), static_cast<double>(ky));
            encode_axis(row + half, half, static_cast<double>(x) - static_cast<double>(lx - 1),
                        static_cast<double>(kx));
        }
    }
    return b;
}

std::size_t grid_feature_extent(const KernelGrid& grid) {
    if (grid.variant == WindowVariant::causal) {
        return grid.extent[0];
    }
    std::size_t f = 0;
    for (auto k : grid.extent) {
        f = std::max(f, (k + 1) / 2);
    }
    return f;
}

Tensor tap_radius(const KernelGrid& grid) {
    const double cap = static_cast<double>(grid_feature_extent(grid) - 1);
    const std::size_t p = grid.num_positions();
    const std::size_t dims = grid.positions.dim(1);
    Tensor r({p});
    for (std::size_t i = 0; i < p; ++i) {
        double d2 = 0.0;
        for (std::size_t a = 0; a < dims; ++a) {
            d2 += grid.positions[i * dims + a] * grid.positions[i * dims + a];
        }
        r[i] = std::min(std::sqrt(d2), cap);
    }
    return r;
}

KernelGrid causal_grid(std::size_t length, std::size_t k) { return grid_1d(WindowVariant::causal, length, k, 1.0); }

KernelGrid bidirectional_grid(std::size_t length, std::size_t k) {
    return grid_1d(WindowVariant::bidirectional, length, k, 1.0);
}

KernelGrid pixel_grid(std::size_t ly, std::size_t lx, std::size_t k) { return grid_2d(ly, lx, k, {1.0, 1.0}); }

Tensor window_distances(const WindowParams& window, const Tensor& positions, std::array<double, 2> scale) {
    const std::size_t dims = positions.rank() == 2 ? positions.dim(1) : 0;
    const bool want_2d = window.variant == WindowVariant::radial2d;
    if (dims != (want_2d ? 2u : 1u)) {
        throw Error("window: positions " + shape_str(positions.shape()) + " do not match the window variant");
    }
    const std::size_t p = positions.dim(0);
    Tensor d({p});
    for (std::size_t i = 0; i < p; ++i) {
        if (want_2d) {
            const double dy = scale[0] * positions[2 * i] - window.center_y;
            const double dx = scale[1] * positions[2 * i + 1] - window.center_x;
            d[i] = std::sqrt(dy * dy + dx * dx);
        } else {
            const double t = scale[1] * positions[i];
            if (window.variant == WindowVariant::causal && t < 0.0) {
                throw Error("window: causal window needs non-negative offsets");
            }
            d[i] = std::abs(t);
        }
    }
    return d;
}

Tensor eval_window(const WindowParams& window, const Tensor& positions) {
    Tape tape(false);
    const Var a = tape.constant(window.alpha);
    const Var b = tape.constant(window.bias);
    return decay_window(a, b, window_distances(window, positions)).value();
}

std::size_t FilterFFN::num_params() const {
    return w0.size() + b0.size() + w1.size() + b1.size() + w2.size() + b2.size();
}

FilterFFN FilterFFN::init(std::size_t in_features, std::size_t hidden, std::size_t channels, std::mt19937_64& rng) {
    FilterFFN f;
    f.w0 = uniform({in_features, hidden}, 1.0 / std::sqrt(static_cast<double>(in_features)), rng);
    f.b0 = uniform({hidden}, 1.0 / std::sqrt(static_cast<double>(in_features)), rng);
    f.w1 = uniform({hidden, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    f.b1 = uniform({hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    f.w2 = uniform({hidden, channels}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    f.b2 = Tensor({channels}, 0.0);
    return f;
}

WindowParams init_window(WindowVariant variant, std::size_t channels, std::size_t length, std::mt19937_64& rng) {
    const double unit = std::numbers::ln2 / static_cast<double>(std::max<std::size_t>(length, 1));
    std::uniform_real_distribution<double> dist(unit, 5.0 * unit);
    WindowParams w;
    w.variant = variant;
    w.alpha = Tensor({channels});
    for (auto& v : w.alpha.data()) {
        v = dist(rng);
    }
    w.bias = Tensor({channels}, 0.0);
    return w;
}

Var filter_ffn_forward(const Var& features, const FilterFFNVars& ffn) {
    const Var h0 = sin(linear(features, ffn.w0, ffn.b0));
    const Var h1 = sin(linear(h0, ffn.w1, ffn.b1));
    return linear(h1, ffn.w2, ffn.b2);
}

Var materialize_filter(const KernelGrid& grid, const FilterFFNVars& ffn, const Var& alpha, const Var& bias) {
    if (ffn.w2.shape()[1] != alpha.shape()[0]) {
        throw Error("materialize_filter: FFN produces " + std::to_string(ffn.w2.shape()[1]) +
                    " channels but the window has " + std::to_string(alpha.shape()[0]));
    }
    Tape& tape = *alpha.tape();
    const Var features = tape.constant(grid.features);
    const Var response = filter_ffn_forward(features, ffn);
    return mul(response, decay_window(alpha, bias, grid.distances));
}

Tensor materialize_filter(const KernelGrid& grid, const FilterFFN& ffn, const WindowParams& window) {
    if (ffn.channels() != window.alpha.size() || window.alpha.size() != window.bias.size()) {
        throw Error("materialize_filter: channel-count mismatch between FFN and window");
    }
    if (ffn.in_features() != grid.feature_dim()) {
        throw Error("materialize_filter: FFN expects " + std::to_string(ffn.in_features()) + " features, basis has " +
                    std::to_string(grid.feature_dim()));
    }
    if (window.variant != grid.variant) {
        throw Error("materialize_filter: window variant does not match the kernel grid");
    }
    Tape tape(false);
    const FilterFFNVars vars{tape.constant(ffn.w0), tape.constant(ffn.b0), tape.constant(ffn.w1),
                             tape.constant(ffn.b1), tape.constant(ffn.w2), tape.constant(ffn.b2)};
    const Var features = tape.constant(grid.features);
    const Var response = filter_ffn_forward(features, vars);
    const Var win = decay_window(tape.constant(window.alpha), tape.constant(window.bias),
                                 window_distances(window, grid.positions, grid.distance_scale));
    return mul(response, win).value();
}

KernelGrid resample_grid(WindowVariant variant, std::size_t k, const Shape& old_size, const Shape& new_size) {
    const std::size_t axes = variant == WindowVariant::radial2d ? 2 : 1;
    if (old_size.size() != axes || new_size.size() != axes) {
        throw Error("resample: size rank does not match the window variant");
    }
    for (std::size_t a = 0; a < axes; ++a) {
        if (new_size[a] == 0 || old_size[a] == 0) {
            throw Error("resample: sizes must be >= 1");
        }
    }
    auto period = [variant](std::size_t l) {
        return static_cast<double>(variant == WindowVariant::causal ? l : 2 * l - 1);
    };
    if (axes == 1) {
        return grid_1d(variant, new_size[0], k, period(old_size[0]) / period(new_size[0]));
    }
    return grid_2d(new_size[0], new_size[1], k,
                   {period(old_size[0]) / period(new_size[0]), period(old_size[1]) / period(new_size[1])});
}

Tensor resample_filter(const FilterFFN& ffn, const WindowParams& window, std::size_t k, const Shape& old_size,
                       const Shape& new_size) {
    return materialize_filter(resample_grid(window.variant, k, old_size, new_size), ffn, window);
}

}  // namespace hpx
