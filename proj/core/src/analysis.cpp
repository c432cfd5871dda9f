#include "hpx/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <random>

#include "hpx/long_conv.hpp"
#include "hpx/mixers.hpp"
#include "hpx/ops.hpp"
#include "hpx/parallel.hpp"

namespace hpx {

ErfMap erf_map(const Model& model, const Tensor& images) {
    const auto& s = images.shape();
    const auto& cfg = model.config();
    if (s.size() != 4 || s[0] == 0 || s[1] != cfg.input_height || s[2] != cfg.input_width || s[3] != 3) {
        throw Error("erf: images " + shape_str(s) + " do not match [N>=1, " + std::to_string(cfg.input_height) + ", " +
                    std::to_string(cfg.input_width) + ", 3]");
    }
    const std::size_t n = s[0], h = s[1], w = s[2];
    ErfMap out;
    out.raw = Tensor({h, w});
    out.num_images = n;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor img({h, w, 3});
        std::copy_n(images.data().data() + i * h * w * 3, h * w * 3, img.data().data());
        Tape tape;
        auto bound = model.bind(tape, false);
        const Var x = tape.leaf(std::move(img));
        const Var f = bound.stage_output(x);
        const auto& fs = f.shape();
        Tensor seed(fs);
        const std::size_t c = fs[2];
        const std::size_t centre = (fs[0] / 2) * fs[1] + fs[1] / 2;
        for (std::size_t ch = 0; ch < c; ++ch) {
            seed[centre * c + ch] = 1.0;
        }
        tape.backward(f, seed);
        const Tensor& g = tape.grad(x);
        for (std::size_t p = 0; p < h * w; ++p) {
            out.raw[p] += (std::abs(g[3 * p]) + std::abs(g[3 * p + 1]) + std::abs(g[3 * p + 2])) / static_cast<double>(n);
        }
    }
    const double mx = out.raw.max_abs();
    if (mx == 0.0) {
        throw Error("erf: the centre output has no input gradient");
    }
    out.grid = out.raw;
    for (auto& v : out.grid.data()) {
        v /= mx;
    }
    return out;
}

std::optional<PixelBox> center_receptive_field(const ModelConfig& config) {
    config.validate();
    struct Layer {
        std::size_t kernel, stride, pad, in_h, in_w;
    };
    std::vector<Layer> layers;
    const auto shapes = stage_shapes(config);
    layers.push_back({kStemKernel, kStemStride, kStemPad, config.input_height, config.input_width});
    for (std::size_t si = 0; si < config.stages.size(); ++si) {
        if (si > 0) {
            layers.push_back({kDownKernel, kDownStride, kDownPad, shapes[si - 1].height, shapes[si - 1].width});
        }
        if (config.stages[si].mixer != MixerVariant::local_conv) {
            return std::nullopt;
        }
        for (std::size_t b = 0; b < config.stages[si].blocks; ++b) {
            layers.push_back({kLocalConvKernel, 1, kLocalConvKernel / 2, shapes[si].height, shapes[si].width});
        }
    }
    long y0 = static_cast<long>(shapes.back().height / 2), y1 = y0;
    long x0 = static_cast<long>(shapes.back().width / 2), x1 = x0;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        const long k = static_cast<long>(it->kernel), st = static_cast<long>(it->stride), p = static_cast<long>(it->pad);
        y0 = std::max(0L, y0 * st - p);
        x0 = std::max(0L, x0 * st - p);
        y1 = std::min(static_cast<long>(it->in_h) - 1, y1 * st - p + k - 1);
        x1 = std::min(static_cast<long>(it->in_w) - 1, x1 * st - p + k - 1);
    }
    return PixelBox{static_cast<std::size_t>(y0), static_cast<std::size_t>(y1), static_cast<std::size_t>(x0),
                    static_cast<std::size_t>(x1)};
}

double kernel_effective_diameter(const KernelGrid& grid, std::span<const double> values, double threshold) {
    if (!(threshold > 0.0)) {
        throw Error("kernel_effective_diameter: threshold must be positive");
    }
    if (values.size() != grid.num_positions()) {
        throw Error("kernel_effective_diameter: expected " + std::to_string(grid.num_positions()) + " values, got " +
                    std::to_string(values.size()));
    }
    const Tensor r = tap_radius(grid);
    double radius = -1.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] >= threshold) {
            radius = std::max(radius, r[i]);
        }
    }
    return radius < 0.0 ? 0.0 : 2.0 * radius + 1.0;
}

namespace {

// Mean diameter over the C channels of a [P, C] value table.
double mean_channel_diameter(const KernelGrid& grid, const Tensor& table, double threshold, bool normalize) {
    const std::size_t p = table.dim(0), c = table.dim(1);
    std::vector<double> column(p);
    double total = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double mx = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            column[i] = normalize ? std::abs(table[i * c + ch]) : table[i * c + ch];
            mx = std::max(mx, column[i]);
        }
        if (normalize && mx > 0.0) {
            for (auto& v : column) {
                v /= mx;
            }
        }
        total += kernel_effective_diameter(grid, column, threshold);
    }
    return total / static_cast<double>(c);
}

}  // namespace

std::vector<CoverageRow> coverage_report(const Model& model, double threshold, bool full_kernel) {
    std::vector<CoverageRow> rows;
    Tape tape(false);
    auto bound = model.bind(tape, false);
    const auto shapes = stage_shapes(model.config());
    for (const auto& info : model.blocks()) {
        CoverageRow row{info.stage + 1, info.block + 1, 0.0, 0.0};
        if (!info.mixer.has_long_conv()) {
            row.diameter = static_cast<double>(kLocalConvKernel);
            row.coverage = row.diameter / static_cast<double>(std::max(shapes[info.stage].height, shapes[info.stage].width));
            rows.push_back(row);
            continue;
        }
        const auto& grids = model.stage_grids(info.stage);
        double extent_sum = 0.0;
        double diameter_sum = 0.0;
        for (std::size_t fi = 0; fi < info.filters.size(); ++fi) {
            const auto& grid = grids[fi];
            Tensor table;
            if (full_kernel) {
                const Var& k = bound.kernels(info.stage, info.block)[fi];
                table = k.value().reshaped({grid.num_positions(), k.shape().back()});
            } else {
                const auto& f = info.filters[fi];
                table = decay_window(tape.constant(model.params()[f.alpha].value),
                                     tape.constant(model.params()[f.bias].value), grid.distances)
                            .value();
            }
            diameter_sum += mean_channel_diameter(grid, table, threshold, full_kernel);
            extent_sum += static_cast<double>(grid_feature_extent(grid));
        }
        const double nf = static_cast<double>(info.filters.size());
        row.diameter = diameter_sum / nf;
        row.coverage = row.diameter / (extent_sum / nf);
        rows.push_back(row);
    }
    return rows;
}

void write_coverage_csv(const std::filesystem::path& path, std::span<const CoverageRow> rows) {
    std::ofstream os(path);
    if (!os) {
        throw Error("cannot write " + path.string());
    }
    os.precision(10);
    os << "stage,block,diameter,coverage\n";
    for (const auto& r : rows) {
        os << r.stage << ',' << r.block << ',' << r.diameter << ',' << r.coverage << '\n';
    }
}

Model truncate_kernels(const Model& model, std::size_t stage, double relative_size) {
    if (stage < 1 || stage > model.config().stages.size()) {
        throw Error("truncate: stage must be in 1.." + std::to_string(model.config().stages.size()));
    }
    Model copy = model;
    copy.set_truncation(stage - 1, relative_size);
    return copy;
}

std::vector<BlockKernels> materialized_kernels(const Model& model) {
    std::vector<BlockKernels> out;
    Tape tape(false);
    auto bound = model.bind(tape, false);
    for (const auto& info : model.blocks()) {
        if (!info.mixer.has_long_conv()) {
            continue;
        }
        BlockKernels bk{info.stage + 1, info.block + 1, {}};
        for (const auto& k : bound.kernels(info.stage, info.block)) {
            bk.kernels.push_back(k.value());
        }
        out.push_back(std::move(bk));
    }
    return out;
}

Tensor direct_centered_conv2d(const Tensor& u, const Tensor& kernel) {
    const std::size_t ly = u.dim(0), lx = u.dim(1), c = u.dim(2);
    const std::size_t ky = 2 * ly - 1, kx = 2 * lx - 1;
    if (kernel.shape() != Shape{ky, kx, c}) {
        throw Error("direct_centered_conv2d: kernel " + shape_str(kernel.shape()) + " does not match " +
                    shape_str(u.shape()));
    }
    Tensor out(u.shape());
    std::vector<double> plane(ly * lx), flipped(ky * kx);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < ly * lx; ++i) {
            plane[i] = u[i * c + ch];
        }
        // Flipped kernel so the innermost loop walks both arrays forwards.
        for (std::size_t i = 0; i < ky * kx; ++i) {
            flipped[ky * kx - 1 - i] = kernel[i * c + ch];
        }
        for (std::size_t iy = 0; iy < ly; ++iy) {
            for (std::size_t ix = 0; ix < lx; ++ix) {
                double acc = 0.0;
                for (std::size_t sy = 0; sy < ly; ++sy) {
                    const double* row = plane.data() + sy * lx;
                    // Tap (iy - sy + ly - 1, ix - sx + lx - 1) sits at flipped (sy - iy + ly - 1, sx - ix + lx - 1).
                    const double* k = flipped.data() + (sy + ly - 1 - iy) * kx + (lx - 1 - ix);
                    for (std::size_t sx = 0; sx < lx; ++sx) {
                        acc += row[sx] * k[sx];
                    }
                }
                out[(iy * lx + ix) * c + ch] = acc;
            }
        }
    }
    return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw Error("loglog_slope: need at least two matching points");
    }
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

// Builds one timed closure for a variant at extent e.
std::function<void()> make_workload(const std::string& variant, std::size_t e, const BenchConfig& cfg,
                                    std::mt19937_64& rng) {
    const std::size_t c = cfg.channels;
    if (variant == "dense") {
        auto u = std::make_shared<Tensor>(random_tensor({e, e, c}, rng));
        auto k = std::make_shared<Tensor>(random_tensor({2 * e - 1, 2 * e - 1, c}, rng));
        return [u, k] { (void)direct_centered_conv2d(*u, *k); };
    }
    MixerConfig mc;
    mc.variant = parse_mixer_variant(variant);
    mc.channels = c;
    mc.embed_dim = cfg.embed_dim;
    mc.extent = mc.is_sequence() ? Shape{e * e} : Shape{e, e};
    mc.short_conv_size = mc.is_sequence() ? 3 : (mc.variant == MixerVariant::local_conv ? kLocalConvKernel : 5);
    mc.validate();
    Shape in_shape = mc.extent;
    in_shape.push_back(c);
    auto x = std::make_shared<Tensor>(random_tensor(in_shape, rng));
    if (mc.variant == MixerVariant::local_conv) {
        auto p = std::make_shared<std::vector<Tensor>>(std::vector<Tensor>{
            random_tensor({c, 2 * c}, rng), random_tensor({2 * c}, rng),
            random_tensor({kLocalConvKernel, kLocalConvKernel, 2 * c}, rng), random_tensor({2 * c}, rng),
            Tensor({1}, kStarReluScale), Tensor({1}, kStarReluBias), random_tensor({2 * c, c}, rng),
            random_tensor({c}, rng)});
        return [x, p] {
            Tape tape(false);
            const auto& v = *p;
            (void)local_conv_mix(tape.constant(*x), {tape.constant(v[0]), tape.constant(v[1]), tape.constant(v[2]),
                                                     tape.constant(v[3]), tape.constant(v[4]), tape.constant(v[5]),
                                                     tape.constant(v[6]), tape.constant(v[7])});
        };
    }
    const std::size_t kh = mc.is_sequence() ? 1 : mc.short_conv_size;
    auto proj = std::make_shared<std::vector<Tensor>>(std::vector<Tensor>{
        random_tensor({c, 3 * c}, rng), random_tensor({3 * c}, rng),
        random_tensor({kh, mc.short_conv_size, 3 * c}, rng), random_tensor({3 * c}, rng)});
    auto kernels = std::make_shared<std::vector<Tensor>>();
    for (auto s : filter_extents(mc)) {
        s.push_back(c);
        kernels->push_back(random_tensor(s, rng));
    }
    const MixerVariant v = mc.variant;
    return [x, proj, kernels, v] {
        Tape tape(false);
        const auto& p = *proj;
        const ProjectionVars pv{tape.constant(p[0]), tape.constant(p[1]), tape.constant(p[2]), tape.constant(p[3])};
        const Var in = tape.constant(*x);
        const auto& k = *kernels;
        switch (v) {
            case MixerVariant::causal_hyena:
                (void)hyena_causal_mix(in, pv, tape.constant(k[0]));
                break;
            case MixerVariant::h_b:
                (void)hyena_bidirectional_mix(in, pv, tape.constant(k[0]));
                break;
            case MixerVariant::h_px:
                (void)hyena_pixel_mix(in, pv, tape.constant(k[0]));
                break;
            case MixerVariant::h_px_separable:
                (void)separable_mix(in, pv, tape.constant(k[0]), tape.constant(k[1]));
                break;
            case MixerVariant::local_conv:
                break;
        }
    };
}

// Restores the worker count when the timed region ends.
struct SingleThreadScope {
    std::size_t saved = worker_count();
    SingleThreadScope() { set_worker_count(1); }
    ~SingleThreadScope() { set_worker_count(saved); }
    SingleThreadScope(const SingleThreadScope&) = delete;
    SingleThreadScope& operator=(const SingleThreadScope&) = delete;
};

}  // namespace

BenchTable bench_runtime(const BenchConfig& config) {
    if (config.repeats < 5) {
        throw Error("bench: repeats must be >= 5");
    }
    if (config.variants.empty() || config.extents.empty() || config.channels == 0) {
        throw Error("bench: need at least one variant, one extent and one channel");
    }
    std::mt19937_64 rng(config.seed);
    BenchTable table;
    const SingleThreadScope single;
    for (const auto& variant : config.variants) {
        std::vector<double> px, secs;
        for (auto e : config.extents) {
            if (e == 0) {
                throw Error("bench: extents must be positive");
            }
            const auto work = make_workload(variant, e, config, rng);
            work();  // warm plan caches
            std::vector<double> times;
            for (std::size_t r = 0; r < config.repeats; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                work();
                times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            }
            std::sort(times.begin(), times.end());
            const double median = times.size() % 2 == 1 ? times[times.size() / 2]
                                                        : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
            table.rows.push_back({variant, e, config.channels, median, e * e});
            px.push_back(static_cast<double>(e * e));
            secs.push_back(median);
        }
        if (px.size() >= 2) {
            table.slopes[variant] = loglog_slope(px, secs);
        }
    }
    return table;
}

void write_bench_csv(const std::filesystem::path& path, const BenchTable& table) {
    std::ofstream os(path);
    if (!os) {
        throw Error("cannot write " + path.string());
    }
    os.precision(10);
    os << "variant,extent,channels,pixels,median_seconds\n";
    for (const auto& r : table.rows) {
        os << r.variant << ',' << r.extent << ',' << r.channels << ',' << r.pixels << ',' << r.median_seconds << '\n';
    }
}

}  // namespace hpx
