#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hpx/metaformer.hpp"
#include "hpx/tensor.hpp"

namespace hpx {

struct ErfMap {
    Tensor grid{};  // [H, W], max-normalized to [0, 1]
    Tensor raw{};   // [H, W], mean absolute gradient before normalization
    std::size_t num_images{};
};

// Backpropagates from the channel sum at the centre of the last stage's
// output (before the final norm, whose channel sum is constant), accumulates |d/d input| summed over colour channels and
// averages over images.
ErfMap erf_map(const Model& model, const Tensor& images);

// Inclusive input-pixel box that can influence the centre output of the
// final feature map, or nullopt when a stage contains a global mixer.
struct PixelBox {
    std::size_t y0{}, y1{}, x0{}, x1{};
};
std::optional<PixelBox> center_receptive_field(const ModelConfig& config);

// Diameter of the smallest centred disk holding every tap whose value is at
// least threshold: 2 * max radius + 1, radius per tap_radius(); 0 when no tap
// survives. values has one entry per grid position.
double kernel_effective_diameter(const KernelGrid& grid, std::span<const double> values, double threshold);

struct CoverageRow {
    std::size_t stage{};  // 1-based
    std::size_t block{};  // 1-based
    double diameter{};    // mean over channels (and over filters for separable blocks)
    double coverage{};    // diameter / feature extent
};

// Window-based by default; full_kernel measures |kernel| normalized by its
// per-channel maximum instead.
std::vector<CoverageRow> coverage_report(const Model& model, double threshold = 0.05, bool full_kernel = false);
void write_coverage_csv(const std::filesystem::path& path, std::span<const CoverageRow> rows);

// Copy of model with the stage's (1-based) kernels truncated.
Model truncate_kernels(const Model& model, std::size_t stage, double relative_size);

struct BlockKernels {
    std::size_t stage{};  // 1-based
    std::size_t block{};  // 1-based
    std::vector<Tensor> kernels{};  // shaped per filter_extents + [C]
};
std::vector<BlockKernels> materialized_kernels(const Model& model);

struct BenchConfig {
    // Mixer names as in parse_mixer_variant plus "dense" for the direct
    // (2E-1)^2 convolution reference.
    std::vector<std::string> variants{"hpx", "dense"};
    std::vector<std::size_t> extents{32, 64, 128, 256};
    std::size_t channels{1};
    std::size_t repeats{5};
    std::size_t embed_dim{8};
    std::uint64_t seed{0};
};

struct BenchRow {
    std::string variant;
    std::size_t extent{};
    std::size_t channels{};
    double median_seconds{};
    std::size_t pixels{};
};

struct BenchTable {
    std::vector<BenchRow> rows{};
    std::map<std::string, double> slopes{};  // log-log slope of time vs pixel count
};

// Forward wall time of each mixer on an E x E map (sequence mixers on the
// flattened E^2 sequence), timed on a single thread.
BenchTable bench_runtime(const BenchConfig& config);
double loglog_slope(std::span<const double> x, std::span<const double> y);
void write_bench_csv(const std::filesystem::path& path, const BenchTable& table);

// Direct zero-padded centred 2D convolution of a [Ly, Lx, C] map with a
// [2Ly-1, 2Lx-1, C] kernel.
Tensor direct_centered_conv2d(const Tensor& u, const Tensor& kernel);

}  // namespace hpx
