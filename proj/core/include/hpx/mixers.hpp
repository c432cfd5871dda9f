#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hpx/autograd.hpp"
#include "hpx/implicit_filter.hpp"

// Token mixers. The Hyena recursion y_{i+1} = g(y_i) * p_{i+2}(x), y_0 = p_0(x) * p_1(x)
// is used at order 2 only, which collapses to y = g(q * k) * v with q, k, v the
// three projections of x and g a long implicit convolution.
namespace hpx {

enum class MixerVariant { causal_hyena, h_b, h_px, h_px_separable, local_conv };

std::string to_string(MixerVariant v);
MixerVariant parse_mixer_variant(const std::string& name);

struct MixerConfig {
    MixerVariant variant{MixerVariant::h_px};
    std::size_t channels{};
    // {L} for sequence mixers, {Ly, Lx} for 2D mixers.
    Shape extent{};
    std::size_t embed_dim{};  // K of the positional basis
    std::size_t short_conv_size{};
    std::size_t order{2};

    bool is_sequence() const { return variant == MixerVariant::causal_hyena || variant == MixerVariant::h_b; }
    bool has_long_conv() const { return variant != MixerVariant::local_conv; }
    void validate() const;
};

// Long-convolution kernel extents: {L} causal, {2L-1} h_b, {2Ly-1, 2Lx-1} h_px,
// and {2Lx-1}, {2Ly-1} for the horizontal and vertical separable kernels.
std::vector<Shape> filter_extents(const MixerConfig& config);

// Positional grids of the implicit filters a mixer uses, in the order of filter_extents.
std::vector<KernelGrid> mixer_kernel_grids(const MixerConfig& config);

// Pointwise C -> 3C then depthwise short conv over the 3C map.
struct ProjectionVars {
    Var pointwise_w;  // [C, 3C]
    Var pointwise_b;  // [3C]
    Var depthwise_w;  // [k, k, 3C] (2D) or [1, k, 3C] (1D)
    Var depthwise_b;  // [3C]
};

struct QKV {
    Var q, k, v;
};

// x is [L, C] or [Ly, Lx, C]. For sequences the short conv is causal (left
// padded) when causal is set, centered otherwise.
QKV project_qkv(const Var& x, const ProjectionVars& proj, bool causal = false);

// kernel [L, C], causal taps. y = g(q * k) * v keeping the L left outputs.
Var hyena_causal_mix(const Var& x, const ProjectionVars& proj, const Var& kernel);
// kernel [2L-1, C] centered at offset 0.
Var hyena_bidirectional_mix(const Var& x, const ProjectionVars& proj, const Var& kernel);
// x [Ly, Lx, C], kernel [2Ly-1, 2Lx-1, C] centered.
Var hyena_pixel_mix(const Var& x, const ProjectionVars& proj, const Var& kernel);
// Horizontal kernel [2Lx-1, C] then vertical kernel [2Ly-1, C].
Var separable_mix(const Var& x, const ProjectionVars& proj, const Var& kernel_h, const Var& kernel_v);

// Inverted separable block: pointwise C -> E, 7x7 depthwise, StarReLU, pointwise E -> C.
struct LocalConvVars {
    Var expand_w, expand_b;      // [C, E], [E]
    Var depthwise_w, depthwise_b;  // [7, 7, E], [E]
    Var act_scale, act_bias;     // [1], [1]
    Var contract_w, contract_b;  // [E, C], [C]
};

inline constexpr std::size_t kLocalConvKernel = 7;

Var local_conv_mix(const Var& x, const LocalConvVars& params);

}  // namespace hpx
