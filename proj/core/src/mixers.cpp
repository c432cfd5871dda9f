#include "hpx/mixers.hpp"

#include <array>

#include "hpx/long_conv.hpp"
#include "hpx/ops.hpp"

namespace hpx {

namespace {

void require_rank(const char* op, const Var& x, std::size_t rank) {
    if (x.shape().size() != rank) {
        throw Error(std::string(op) + ": expected rank-" + std::to_string(rank) + " input, got " +
                    shape_str(x.shape()));
    }
}

Var gate(const QKV& qkv, const Var& conv_out) { return mul(conv_out, qkv.v); }

}  // namespace

std::string to_string(MixerVariant v) {
    switch (v) {
        case MixerVariant::causal_hyena:
            return "causal";
        case MixerVariant::h_b:
            return "hb";
        case MixerVariant::h_px:
            return "hpx";
        case MixerVariant::h_px_separable:
            return "hpx_sep";
        case MixerVariant::local_conv:
            return "local";
    }
    return "?";
}

MixerVariant parse_mixer_variant(const std::string& name) {
    for (auto v : {MixerVariant::causal_hyena, MixerVariant::h_b, MixerVariant::h_px, MixerVariant::h_px_separable,
                   MixerVariant::local_conv}) {
        if (to_string(v) == name) {
            return v;
        }
    }
    throw Error("unknown mixer variant '" + name + "' (expected causal, hb, hpx, hpx_sep or local)");
}

void MixerConfig::validate() const {
    if (order != 2) {
        throw Error("mixer order must be 2");
    }
    if (channels == 0) {
        throw Error("mixer channel count must be positive");
    }
    const std::size_t rank = is_sequence() ? 1 : 2;
    if (extent.size() != rank || extent[0] == 0 || extent.back() == 0) {
        throw Error("mixer " + to_string(variant) + " needs a rank-" + std::to_string(rank) + " extent, got " +
                    shape_str(extent));
    }
    if (has_long_conv() && embed_dim == 0) {
        throw Error("mixer embedding dimension must be positive");
    }
    if (variant == MixerVariant::h_px && embed_dim % 2 != 0) {
        throw Error("hpx mixer needs an even embedding dimension");
    }
}

std::vector<Shape> filter_extents(const MixerConfig& config) {
    const auto& e = config.extent;
    switch (config.variant) {
        case MixerVariant::causal_hyena:
            return {{e[0]}};
        case MixerVariant::h_b:
            return {{2 * e[0] - 1}};
        case MixerVariant::h_px:
            return {{2 * e[0] - 1, 2 * e[1] - 1}};
        case MixerVariant::h_px_separable:
            return {{2 * e[1] - 1}, {2 * e[0] - 1}};
        case MixerVariant::local_conv:
            break;
    }
    return {};
}

std::vector<KernelGrid> mixer_kernel_grids(const MixerConfig& config) {
    config.validate();
    const auto& e = config.extent;
    const std::size_t k = config.embed_dim;
    switch (config.variant) {
        case MixerVariant::causal_hyena:
            return {causal_grid(e[0], k)};
        case MixerVariant::h_b:
            return {bidirectional_grid(e[0], k)};
        case MixerVariant::h_px:
            return {pixel_grid(e[0], e[1], k)};
        case MixerVariant::h_px_separable:
            return {bidirectional_grid(e[1], k), bidirectional_grid(e[0], k)};
        case MixerVariant::local_conv:
            break;
    }
    return {};
}

QKV project_qkv(const Var& x, const ProjectionVars& proj, bool causal) {
    const auto& xs = x.shape();
    if (xs.size() != 2 && xs.size() != 3) {
        throw Error("project_qkv: expected [L, C] or [Ly, Lx, C] input, got " + shape_str(xs));
    }
    const std::size_t c = xs.back();
    if (proj.pointwise_w.shape() != Shape{c, 3 * c}) {
        throw Error("project_qkv: input has " + std::to_string(c) + " channels but projection is " +
                    shape_str(proj.pointwise_w.shape()));
    }
    const Var wide = linear(x, proj.pointwise_w, proj.pointwise_b);
    const auto& ks = proj.depthwise_w.shape();
    Var local;
    if (xs.size() == 2) {
        if (ks.size() != 3 || ks[0] != 1) {
            throw Error("project_qkv: sequence inputs need a [1, k, 3C] short conv");
        }
        const std::size_t kw = ks[1];
        const Var as_map = reshape(wide, {1, xs[0], 3 * c});
        const Var conv = depthwise_conv2d(as_map, proj.depthwise_w, 0, causal ? kw - 1 : kw / 2);
        local = reshape(conv, {xs[0], 3 * c});
    } else {
        local = depthwise_conv2d(wide, proj.depthwise_w, ks[0] / 2, ks[1] / 2);
    }
    local = add_channel(local, proj.depthwise_b);
    return {slice_channels(local, 0, c), slice_channels(local, c, c), slice_channels(local, 2 * c, c)};
}

Var hyena_causal_mix(const Var& x, const ProjectionVars& proj, const Var& kernel) {
    require_rank("hyena_causal_mix", x, 2);
    const QKV qkv = project_qkv(x, proj, true);
    const std::array<KernelAlign, 1> align{KernelAlign::causal};
    return gate(qkv, long_conv(mul(qkv.q, qkv.k), kernel, align));
}

Var hyena_bidirectional_mix(const Var& x, const ProjectionVars& proj, const Var& kernel) {
    require_rank("hyena_bidirectional_mix", x, 2);
    const QKV qkv = project_qkv(x, proj);
    const std::array<KernelAlign, 1> align{KernelAlign::centered};
    return gate(qkv, long_conv(mul(qkv.q, qkv.k), kernel, align));
}

Var hyena_pixel_mix(const Var& x, const ProjectionVars& proj, const Var& kernel) {
    require_rank("hyena_pixel_mix", x, 3);
    const auto& xs = x.shape();
    if (kernel.shape().size() != 3 || kernel.shape()[0] != 2 * xs[0] - 1 || kernel.shape()[1] != 2 * xs[1] - 1) {
        throw Error("hyena_pixel_mix: kernel " + shape_str(kernel.shape()) + " does not match map " + shape_str(xs));
    }
    const QKV qkv = project_qkv(x, proj);
    const std::array<KernelAlign, 2> align{KernelAlign::centered, KernelAlign::centered};
    return gate(qkv, long_conv(mul(qkv.q, qkv.k), kernel, align));
}

Var separable_mix(const Var& x, const ProjectionVars& proj, const Var& kernel_h, const Var& kernel_v) {
    require_rank("separable_mix", x, 3);
    const auto& xs = x.shape();
    const std::size_t c = xs[2];
    if (kernel_h.shape() != Shape{2 * xs[1] - 1, c} || kernel_v.shape() != Shape{2 * xs[0] - 1, c}) {
        throw Error("separable_mix: kernels " + shape_str(kernel_h.shape()) + ", " + shape_str(kernel_v.shape()) +
                    " do not match map " + shape_str(xs));
    }
    const QKV qkv = project_qkv(x, proj);
    const std::array<KernelAlign, 2> horizontal{KernelAlign::none, KernelAlign::centered};
    const std::array<KernelAlign, 2> vertical{KernelAlign::centered, KernelAlign::none};
    const Var row = long_conv(mul(qkv.q, qkv.k), reshape(kernel_h, {1, 2 * xs[1] - 1, c}), horizontal);
    const Var both = long_conv(row, reshape(kernel_v, {2 * xs[0] - 1, 1, c}), vertical);
    return gate(qkv, both);
}

Var local_conv_mix(const Var& x, const LocalConvVars& p) {
    require_rank("local_conv_mix", x, 3);
    const Var wide = linear(x, p.expand_w, p.expand_b);
    const std::size_t k = p.depthwise_w.shape()[0];
    const Var spatial = add_channel(depthwise_conv2d(wide, p.depthwise_w, k / 2, k / 2), p.depthwise_b);
    return linear(star_relu(spatial, p.act_scale, p.act_bias), p.contract_w, p.contract_b);
}

}  // namespace hpx
