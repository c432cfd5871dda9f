#include "hpx/metaformer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "hpx/long_conv.hpp"
#include "hpx/ops.hpp"
#include "hpx/tensor_io.hpp"
#include "json.hpp"
#include "json_util.hpp"

namespace hpx {

using nlohmann::json;
using detail::reject_leftovers;
using detail::take;

namespace {

constexpr std::array<std::size_t, 3> kPresetChannels{64, 128, 320};

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

double fan_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

std::vector<MixerVariant> layout_mixers(const std::string& layout) {
    using M = MixerVariant;
    if (layout == "hpx") return {M::h_px, M::h_px, M::h_px, M::h_px};
    if (layout == "hb") return {M::h_b, M::h_b, M::h_b, M::h_b};
    if (layout == "chpx") return {M::local_conv, M::local_conv, M::h_px, M::h_px};
    if (layout == "hpxsep") return {M::h_px_separable, M::h_px_separable, M::h_px_separable, M::h_px_separable};
    if (layout == "causal") return {M::causal_hyena, M::causal_hyena, M::causal_hyena, M::causal_hyena};
    if (layout == "conv") return {M::local_conv, M::local_conv, M::local_conv, M::local_conv};
    throw Error("unknown mixer layout '" + layout + "'");
}

const std::vector<std::string> kLayouts{"hpx", "hb", "chpx", "hpxsep", "causal", "conv"};

}  // namespace

std::size_t ModelConfig::num_blocks() const {
    std::size_t n = 0;
    for (const auto& s : stages) {
        n += s.blocks;
    }
    return n;
}

void ModelConfig::validate() const {
    if (stages.empty() || stages.size() > 4) {
        throw Error("a model needs one to four stages");
    }
    const std::size_t divisor = kStemStride << (stages.size() - 1);
    if (input_height == 0 || input_width == 0 || input_height % divisor != 0 || input_width % divisor != 0) {
        throw Error("input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                    " must be divisible by " + std::to_string(divisor) + " for " + std::to_string(stages.size()) +
                    " stages");
    }
    if (num_classes == 0 || ffn_expansion == 0) {
        throw Error("num_classes and ffn_expansion must be positive");
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        if (s.channels == 0 || s.blocks == 0) {
            throw Error("stage " + std::to_string(i) + " needs positive channels and blocks");
        }
        if (s.mixer != MixerVariant::local_conv && s.embed_dim == 0) {
            throw Error("stage " + std::to_string(i) + " needs a positive embedding dimension");
        }
        if (s.mixer == MixerVariant::h_px && s.embed_dim % 2 != 0) {
            throw Error("stage " + std::to_string(i) + ": hpx needs an even embedding dimension");
        }
    }
    for (auto r : res_scale_stages) {
        if (r >= 4) {
            throw Error("res_scale stage index out of range");
        }
    }
    if (short_conv_2d % 2 == 0 || short_conv_1d == 0) {
        throw Error("short conv sizes must be odd (2D) and positive (1D)");
    }
}

ModelConfig preset(const std::string& name) {
    const auto dash = name.find('-');
    if (dash == std::string::npos) {
        throw Error("unknown preset '" + name + "'");
    }
    const std::string first = name.substr(0, dash);
    const std::string second = name.substr(dash + 1);
    ModelConfig c;
    c.name = name;
    if (first == "micro") {
        const auto mixers = layout_mixers(second);
        for (std::size_t i = 0; i < 4; ++i) {
            c.stages.push_back({16, 1, mixers[i], 8});
        }
        c.input_height = c.input_width = 32;
        c.num_classes = 4;
        c.head_expansion = 0;
        return c;
    }
    const auto mixers = layout_mixers(first);
    std::array<std::size_t, 4> blocks{};
    if (second == "s4") {
        blocks = {1, 1, 1, 1};
    } else if (second == "s12") {
        blocks = {2, 2, 6, 2};
    } else if (second == "s18") {
        blocks = {3, 3, 9, 3};
    } else {
        throw Error("unknown model size '" + second + "' (expected s4, s12 or s18)");
    }
    const std::array<std::size_t, 4> channels{kPresetChannels[0], kPresetChannels[1], kPresetChannels[2], 512};
    const std::array<std::size_t, 4> embed{32, 32, 48, 64};
    for (std::size_t i = 0; i < 4; ++i) {
        c.stages.push_back({channels[i], blocks[i], mixers[i], embed[i]});
    }
    return c;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& l : kLayouts) {
        for (const char* s : {"s4", "s12", "s18"}) {
            names.push_back(l + "-" + s);
        }
        names.push_back("micro-" + l);
    }
    return names;
}

std::vector<StageShape> stage_shapes(const ModelConfig& config) {
    std::vector<StageShape> out;
    std::size_t h = (config.input_height + 2 * kStemPad - kStemKernel) / kStemStride + 1;
    std::size_t w = (config.input_width + 2 * kStemPad - kStemKernel) / kStemStride + 1;
    for (std::size_t i = 0; i < config.stages.size(); ++i) {
        if (i > 0) {
            h = (h + 2 * kDownPad - kDownKernel) / kDownStride + 1;
            w = (w + 2 * kDownPad - kDownKernel) / kDownStride + 1;
        }
        out.push_back({h, w, config.stages[i].channels});
    }
    return out;
}

MixerConfig stage_mixer_config(const ModelConfig& config, std::size_t stage) {
    const auto shapes = stage_shapes(config);
    const auto& s = config.stages.at(stage);
    MixerConfig m;
    m.variant = s.mixer;
    m.channels = s.channels;
    m.embed_dim = s.embed_dim;
    if (m.is_sequence()) {
        m.extent = {shapes[stage].height * shapes[stage].width};
        m.short_conv_size = config.short_conv_1d;
    } else {
        m.extent = {shapes[stage].height, shapes[stage].width};
        m.short_conv_size = s.mixer == MixerVariant::local_conv ? kLocalConvKernel : config.short_conv_2d;
    }
    return m;
}

std::string model_config_to_json(const ModelConfig& c, int indent) {
    json stages = json::array();
    for (const auto& s : c.stages) {
        stages.push_back(
            {{"channels", s.channels}, {"blocks", s.blocks}, {"mixer", to_string(s.mixer)}, {"embed_dim", s.embed_dim}});
    }
    const json j = {{"name", c.name},
                    {"stages", stages},
                    {"input_height", c.input_height},
                    {"input_width", c.input_width},
                    {"ffn_expansion", c.ffn_expansion},
                    {"num_classes", c.num_classes},
                    {"head_expansion", c.head_expansion},
                    {"res_scale_stages", c.res_scale_stages},
                    {"short_conv_2d", c.short_conv_2d},
                    {"short_conv_1d", c.short_conv_1d},
                    {"layer_norm_eps", c.layer_norm_eps},
                    {"seed", c.seed}};
    return j.dump(indent);
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("malformed model config JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw Error("model config must be a JSON object");
    }
    ModelConfig c;
    try {
        if (j.contains("preset")) {
            c = preset(j["preset"].get<std::string>());
            j.erase("preset");
        }
        c.name = take<std::string>(j, "name", c.name);
        if (auto it = j.find("stages"); it != j.end()) {
            c.stages.clear();
            for (json s : *it) {
                StageConfig st;
                st.channels = take<std::size_t>(s, "channels", 0);
                st.blocks = take<std::size_t>(s, "blocks", 0);
                st.mixer = parse_mixer_variant(take<std::string>(s, "mixer", "hpx"));
                st.embed_dim = take<std::size_t>(s, "embed_dim", 0);
                reject_leftovers(s, "stage config");
                c.stages.push_back(st);
            }
            j.erase(it);
        }
        c.input_height = take(j, "input_height", c.input_height);
        c.input_width = take(j, "input_width", c.input_width);
        c.ffn_expansion = take(j, "ffn_expansion", c.ffn_expansion);
        c.num_classes = take(j, "num_classes", c.num_classes);
        c.head_expansion = take(j, "head_expansion", c.head_expansion);
        c.res_scale_stages = take(j, "res_scale_stages", c.res_scale_stages);
        c.short_conv_2d = take(j, "short_conv_2d", c.short_conv_2d);
        c.short_conv_1d = take(j, "short_conv_1d", c.short_conv_1d);
        c.layer_norm_eps = take(j, "layer_norm_eps", c.layer_norm_eps);
        c.seed = take(j, "seed", c.seed);
    } catch (const json::exception& e) {
        throw Error(std::string("invalid model config: ") + e.what());
    }
    reject_leftovers(j, "model config");
    c.validate();
    return c;
}

Var block_forward(const Var& x, const BlockBranches& p, const std::function<Var(const Var&)>& mixer, double eps) {
    Var branch = mixer(layer_norm(x, p.norm1_g, p.norm1_b, eps));
    if (p.scale1) {
        branch = mul_channel(branch, *p.scale1);
    }
    const Var u = add(x, branch);
    const Var hidden = star_relu(linear(layer_norm(u, p.norm2_g, p.norm2_b, eps), p.fc1_w, p.fc1_b), p.act_s, p.act_b);
    Var ffn = linear(hidden, p.fc2_w, p.fc2_b);
    if (p.scale2) {
        ffn = mul_channel(ffn, *p.scale2);
    }
    return add(u, ffn);
}

Var patch_embed(const Var& image, const Var& w, const Var& b, const Var& norm_g, const Var& norm_b, double eps) {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] % kStemStride != 0 || s[1] % kStemStride != 0) {
        throw Error("patch_embed: image " + shape_str(s) + " must be [H, W, C] with H, W divisible by 4");
    }
    return layer_norm(add_channel(conv2d(image, w, kStemStride, kStemPad), b), norm_g, norm_b, eps);
}

Var downsample(const Var& x, const Var& w, const Var& b, const Var& norm_g, const Var& norm_b, double eps) {
    const auto& s = x.shape();
    if (s.size() != 3 || s[0] % 2 != 0 || s[1] % 2 != 0) {
        throw Error("downsample: feature map " + shape_str(s) + " must have even extents");
    }
    return layer_norm(add_channel(conv2d(x, w, kDownStride, kDownPad), b), norm_g, norm_b, eps);
}

std::size_t Model::add_param(std::string name, Tensor value, bool decay) {
    params_.push_back({std::move(name), std::move(value), decay});
    return params_.size() - 1;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    const std::size_t in_ch = 3;
    const auto shapes = stage_shapes(config_);
    const std::size_t c0 = config_.stages[0].channels;

    stem_w_ = add_param("stem.conv.weight", uniform({kStemKernel, kStemKernel, in_ch, c0},
                                                    fan_bound(kStemKernel * kStemKernel * in_ch), rng),
                        true);
    stem_b_ = add_param("stem.conv.bias", Tensor({c0}), false);
    std::size_t stem_norm_g = add_param("stem.norm.weight", Tensor({c0}, 1.0), false);
    std::size_t stem_norm_b = add_param("stem.norm.bias", Tensor({c0}), false);

    std::size_t prev = c0;
    for (std::size_t si = 0; si < config_.stages.size(); ++si) {
        const auto& sc = config_.stages[si];
        const std::string sp = "stages." + std::to_string(si);
        StageParams st;
        st.mixer = stage_mixer_config(config_, si);
        if (si == 0) {
            st.norm_g = stem_norm_g;
            st.norm_b = stem_norm_b;
        } else {
            st.down_w = add_param(sp + ".down.conv.weight",
                                  uniform({kDownKernel, kDownKernel, prev, sc.channels},
                                          fan_bound(kDownKernel * kDownKernel * prev), rng),
                                  true);
            st.down_b = add_param(sp + ".down.conv.bias", Tensor({sc.channels}), false);
            st.norm_g = add_param(sp + ".down.norm.weight", Tensor({sc.channels}, 1.0), false);
            st.norm_b = add_param(sp + ".down.norm.bias", Tensor({sc.channels}), false);
        }
        const bool res_scale = std::find(config_.res_scale_stages.begin(), config_.res_scale_stages.end(), si) !=
                               config_.res_scale_stages.end();
        const std::size_t c = sc.channels;
        const auto grids = mixer_kernel_grids(st.mixer);
        for (std::size_t bi = 0; bi < sc.blocks; ++bi) {
            const std::string bp = sp + ".blocks." + std::to_string(bi);
            BlockParams b;
            b.norm1_g = add_param(bp + ".norm1.weight", Tensor({c}, 1.0), false);
            b.norm1_b = add_param(bp + ".norm1.bias", Tensor({c}), false);
            auto& m = b.mixer;
            const std::string mp = bp + ".mixer";
            if (st.mixer.variant == MixerVariant::local_conv) {
                const std::size_t e = 2 * c;
                m.expand_w = add_param(mp + ".expand.weight", uniform({c, e}, fan_bound(c), rng), true);
                m.expand_b = add_param(mp + ".expand.bias", Tensor({e}), false);
                m.ldw_w = add_param(mp + ".dwconv.weight",
                                    uniform({kLocalConvKernel, kLocalConvKernel, e},
                                            fan_bound(kLocalConvKernel * kLocalConvKernel), rng),
                                    true);
                m.ldw_b = add_param(mp + ".dwconv.bias", Tensor({e}), false);
                m.act_s = add_param(mp + ".act.scale", Tensor({1}, kStarReluScale), false);
                m.act_b = add_param(mp + ".act.bias", Tensor({1}, kStarReluBias), false);
                m.contract_w = add_param(mp + ".contract.weight", uniform({e, c}, fan_bound(e), rng), true);
                m.contract_b = add_param(mp + ".contract.bias", Tensor({c}), false);
            } else {
                const bool seq = st.mixer.is_sequence();
                const std::size_t kh = seq ? 1 : st.mixer.short_conv_size;
                const std::size_t kw = st.mixer.short_conv_size;
                m.proj_w = add_param(mp + ".proj.weight", uniform({c, 3 * c}, fan_bound(c), rng), true);
                m.proj_b = add_param(mp + ".proj.bias", Tensor({3 * c}), false);
                m.dw_w = add_param(mp + ".short_conv.weight", uniform({kh, kw, 3 * c}, fan_bound(kh * kw), rng), true);
                m.dw_b = add_param(mp + ".short_conv.bias", Tensor({3 * c}), false);
                m.out_w = add_param(mp + ".out.weight", uniform({c, c}, fan_bound(c), rng), true);
                m.out_b = add_param(mp + ".out.bias", Tensor({c}), false);
                const auto window_variant = st.mixer.variant == MixerVariant::causal_hyena ? WindowVariant::causal
                                            : st.mixer.variant == MixerVariant::h_px       ? WindowVariant::radial2d
                                                                                            : WindowVariant::bidirectional;
                for (std::size_t fi = 0; fi < grids.size(); ++fi) {
                    const std::string fp = mp + ".filter" + (grids.size() > 1 ? std::to_string(fi) : "");
                    const std::size_t hidden = 2 * sc.embed_dim;
                    const auto ffn = FilterFFN::init(grids[fi].feature_dim(), hidden, c, rng);
                    const std::size_t length = grid_feature_extent(grids[fi]);
                    const auto window = init_window(window_variant, c, length, rng);
                    BlockInfo::Filter f{};
                    f.w0 = add_param(fp + ".ffn0.weight", ffn.w0, true);
                    f.b0 = add_param(fp + ".ffn0.bias", ffn.b0, false);
                    f.w1 = add_param(fp + ".ffn1.weight", ffn.w1, true);
                    f.b1 = add_param(fp + ".ffn1.bias", ffn.b1, false);
                    f.w2 = add_param(fp + ".ffn2.weight", ffn.w2, true);
                    f.b2 = add_param(fp + ".ffn2.bias", ffn.b2, false);
                    f.alpha = add_param(fp + ".window.alpha", window.alpha, false);
                    f.bias = add_param(fp + ".window.bias", window.bias, false);
                    m.filters.push_back(f);
                }
            }
            b.norm2_g = add_param(bp + ".norm2.weight", Tensor({c}, 1.0), false);
            b.norm2_b = add_param(bp + ".norm2.bias", Tensor({c}), false);
            const std::size_t hidden = config_.ffn_expansion * c;
            b.fc1_w = add_param(bp + ".ffn.fc1.weight", uniform({c, hidden}, fan_bound(c), rng), true);
            b.fc1_b = add_param(bp + ".ffn.fc1.bias", Tensor({hidden}), false);
            b.act_s = add_param(bp + ".ffn.act.scale", Tensor({1}, kStarReluScale), false);
            b.act_b = add_param(bp + ".ffn.act.bias", Tensor({1}, kStarReluBias), false);
            b.fc2_w = add_param(bp + ".ffn.fc2.weight", uniform({hidden, c}, fan_bound(hidden), rng), true);
            b.fc2_b = add_param(bp + ".ffn.fc2.bias", Tensor({c}), false);
            if (res_scale) {
                b.scale1 = add_param(bp + ".res_scale1", Tensor({c}, 1.0), false);
                b.scale2 = add_param(bp + ".res_scale2", Tensor({c}, 1.0), false);
            }
            st.blocks.push_back(std::move(b));
        }
        grids_.push_back(grids);
        stages_.push_back(std::move(st));
        prev = c;
    }

    final_g_ = add_param("norm.weight", Tensor({prev}, 1.0), false);
    final_b_ = add_param("norm.bias", Tensor({prev}), false);
    const std::size_t classes = config_.num_classes;
    if (config_.head_expansion > 0) {
        const std::size_t hidden = config_.head_expansion * prev;
        head1_w_ = add_param("head.fc1.weight", uniform({prev, hidden}, fan_bound(prev), rng), true);
        head1_b_ = add_param("head.fc1.bias", Tensor({hidden}), false);
        head_act_s_ = add_param("head.act.scale", Tensor({1}, kStarReluScale), false);
        head_act_b_ = add_param("head.act.bias", Tensor({1}, kStarReluBias), false);
        head_norm_g_ = add_param("head.norm.weight", Tensor({hidden}, 1.0), false);
        head_norm_b_ = add_param("head.norm.bias", Tensor({hidden}), false);
        head_w_ = add_param("head.fc2.weight", uniform({hidden, classes}, fan_bound(hidden), rng), true);
        head_b_ = add_param("head.fc2.bias", Tensor({classes}), false);
    } else {
        head_w_ = add_param("head.fc.weight", uniform({prev, classes}, fan_bound(prev), rng), true);
        head_b_ = add_param("head.fc.bias", Tensor({classes}), false);
    }
    truncation_.assign(config_.stages.size(), std::nullopt);
}

std::size_t Model::count_params() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.size();
    }
    return n;
}

std::optional<std::size_t> Model::find_param(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

void Model::project_constraints() {
    for (const auto& st : stages_) {
        for (const auto& b : st.blocks) {
            for (const auto& f : b.mixer.filters) {
                for (auto& a : params_[f.alpha].value.data()) {
                    a = std::max(a, 0.0);
                }
            }
        }
    }
}

void Model::set_truncation(std::size_t stage, std::optional<double> relative_size) {
    if (stage >= stages_.size()) {
        throw Error("truncate: stage " + std::to_string(stage + 1) + " does not exist");
    }
    if (!stages_[stage].mixer.has_long_conv()) {
        throw Error("truncate: stage " + std::to_string(stage + 1) + " has no long-convolution mixers");
    }
    if (relative_size && !(*relative_size >= 0.0 && *relative_size <= 2.0)) {
        throw Error("truncate: relative size must be in [0, 2]");
    }
    truncation_[stage] = relative_size;
}

std::vector<Tensor> Model::truncation_masks(std::size_t stage) const {
    std::vector<Tensor> masks;
    for (const auto& grid : grids_.at(stage)) {
        Tensor mask({grid.num_positions()}, 1.0);
        if (const auto rel = truncation_.at(stage)) {
            const double limit = *rel * static_cast<double>(grid_feature_extent(grid));
            const Tensor r = tap_radius(grid);
            for (std::size_t i = 0; i < mask.size(); ++i) {
                mask[i] = 2.0 * r[i] + 1.0 <= limit ? 1.0 : 0.0;
            }
        }
        masks.push_back(std::move(mask));
    }
    return masks;
}

std::vector<Model::BlockInfo> Model::blocks() const {
    std::vector<BlockInfo> out;
    for (std::size_t si = 0; si < stages_.size(); ++si) {
        for (std::size_t bi = 0; bi < stages_[si].blocks.size(); ++bi) {
            out.push_back({si, bi, stages_[si].mixer, stages_[si].blocks[bi].mixer.filters});
        }
    }
    return out;
}

Model::Bound::Bound(const Model& model, Tape& tape, bool trainable) : model_(&model), tape_(&tape) {
    vars_.reserve(model.params_.size());
    for (const auto& p : model.params_) {
        vars_.push_back(trainable ? tape.leaf(p.value) : tape.constant(p.value));
    }
    reset_kernel_cache();
}

Model::Bound::Bound(const Model& model, std::vector<Var> vars) : model_(&model), vars_(std::move(vars)) {
    if (vars_.size() != model.params_.size()) {
        throw Error("bind: expected " + std::to_string(model.params_.size()) + " parameters, got " +
                    std::to_string(vars_.size()));
    }
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i].shape() != model.params_[i].value.shape()) {
            throw Error("bind: parameter " + model.params_[i].name + " has shape " + shape_str(vars_[i].shape()) +
                        ", expected " + shape_str(model.params_[i].value.shape()));
        }
    }
    tape_ = vars_.empty() ? nullptr : vars_[0].tape();
    reset_kernel_cache();
}

void Model::Bound::reset_kernel_cache() {
    kernels_.assign(model_->stages_.size(), {});
    for (std::size_t si = 0; si < model_->stages_.size(); ++si) {
        kernels_[si].resize(model_->stages_[si].blocks.size());
    }
}

Model::Bound Model::bind(Tape& tape, bool trainable) const { return Bound(*this, tape, trainable); }

Model::Bound Model::bind(std::span<const Var> vars) const {
    return Bound(*this, std::vector<Var>(vars.begin(), vars.end()));
}

const std::vector<Var>& Model::Bound::kernels(std::size_t stage, std::size_t block) {
    auto& slot = kernels_.at(stage).at(block);
    if (!slot.empty()) {
        return slot;
    }
    const auto& st = model_->stages_[stage];
    const auto& grids = model_->grids_[stage];
    const auto masks = model_->truncation_masks(stage);
    const auto extents = filter_extents(st.mixer);
    const auto& filters = st.blocks.at(block).mixer.filters;
    const std::size_t c = st.mixer.channels;
    for (std::size_t fi = 0; fi < filters.size(); ++fi) {
        const auto& f = filters[fi];
        const FilterFFNVars ffn{vars_[f.w0], vars_[f.b0], vars_[f.w1], vars_[f.b1], vars_[f.w2], vars_[f.b2]};
        Var kernel = materialize_filter(grids[fi], ffn, vars_[f.alpha], vars_[f.bias]);
        if (model_->truncation_[stage]) {
            Tensor full({grids[fi].num_positions(), c});
            for (std::size_t p = 0; p < full.dim(0); ++p) {
                std::fill_n(full.data().data() + p * c, c, masks[fi][p]);
            }
            kernel = mul(kernel, tape_->constant(std::move(full)));
        }
        Shape shape = extents[fi];
        shape.push_back(c);
        slot.push_back(reshape(kernel, shape));
    }
    return slot;
}

Var Model::Bound::stage_output(const Var& image) {
    const auto& m = *model_;
    const auto& cfg = m.config_;
    const double eps = cfg.layer_norm_eps;
    if (image.shape() != Shape{cfg.input_height, cfg.input_width, 3}) {
        throw Error("forward: image " + shape_str(image.shape()) + " does not match model input " +
                    std::to_string(cfg.input_height) + "x" + std::to_string(cfg.input_width) + "x3");
    }
    Var x = patch_embed(image, vars_[m.stem_w_], vars_[m.stem_b_], vars_[m.stages_[0].norm_g],
                        vars_[m.stages_[0].norm_b], eps);
    for (std::size_t si = 0; si < m.stages_.size(); ++si) {
        const auto& st = m.stages_[si];
        if (st.down_w) {
            x = downsample(x, vars_[*st.down_w], vars_[*st.down_b], vars_[st.norm_g], vars_[st.norm_b], eps);
        }
        for (std::size_t bi = 0; bi < st.blocks.size(); ++bi) {
            const auto& bp = st.blocks[bi];
            BlockBranches br{vars_[bp.norm1_g], vars_[bp.norm1_b], vars_[bp.norm2_g], vars_[bp.norm2_b],
                             vars_[bp.fc1_w],   vars_[bp.fc1_b],   vars_[bp.act_s],   vars_[bp.act_b],
                             vars_[bp.fc2_w],   vars_[bp.fc2_b]};
            if (bp.scale1) {
                br.scale1 = vars_[*bp.scale1];
                br.scale2 = vars_[*bp.scale2];
            }
            const auto& mp = bp.mixer;
            auto mixer = [&](const Var& in) -> Var {
                if (st.mixer.variant == MixerVariant::local_conv) {
                    return local_conv_mix(in, {vars_[mp.expand_w], vars_[mp.expand_b], vars_[mp.ldw_w],
                                               vars_[mp.ldw_b], vars_[mp.act_s], vars_[mp.act_b],
                                               vars_[mp.contract_w], vars_[mp.contract_b]});
                }
                const ProjectionVars proj{vars_[mp.proj_w], vars_[mp.proj_b], vars_[mp.dw_w], vars_[mp.dw_b]};
                const auto& kernels = this->kernels(si, bi);
                const Shape map_shape = in.shape();
                Var mixed;
                switch (st.mixer.variant) {
                    case MixerVariant::causal_hyena:
                        mixed = reshape(
                            hyena_causal_mix(reshape(in, {map_shape[0] * map_shape[1], map_shape[2]}), proj, kernels[0]),
                            map_shape);
                        break;
                    case MixerVariant::h_b:
                        mixed = reshape(hyena_bidirectional_mix(reshape(in, {map_shape[0] * map_shape[1], map_shape[2]}),
                                                                proj, kernels[0]),
                                        map_shape);
                        break;
                    case MixerVariant::h_px:
                        mixed = hyena_pixel_mix(in, proj, kernels[0]);
                        break;
                    case MixerVariant::h_px_separable:
                        mixed = separable_mix(in, proj, kernels[0], kernels[1]);
                        break;
                    case MixerVariant::local_conv:
                        break;
                }
                return linear(mixed, vars_[mp.out_w], vars_[mp.out_b]);
            };
            x = block_forward(x, br, mixer, eps);
        }
    }
    return x;
}

Var Model::Bound::features(const Var& image) {
    const auto& m = *model_;
    return layer_norm(stage_output(image), vars_[m.final_g_], vars_[m.final_b_], m.config_.layer_norm_eps);
}

Var Model::Bound::logits(const Var& image) {
    const auto& m = *model_;
    const Var pooled = mean_positions(features(image));
    if (m.config_.head_expansion > 0) {
        const Var h = star_relu(linear(pooled, vars_[m.head1_w_], vars_[m.head1_b_]), vars_[m.head_act_s_],
                                vars_[m.head_act_b_]);
        const Var n = layer_norm(h, vars_[m.head_norm_g_], vars_[m.head_norm_b_], m.config_.layer_norm_eps);
        return linear(n, vars_[m.head_w_], vars_[m.head_b_]);
    }
    return linear(pooled, vars_[m.head_w_], vars_[m.head_b_]);
}

Tensor Model::forward(const Tensor& images) const {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != config_.input_height || s[2] != config_.input_width || s[3] != 3) {
        throw Error("forward: images " + shape_str(s) + " do not match [N, " + std::to_string(config_.input_height) +
                    ", " + std::to_string(config_.input_width) + ", 3]");
    }
    const std::size_t n = s[0];
    const std::size_t per = s[1] * s[2] * s[3];
    Tensor out({n, config_.num_classes});
    constexpr std::size_t kChunk = 32;
    for (std::size_t lo = 0; lo < n; lo += kChunk) {
        Tape tape(false);
        auto bound = bind(tape, false);
        for (std::size_t i = lo; i < std::min(n, lo + kChunk); ++i) {
            Tensor img({s[1], s[2], s[3]});
            std::copy_n(images.data().data() + i * per, per, img.data().data());
            const Var logits = bound.logits(tape.constant(std::move(img)));
            std::copy_n(logits.value().data().data(), config_.num_classes,
                        out.data().data() + i * config_.num_classes);
        }
    }
    return out;
}

void Model::save(const std::filesystem::path& dir, const std::string& extra_manifest_json) const {
    std::filesystem::create_directories(dir);
    json tensors = json::object();
    for (const auto& p : params_) {
        const std::string file = p.name + ".hpx1";
        save_hpx1(dir / file, p.value);
        tensors[p.name] = file;
    }
    json manifest = {{"format", "hpx-checkpoint-1"},
                     {"config", json::parse(model_config_to_json(config_))},
                     {"tensors", tensors},
                     {"extra", json::parse(extra_manifest_json)}};
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
    if (!os) {
        throw Error("cannot write checkpoint manifest in " + dir.string());
    }
}

Model Model::load(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) {
        throw Error("no checkpoint manifest in " + dir.string());
    }
    json manifest;
    try {
        manifest = json::parse(is);
    } catch (const json::exception& e) {
        throw Error("malformed checkpoint manifest: " + std::string(e.what()));
    }
    Model model(model_config_from_json(manifest.at("config").dump()));
    const auto& tensors = manifest.at("tensors");
    for (auto& p : model.params_) {
        if (!tensors.contains(p.name)) {
            throw Error("checkpoint is missing tensor " + p.name);
        }
        Tensor t = load_hpx1(dir / tensors.at(p.name).get<std::string>());
        if (t.shape() != p.value.shape()) {
            throw Error("checkpoint tensor " + p.name + " has shape " + shape_str(t.shape()) + ", expected " +
                        shape_str(p.value.shape()));
        }
        p.value = std::move(t);
    }
    return model;
}

}  // namespace hpx
