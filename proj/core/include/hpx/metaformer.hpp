#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hpx/autograd.hpp"
#include "hpx/implicit_filter.hpp"
#include "hpx/mixers.hpp"

namespace hpx {

struct StageConfig {
    std::size_t channels{};
    std::size_t blocks{};
    MixerVariant mixer{MixerVariant::h_px};
    std::size_t embed_dim{};  // K of the stage's implicit filters

    bool operator==(const StageConfig&) const = default;
};

struct ModelConfig {
    std::string name{"custom"};
    std::vector<StageConfig> stages{};
    std::size_t input_height{224};
    std::size_t input_width{224};
    std::size_t ffn_expansion{4};
    std::size_t num_classes{1000};
    // Hidden width of the classifier MLP as a multiple of the last stage width; 0 = single linear layer.
    std::size_t head_expansion{4};
    std::vector<std::size_t> res_scale_stages{2, 3};
    std::size_t short_conv_2d{5};
    std::size_t short_conv_1d{3};
    double layer_norm_eps{1e-6};
    std::uint64_t seed{0};

    bool operator==(const ModelConfig&) const = default;

    std::size_t num_blocks() const;
    void validate() const;
};

inline constexpr std::size_t kStemKernel = 7;
inline constexpr std::size_t kStemStride = 4;
inline constexpr std::size_t kStemPad = 2;
inline constexpr std::size_t kDownKernel = 3;
inline constexpr std::size_t kDownStride = 2;
inline constexpr std::size_t kDownPad = 1;
inline constexpr double kStarReluScale = 0.8944;
inline constexpr double kStarReluBias = -0.4472;

// Named presets: "<layout>-<size>" with layout hpx, hb, chpx, hpxsep, causal, conv
// and size s4, s12, s18; "micro-<layout>" is a 32 px, 4-class desk-scale model.
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// Square feature-map extent after each stage for the configured input.
struct StageShape {
    std::size_t height{};
    std::size_t width{};
    std::size_t channels{};
};
std::vector<StageShape> stage_shapes(const ModelConfig& config);
MixerConfig stage_mixer_config(const ModelConfig& config, std::size_t stage);

std::string model_config_to_json(const ModelConfig& config, int indent = 2);
// Rejects unknown keys.
ModelConfig model_config_from_json(const std::string& text);

struct NamedParam {
    std::string name;
    Tensor value;
    bool decay{false};  // subject to weight decay
};

class Model {
public:
    explicit Model(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }
    std::size_t count_params() const;
    std::optional<std::size_t> find_param(const std::string& name) const;

    // Clamps decay rates to >= 0 after an optimizer step.
    void project_constraints();

    // Zeroes long-convolution taps of one stage outside the centered disk of
    // diameter relative_size * feature extent; nullopt restores full kernels.
    void set_truncation(std::size_t stage, std::optional<double> relative_size);
    std::optional<double> truncation(std::size_t stage) const { return truncation_.at(stage); }

    struct BlockInfo {
        std::size_t stage{};
        std::size_t block{};
        MixerConfig mixer{};
        // Parameter indices of each implicit filter (ffn w0..b2, alpha, bias).
        struct Filter {
            std::size_t w0, b0, w1, b1, w2, b2, alpha, bias;
        };
        std::vector<Filter> filters{};
    };
    std::vector<BlockInfo> blocks() const;
    const std::vector<KernelGrid>& stage_grids(std::size_t stage) const { return grids_.at(stage); }
    // Keep-mask per filter tap for the current truncation of a stage (all ones when unset).
    std::vector<Tensor> truncation_masks(std::size_t stage) const;

    // Parameters bound to one tape, with per-forward kernel materialization.
    class Bound {
    public:
        const std::vector<Var>& params() const { return vars_; }
        // Logits [num_classes] for one [H, W, 3] image.
        Var logits(const Var& image);
        // Output of the last stage before the final norm, [h, w, C].
        Var stage_output(const Var& image);
        // Final normalized feature map before pooling, [h, w, C].
        Var features(const Var& image);
        // Materialized kernels of a block (shape per filter_extents + [C]).
        const std::vector<Var>& kernels(std::size_t stage, std::size_t block);

    private:
        friend class Model;
        Bound(const Model& model, Tape& tape, bool trainable);
        Bound(const Model& model, std::vector<Var> vars);
        void reset_kernel_cache();

        const Model* model_;
        Tape* tape_;
        std::vector<Var> vars_;
        std::vector<std::vector<std::vector<Var>>> kernels_;
    };

    Bound bind(Tape& tape, bool trainable = true) const;
    // Binds caller-provided Vars, one per parameter in params() order.
    Bound bind(std::span<const Var> vars) const;

    // Batched inference: images [N, H, W, 3] -> logits [N, num_classes].
    Tensor forward(const Tensor& images) const;

    void save(const std::filesystem::path& dir, const std::string& extra_manifest_json = "{}") const;
    static Model load(const std::filesystem::path& dir);

private:
    struct MixerParams {
        // hyena variants
        std::size_t proj_w{}, proj_b{}, dw_w{}, dw_b{}, out_w{}, out_b{};
        std::vector<BlockInfo::Filter> filters{};
        // local conv
        std::size_t expand_w{}, expand_b{}, ldw_w{}, ldw_b{}, act_s{}, act_b{}, contract_w{}, contract_b{};
    };
    struct BlockParams {
        std::size_t norm1_g{}, norm1_b{}, norm2_g{}, norm2_b{};
        MixerParams mixer{};
        std::size_t fc1_w{}, fc1_b{}, act_s{}, act_b{}, fc2_w{}, fc2_b{};
        std::optional<std::size_t> scale1{}, scale2{};
    };
    struct StageParams {
        std::optional<std::size_t> down_w{}, down_b{};
        std::size_t norm_g{}, norm_b{};
        std::vector<BlockParams> blocks{};
        MixerConfig mixer{};
    };

    std::size_t add_param(std::string name, Tensor value, bool decay);

    ModelConfig config_;
    std::vector<NamedParam> params_{};
    std::size_t stem_w_{}, stem_b_{};
    std::vector<StageParams> stages_{};
    std::size_t final_g_{}, final_b_{};
    std::size_t head1_w_{}, head1_b_{}, head_act_s_{}, head_act_b_{}, head_norm_g_{}, head_norm_b_{};
    std::size_t head_w_{}, head_b_{};
    std::vector<std::vector<KernelGrid>> grids_{};
    std::vector<std::optional<double>> truncation_{};
};

// Block update u = x + s1 * Mixer(LN(x)); y = u + s2 * FFN(LN(u)) (s = 1 where res scale is off),
// exposed for tests with explicit branch callables.
struct BlockBranches {
    Var norm1_g, norm1_b, norm2_g, norm2_b;
    Var fc1_w, fc1_b, act_s, act_b, fc2_w, fc2_b;
    std::optional<Var> scale1{}, scale2{};
};
Var block_forward(const Var& x, const BlockBranches& p, const std::function<Var(const Var&)>& mixer, double eps);

// Strided overlapping stem: conv k7 s4 p2, then LayerNorm.
Var patch_embed(const Var& image, const Var& w, const Var& b, const Var& norm_g, const Var& norm_b, double eps);
// Conv k3 s2 p1, then LayerNorm.
Var downsample(const Var& x, const Var& w, const Var& b, const Var& norm_g, const Var& norm_b, double eps);

}  // namespace hpx
