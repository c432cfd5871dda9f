#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hpx/metaformer.hpp"
#include "hpx/tensor.hpp"

namespace hpx {

struct TrainConfig {
    double lr_peak{1e-3};
    double lr_final{1e-5};
    std::size_t warmup_epochs{2};
    std::size_t total_epochs{20};
    double weight_decay{0.05};
    std::size_t batch_size{32};
    double label_smoothing{0.1};
    std::uint64_t seed{0};
    double beta1{0.9};
    double beta2{0.999};
    double adam_eps{1e-8};
    bool horizontal_flip{false};

    bool operator==(const TrainConfig&) const = default;
    void validate() const;
};

// Linear ramp 0 -> lr_peak over the warmup steps, then cosine decay reaching
// lr_final at total_steps.
double cosine_warmup_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps, double lr_peak,
                        double lr_final);

struct AdamState {
    std::vector<Tensor> m{};
    std::vector<Tensor> v{};
    std::size_t step{0};

    static AdamState zeros_like(std::span<const Tensor> params);
};

struct AdamHyper {
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
};

// Decoupled decay: p <- p (1 - lr wd) then the bias-corrected Adam update.
// decay_mask (optional, one flag per tensor) selects the tensors that decay.
void adamw_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr,
                const AdamHyper& hyper, double weight_decay, std::span<const bool> decay_mask = {});
// Plain Adam; weight_decay is added to the gradient as an L2 term.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamHyper& hyper, double weight_decay = 0.0);

struct Dataset {
    Tensor images{};  // [N, H, W, 3], values in [0, 1]
    std::vector<std::size_t> labels{};
    std::size_t num_classes{};
    std::vector<std::string> class_names{};

    std::size_t size() const { return labels.size(); }
    std::size_t height() const { return images.dim(1); }
    std::size_t width() const { return images.dim(2); }
    Tensor image(std::size_t i) const;  // [H, W, 3]
};

enum class DatasetSource { synthetic, directory };

struct DatasetSpec {
    DatasetSource source{DatasetSource::synthetic};
    std::size_t height{32};
    std::size_t width{32};
    std::size_t num_classes{4};
    std::size_t train_size{512};
    std::size_t val_size{256};
    std::uint64_t seed{1234};
    std::filesystem::path directory{};
    // Directory source: every n-th image of each class goes to validation.
    std::size_t val_every{5};

    bool operator==(const DatasetSpec&) const = default;
    void validate() const;
};

struct DatasetSplit {
    Dataset train;
    Dataset val;
};

// Quadrant task: one bright Gaussian blob on a noisy background; the label is
// the quadrant holding the blob centre. Class-balanced, train and val drawn
// from disjoint parts of one seeded stream.
DatasetSplit make_quadrant_blobs(const DatasetSpec& spec);
// <root>/<class>/<image>.ppm|.pgm, classes in sorted order.
DatasetSplit load_image_directory(const DatasetSpec& spec);
DatasetSplit load_dataset(const DatasetSpec& spec);

struct EpochRecord {
    std::size_t epoch{};
    double lr{};
    double train_loss{};
    double val_acc{};
};

struct TrainResult {
    std::vector<EpochRecord> history{};
    double final_val_acc{};
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Deterministic mini-batch training; per-sample gradients of a batch are
// computed concurrently and summed in sample order.
TrainResult train(Model& model, const DatasetSplit& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

double evaluate_accuracy(const Model& model, const Dataset& data);

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

std::string train_config_to_json(const TrainConfig& config, int indent = 2);
std::string dataset_spec_to_json(const DatasetSpec& spec, int indent = 2);

// Parsed from a JSON object {"model": {...}, "train": {...}, "data": {...}};
// each section is optional and unknown keys are rejected.
struct RunConfig {
    ModelConfig model{};
    TrainConfig train{};
    DatasetSpec data{};
};
RunConfig run_config_from_json(const std::string& text);

}  // namespace hpx
