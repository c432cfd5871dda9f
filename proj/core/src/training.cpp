#include "hpx/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>

#include "hpx/ops.hpp"
#include "hpx/tensor_io.hpp"
#include "json.hpp"
#include "json_util.hpp"

namespace hpx {

using nlohmann::json;
using detail::reject_leftovers;
using detail::take;

void TrainConfig::validate() const {
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
        throw Error("label smoothing must be in [0, 1)");
    }
    if (total_epochs == 0 || warmup_epochs >= total_epochs) {
        throw Error("warmup_epochs must be smaller than total_epochs (and total_epochs > 0)");
    }
    if (batch_size == 0) {
        throw Error("batch_size must be positive");
    }
    if (!(lr_peak >= 0.0) || !(lr_final >= 0.0) || !(weight_decay >= 0.0)) {
        throw Error("learning rates and weight decay must be non-negative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
        throw Error("invalid Adam hyper-parameters");
    }
}

double cosine_warmup_lr(std::size_t step, std::size_t warmup_steps, std::size_t total_steps, double lr_peak,
                        double lr_final) {
    if (step < warmup_steps) {
        return lr_peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    if (step >= total_steps || total_steps == warmup_steps) {
        return step >= total_steps ? lr_final : lr_peak;
    }
    const double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return lr_final + 0.5 * (lr_peak - lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
    AdamState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.shape());
        s.v.emplace_back(p.shape());
    }
    return s;
}

namespace {

void check_step_inputs(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
    if (grads.size() != params.size()) {
        throw Error("optimizer: parameter and gradient counts differ");
    }
    if (state.m.empty() && state.step == 0) {
        state = AdamState::zeros_like(std::span<const Tensor>(params.data(), params.size()));
    }
    if (state.m.size() != params.size()) {
        throw Error("optimizer: state does not match the parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].shape() != params[i].shape()) {
            throw Error("optimizer: gradient shape mismatch for tensor " + std::to_string(i));
        }
        if (!grads[i].all_finite()) {
            throw Error("optimizer: non-finite gradient in tensor " + std::to_string(i));
        }
    }
}

// Shared moment update; grad_of(i, j) yields the effective gradient.
template <typename GradFn>
void adam_update(std::span<Tensor> params, AdamState& state, double lr, const AdamHyper& h, GradFn grad_of) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(h.beta1, t);
    const double c2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = grad_of(i, j);
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g;
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g * g;
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + h.eps);
        }
    }
}

}  // namespace

void adamw_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr,
                const AdamHyper& hyper, double weight_decay, std::span<const bool> decay_mask) {
    check_step_inputs(params, grads, state);
    if (!decay_mask.empty() && decay_mask.size() != params.size()) {
        throw Error("optimizer: decay mask size mismatch");
    }
    if (weight_decay != 0.0) {
        const double factor = 1.0 - lr * weight_decay;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (decay_mask.empty() || decay_mask[i]) {
                for (auto& p : params[i].data()) {
                    p *= factor;
                }
            }
        }
    }
    adam_update(params, state, lr, hyper, [&](std::size_t i, std::size_t j) { return grads[i][j]; });
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamHyper& hyper, double weight_decay) {
    check_step_inputs(params, grads, state);
    if (weight_decay == 0.0) {
        adam_update(params, state, lr, hyper, [&](std::size_t i, std::size_t j) { return grads[i][j]; });
        return;
    }
    adam_update(params, state, lr, hyper,
                [&](std::size_t i, std::size_t j) { return grads[i][j] + weight_decay * params[i][j]; });
}

Tensor Dataset::image(std::size_t i) const {
    const std::size_t h = height(), w = width();
    Tensor out({h, w, 3});
    std::copy_n(images.data().data() + i * h * w * 3, h * w * 3, out.data().data());
    return out;
}

void DatasetSpec::validate() const {
    if (height == 0 || width == 0) {
        throw Error("dataset image size must be positive");
    }
    if (source == DatasetSource::synthetic) {
        if (num_classes != 4) {
            throw Error("the synthetic quadrant task has exactly 4 classes");
        }
        if (height < 8 || width < 8) {
            throw Error("synthetic images must be at least 8x8");
        }
        if (train_size == 0 || val_size == 0) {
            throw Error("synthetic split sizes must be positive");
        }
    } else if (directory.empty()) {
        throw Error("directory dataset needs a path");
    } else if (val_every < 2) {
        throw Error("val_every must be >= 2");
    }
}

namespace {

void draw_blob_image(double* px, std::size_t h, std::size_t w, std::size_t label, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < h * w * 3; ++i) {
        px[i] = 0.3 * unit(rng);
    }
    const double half_h = static_cast<double>(h) / 2.0;
    const double half_w = static_cast<double>(w) / 2.0;
    const double cy = (label / 2 == 0 ? 0.0 : half_h) + 1.0 + (half_h - 3.0) * unit(rng);
    const double cx = (label % 2 == 0 ? 0.0 : half_w) + 1.0 + (half_w - 3.0) * unit(rng);
    const double sigma = 1.5 + 1.5 * unit(rng);
    const double amp = 0.6 + 0.4 * unit(rng);
    std::array<double, 3> tint{};
    for (auto& t : tint) {
        t = 0.5 + 0.5 * unit(rng);
    }
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double dx = static_cast<double>(x) + 0.5 - cx;
            const double b = amp * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            for (std::size_t c = 0; c < 3; ++c) {
                double& v = px[(y * w + x) * 3 + c];
                v = std::min(1.0, v + b * tint[c]);
            }
        }
    }
}

Dataset blob_split(std::size_t n, std::size_t h, std::size_t w, std::mt19937_64& rng) {
    Dataset d;
    d.num_classes = 4;
    d.class_names = {"top_left", "top_right", "bottom_left", "bottom_right"};
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.labels[i] = i % 4;
    }
    std::shuffle(d.labels.begin(), d.labels.end(), rng);
    d.images = Tensor({n, h, w, 3});
    for (std::size_t i = 0; i < n; ++i) {
        draw_blob_image(d.images.data().data() + i * h * w * 3, h, w, d.labels[i], rng);
    }
    return d;
}

Dataset pack(const std::vector<Tensor>& images, std::vector<std::size_t> labels, std::size_t h, std::size_t w,
             const std::vector<std::string>& names) {
    Dataset d;
    d.num_classes = names.size();
    d.class_names = names;
    d.labels = std::move(labels);
    if (images.empty()) {
        throw Error("dataset split is empty");
    }
    d.images = Tensor({images.size(), h, w, 3});
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::copy_n(images[i].data().data(), h * w * 3, d.images.data().data() + i * h * w * 3);
    }
    return d;
}

}  // namespace

DatasetSplit make_quadrant_blobs(const DatasetSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    DatasetSplit s;
    s.train = blob_split(spec.train_size, spec.height, spec.width, rng);
    s.val = blob_split(spec.val_size, spec.height, spec.width, rng);
    return s;
}

DatasetSplit load_image_directory(const DatasetSpec& spec) {
    spec.validate();
    namespace fs = std::filesystem;
    if (!fs::is_directory(spec.directory)) {
        throw Error("dataset directory " + spec.directory.string() + " does not exist");
    }
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(spec.directory)) {
        if (e.is_directory()) {
            class_dirs.push_back(e.path());
        }
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.size() < 2) {
        throw Error("dataset directory needs at least two class sub-directories");
    }
    std::vector<std::string> names;
    std::vector<Tensor> train_img, val_img;
    std::vector<std::size_t> train_lab, val_lab;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        names.push_back(class_dirs[c].filename().string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[c])) {
            const auto ext = e.path().extension().string();
            if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (std::size_t i = 0; i < files.size(); ++i) {
            Tensor img = load_pnm(files[i]);
            if (img.dim(0) != spec.height || img.dim(1) != spec.width) {
                throw Error("image " + files[i].string() + " is " + std::to_string(img.dim(1)) + "x" +
                            std::to_string(img.dim(0)) + ", expected " + std::to_string(spec.width) + "x" +
                            std::to_string(spec.height));
            }
            const bool to_val = i % spec.val_every == spec.val_every - 1;
            (to_val ? val_img : train_img).push_back(std::move(img));
            (to_val ? val_lab : train_lab).push_back(c);
        }
    }
    DatasetSplit s;
    s.train = pack(train_img, std::move(train_lab), spec.height, spec.width, names);
    s.val = pack(val_img, std::move(val_lab), spec.height, spec.width, names);
    return s;
}

DatasetSplit load_dataset(const DatasetSpec& spec) {
    return spec.source == DatasetSource::synthetic ? make_quadrant_blobs(spec) : load_image_directory(spec);
}

double evaluate_accuracy(const Model& model, const Dataset& data) {
    const Tensor logits = model.forward(data.images);
    const std::size_t k = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double* row = logits.data().data() + i * k;
        const auto pred = static_cast<std::size_t>(std::max_element(row, row + k) - row);
        correct += pred == data.labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(Model& model, const DatasetSplit& data, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    const auto& mc = model.config();
    for (const Dataset* d : {&data.train, &data.val}) {
        if (d->size() == 0) {
            throw Error("train: empty dataset split");
        }
        if (d->height() != mc.input_height || d->width() != mc.input_width) {
            throw Error("train: dataset images are " + std::to_string(d->height()) + "x" + std::to_string(d->width()) +
                        " but the model expects " + std::to_string(mc.input_height) + "x" +
                        std::to_string(mc.input_width));
        }
        if (d->num_classes != mc.num_classes) {
            throw Error("train: dataset has " + std::to_string(d->num_classes) + " classes, model has " +
                        std::to_string(mc.num_classes));
        }
    }
    const std::size_t n = data.train.size();
    const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = steps_per_epoch * config.total_epochs;
    const std::size_t warmup_steps = steps_per_epoch * config.warmup_epochs;
    const AdamHyper hyper{config.beta1, config.beta2, config.adam_eps};

    auto& params = model.params();
    // std::vector<bool> has no contiguous storage to span over.
    const auto mask = std::make_unique<bool[]>(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        mask[i] = params[i].decay;
    }

    std::vector<Tensor> values;
    AdamState state;
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    const std::size_t h = mc.input_height, w = mc.input_width;

    TrainResult result;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.total_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        double lr = 0.0;
        for (std::size_t lo = 0; lo < n; lo += config.batch_size) {
            const std::size_t hi = std::min(n, lo + config.batch_size);
            Tape tape;
            auto bound = model.bind(tape, true);
            std::vector<Var> logits;
            std::vector<std::size_t> labels;
            for (std::size_t i = lo; i < hi; ++i) {
                Tensor img = data.train.image(order[i]);
                if (config.horizontal_flip && (rng() & 1U)) {
                    for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t x = 0; x < w / 2; ++x) {
                            for (std::size_t c = 0; c < 3; ++c) {
                                std::swap(img[(y * w + x) * 3 + c], img[(y * w + (w - 1 - x)) * 3 + c]);
                            }
                        }
                    }
                }
                logits.push_back(bound.logits(tape.constant(std::move(img))));
                labels.push_back(data.train.labels[order[i]]);
            }
            const Var loss = cross_entropy_smoothed(stack(logits), labels, config.label_smoothing);
            loss_sum += loss.value()[0] * static_cast<double>(hi - lo);
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            values.clear();
            for (std::size_t i = 0; i < params.size(); ++i) {
                grads.push_back(tape.grad(bound.params()[i]));
                values.push_back(std::move(params[i].value));
            }
            ++step;
            lr = cosine_warmup_lr(step, warmup_steps, total_steps, config.lr_peak, config.lr_final);
            adamw_step(values, grads, state, lr, hyper, config.weight_decay,
                       std::span<const bool>(mask.get(), params.size()));
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i].value = std::move(values[i]);
            }
            model.project_constraints();
        }
        EpochRecord rec{epoch + 1, lr, loss_sum / static_cast<double>(n), evaluate_accuracy(model, data.val)};
        result.history.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }
    }
    result.final_val_acc = result.history.back().val_acc;
    return result;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
    std::ofstream os(path);
    if (!os) {
        throw Error("cannot write " + path.string());
    }
    os.precision(10);
    os << "epoch,lr,train_loss,val_acc\n";
    for (const auto& r : history) {
        os << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_acc << '\n';
    }
}

std::string train_config_to_json(const TrainConfig& c, int indent) {
    const json j = {{"lr_peak", c.lr_peak},
                    {"lr_final", c.lr_final},
                    {"warmup_epochs", c.warmup_epochs},
                    {"total_epochs", c.total_epochs},
                    {"weight_decay", c.weight_decay},
                    {"batch_size", c.batch_size},
                    {"label_smoothing", c.label_smoothing},
                    {"seed", c.seed},
                    {"beta1", c.beta1},
                    {"beta2", c.beta2},
                    {"adam_eps", c.adam_eps},
                    {"horizontal_flip", c.horizontal_flip}};
    return j.dump(indent);
}

std::string dataset_spec_to_json(const DatasetSpec& s, int indent) {
    const json j = {{"source", s.source == DatasetSource::synthetic ? "synthetic" : "directory"},
                    {"height", s.height},
                    {"width", s.width},
                    {"num_classes", s.num_classes},
                    {"train_size", s.train_size},
                    {"val_size", s.val_size},
                    {"seed", s.seed},
                    {"directory", s.directory.string()},
                    {"val_every", s.val_every}};
    return j.dump(indent);
}

RunConfig run_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("malformed config JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw Error("config must be a JSON object");
    }
    RunConfig rc;
    rc.model = preset("micro-hpx");
    try {
        if (auto it = j.find("model"); it != j.end()) {
            rc.model = model_config_from_json(it->dump());
            j.erase(it);
        }
        if (auto it = j.find("train"); it != j.end()) {
            json t = *it;
            auto& c = rc.train;
            c.lr_peak = take(t, "lr_peak", c.lr_peak);
            c.lr_final = take(t, "lr_final", c.lr_final);
            c.warmup_epochs = take(t, "warmup_epochs", c.warmup_epochs);
            c.total_epochs = take(t, "total_epochs", c.total_epochs);
            c.weight_decay = take(t, "weight_decay", c.weight_decay);
            c.batch_size = take(t, "batch_size", c.batch_size);
            c.label_smoothing = take(t, "label_smoothing", c.label_smoothing);
            c.seed = take(t, "seed", c.seed);
            c.beta1 = take(t, "beta1", c.beta1);
            c.beta2 = take(t, "beta2", c.beta2);
            c.adam_eps = take(t, "adam_eps", c.adam_eps);
            c.horizontal_flip = take(t, "horizontal_flip", c.horizontal_flip);
            reject_leftovers(t, "train config");
            j.erase(it);
        }
        if (auto it = j.find("data"); it != j.end()) {
            json d = *it;
            auto& s = rc.data;
            const auto source = take<std::string>(d, "source", "synthetic");
            if (source == "synthetic") {
                s.source = DatasetSource::synthetic;
            } else if (source == "directory") {
                s.source = DatasetSource::directory;
            } else {
                throw Error("data source must be 'synthetic' or 'directory', got '" + source + "'");
            }
            s.height = take(d, "height", s.height);
            s.width = take(d, "width", s.width);
            s.num_classes = take(d, "num_classes", s.num_classes);
            s.train_size = take(d, "train_size", s.train_size);
            s.val_size = take(d, "val_size", s.val_size);
            s.seed = take(d, "seed", s.seed);
            s.directory = take<std::string>(d, "directory", s.directory.string());
            s.val_every = take(d, "val_every", s.val_every);
            reject_leftovers(d, "data config");
            j.erase(it);
        }
    } catch (const json::exception& e) {
        throw Error(std::string("invalid config: ") + e.what());
    }
    reject_leftovers(j, "config");
    rc.train.validate();
    rc.data.validate();
    return rc;
}

}  // namespace hpx
