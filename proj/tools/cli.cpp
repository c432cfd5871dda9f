#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hpx/analysis.hpp"
#include "hpx/metaformer.hpp"
#include "hpx/tensor_io.hpp"
#include "hpx/training.hpp"
#include "hpx/version.hpp"

namespace hpx::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Bad input from the command line or a config file; maps to exit code 2.
struct UsageError : Error {
    using Error::Error;
};

std::string read_text(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!fs::is_regular_file(path) || !is) {
        throw UsageError("cannot read file " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

std::uint64_t weights_hash(const Model& model) {
    std::uint64_t h = fnv1a("");
    for (const auto& p : model.params()) {
        h = fnv1a(p.name, h);
        const auto& d = p.value.data();
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double)), h);
    }
    return h;
}

std::string dims_str(const Shape& s) {
    std::string r;
    for (std::size_t i = 0; i < s.size(); ++i) {
        r += (i ? "x" : "") + std::to_string(s[i]);
    }
    return r;
}

// Checkpoint directory (or a train output holding checkpoint/), model config
// JSON file, or preset name.
Model resolve_model(const std::string& source, std::optional<std::uint64_t> seed) {
    const fs::path path(source);
    if (fs::is_directory(path)) {
        for (const fs::path& dir : {path, path / "checkpoint"}) {
            if (fs::is_regular_file(dir / "manifest.json") &&
                json::parse(read_text(dir / "manifest.json"), nullptr, false).contains("tensors")) {
                return Model::load(dir);
            }
        }
        throw UsageError(source + " is not a checkpoint directory");
    }
    ModelConfig config;
    if (fs::exists(path)) {
        const std::string text = read_text(path);
        try {
            const json j = json::parse(text);
            config = j.is_object() && j.contains("model") ? run_config_from_json(text).model
                                                          : model_config_from_json(text);
        } catch (const json::exception& e) {
            throw UsageError("malformed JSON in " + source + ": " + e.what());
        } catch (const Error& e) {
            throw UsageError(source + ": " + e.what());
        }
    } else {
        try {
            config = preset(source);
        } catch (const Error&) {
            throw UsageError("'" + source + "' is not a checkpoint, config file or preset");
        }
    }
    if (seed) {
        config.seed = *seed;
    }
    return Model(config);
}

json model_identity(const Model& model) {
    return {{"model", json::parse(model_config_to_json(model.config()))}, {"weights", hex64(weights_hash(model))}};
}

fs::path prepare_out(const std::string& out) {
    if (out.empty()) {
        throw UsageError("--out must name a directory");
    }
    const fs::path dir(out);
    if (fs::exists(dir) && !fs::is_directory(dir)) {
        throw UsageError("--out " + out + " exists and is not a directory");
    }
    fs::create_directories(dir);
    return dir;
}

// Run record: no timestamps, so re-runs with the same inputs give the same bytes.
void write_manifest(const fs::path& dir, const std::string& subcommand, const std::vector<std::string>& args,
                    const json& config, std::uint64_t seed, std::vector<std::string> outputs) {
    outputs.push_back("manifest.json");
    std::sort(outputs.begin(), outputs.end());
    const json manifest = {
        {"subcommand", subcommand},
        {"arguments", args},
        {"config", config},
        {"config_hash", hex64(fnv1a(config.dump()))},
        {"seed", seed},
        {"versions",
         {{"hpx", kVersion},
          {"cli11", CLI11_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
        {"outputs", outputs}};
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
    if (!os) {
        throw Error("cannot write " + (dir / "manifest.json").string());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    if (!os) {
        throw Error("cannot write " + path.string());
    }
}

// ---- train

struct TrainArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args, bool quiet, std::ostream& out) {
    const std::string text = read_text(a.config);
    RunConfig run;
    try {
        run = run_config_from_json(text);
        if (a.seed) {
            run.model.seed = *a.seed;
            run.train.seed = *a.seed;
        }
        if (a.epochs) {
            run.train.total_epochs = *a.epochs;
        }
        run.model.validate();
        run.train.validate();
        run.data.validate();
    } catch (const json::exception& e) {
        throw UsageError("malformed JSON in " + a.config + ": " + e.what());
    } catch (const Error& e) {
        throw UsageError(a.config + ": " + e.what());
    }
    const fs::path dir = prepare_out(a.out);
    const json resolved = {{"model", json::parse(model_config_to_json(run.model))},
                           {"train", json::parse(train_config_to_json(run.train))},
                           {"data", json::parse(dataset_spec_to_json(run.data))}};

    out << model_config_to_json(run.model) << '\n';
    const DatasetSplit data = load_dataset(run.data);
    Model model(run.model);
    if (!quiet) {
        out << "training " << run.model.name << ": " << model.count_params() << " parameters, " << data.train.size()
            << " train / " << data.val.size() << " val images\n";
    }
    const TrainResult result = train(model, data, run.train, [&](const EpochRecord& r) {
        if (!quiet) {
            out << "epoch " << r.epoch << '/' << run.train.total_epochs << std::setprecision(6) << "  lr " << r.lr
                << "  train_loss " << r.train_loss << "  val_acc " << r.val_acc << std::endl;
        }
    });

    const json extra = {{"train", resolved["train"]},
                        {"data", resolved["data"]},
                        {"final_val_acc", result.final_val_acc}};
    model.save(dir / "checkpoint", extra.dump());
    write_history_csv(dir / "history.csv", result.history);
    write_json(dir / "config.json", resolved);
    write_manifest(dir, "train", args, resolved, run.train.seed, {"checkpoint", "config.json", "history.csv"});
    out << "final val_acc " << result.final_val_acc << '\n';
    return kExitOk;
}

// ---- model info

struct InfoArgs {
    std::string preset_name;
    std::string config;
    std::string checkpoint;
    std::string positional;
    bool as_json{false};
};

std::string kernel_desc(const MixerConfig& m) {
    if (!m.has_long_conv()) {
        return "local 7x7";
    }
    std::string r;
    for (const auto& e : filter_extents(m)) {
        r += (r.empty() ? "" : " + ") + dims_str(e);
    }
    return r;
}

int cmd_model_info(const InfoArgs& a, std::ostream& out) {
    const int given = !a.preset_name.empty() + !a.config.empty() + !a.checkpoint.empty() + !a.positional.empty();
    if (given != 1) {
        throw UsageError("model info needs exactly one of --preset, --config, --checkpoint or a positional source");
    }
    std::string source = a.preset_name + a.config + a.checkpoint + a.positional;
    if (!a.checkpoint.empty() && !fs::is_directory(source)) {
        throw UsageError("no checkpoint directory at " + source);
    }
    if (!a.preset_name.empty() && fs::exists(source)) {
        throw UsageError("--preset expects a preset name, got the path " + source);
    }
    const Model model = resolve_model(source, std::nullopt);
    const ModelConfig& cfg = model.config();
    const auto shapes = stage_shapes(cfg);

    json stages = json::array();
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        const MixerConfig m = stage_mixer_config(cfg, s);
        json kernels = json::array();
        for (const auto& e : filter_extents(m)) {
            kernels.push_back(e);
        }
        stages.push_back({{"stage", s + 1},
                          {"height", shapes[s].height},
                          {"width", shapes[s].width},
                          {"channels", shapes[s].channels},
                          {"blocks", cfg.stages[s].blocks},
                          {"mixer", to_string(cfg.stages[s].mixer)},
                          {"kernels", kernels}});
    }
    if (a.as_json) {
        const json j = {{"config", json::parse(model_config_to_json(cfg))},
                        {"stages", stages},
                        {"parameters", model.count_params()}};
        out << j.dump(2) << '\n';
        return kExitOk;
    }
    out << model_config_to_json(cfg) << '\n';
    out << "input  " << cfg.input_height << 'x' << cfg.input_width << "x3\n";
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        out << "stage " << s + 1 << "  " << shapes[s].height << 'x' << shapes[s].width << 'x' << shapes[s].channels
            << "  blocks " << cfg.stages[s].blocks << "  mixer " << to_string(cfg.stages[s].mixer) << "  kernel "
            << kernel_desc(stage_mixer_config(cfg, s)) << '\n';
    }
    out << "parameters " << model.count_params() << '\n';
    return kExitOk;
}

// ---- erf

struct ErfArgs {
    std::string model;
    std::string images{"synthetic"};
    std::size_t count{8};
    std::uint64_t seed{0};
    std::string out;
};

Tensor gather_images(const std::string& source, std::size_t count, std::size_t h, std::size_t w,
                     std::uint64_t seed) {
    if (source == "synthetic") {
        DatasetSpec spec;
        spec.height = h;
        spec.width = w;
        spec.train_size = count;
        spec.val_size = count;
        spec.seed = seed;
        return make_quadrant_blobs(spec).train.images;
    }
    if (!fs::is_directory(source)) {
        throw UsageError("--images must be 'synthetic' or a directory, got " + source);
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(source)) {
        const auto ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw UsageError("no .ppm/.pgm images under " + source);
    }
    files.resize(std::min(files.size(), count));
    Tensor images({files.size(), h, w, 3});
    for (std::size_t i = 0; i < files.size(); ++i) {
        const Tensor img = load_pnm(files[i]);
        if (img.shape() != Shape{h, w, 3}) {
            throw Error("image " + files[i].string() + " is " + shape_str(img.shape()) + ", model expects " +
                        std::to_string(h) + "x" + std::to_string(w));
        }
        std::copy(img.data().begin(), img.data().end(), images.data().begin() + static_cast<long>(i * h * w * 3));
    }
    return images;
}

int cmd_erf(const ErfArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    if (a.count == 0) {
        throw UsageError("--count must be positive");
    }
    const Model model = resolve_model(a.model, std::nullopt);
    const fs::path dir = prepare_out(a.out);
    const auto& cfg = model.config();
    const Tensor images = gather_images(a.images, a.count, cfg.input_height, cfg.input_width, a.seed);
    const ErfMap erf = erf_map(model, images);
    save_pgm(dir / "erf.pgm", erf.grid);
    save_hpx1(dir / "erf.hpx1", erf.raw);

    std::size_t nonzero = 0;
    for (double v : erf.raw.data()) {
        nonzero += v != 0.0;
    }
    out << "erf over " << erf.num_images << " images: " << nonzero << " of " << erf.raw.size()
        << " input pixels have nonzero gradient\n";
    if (const auto box = center_receptive_field(cfg)) {
        out << "arithmetic receptive field rows " << box->y0 << ".." << box->y1 << " cols " << box->x0 << ".."
            << box->x1 << '\n';
    }
    json config = model_identity(model);
    config["images"] = a.images;
    config["count"] = a.count;
    config["image_seed"] = a.seed;
    write_manifest(dir, "erf", args, config, a.seed, {"erf.hpx1", "erf.pgm"});
    return kExitOk;
}

// ---- coverage

struct CoverageArgs {
    std::string model;
    double threshold{0.05};
    bool full_kernel{false};
    std::string out;
};

int cmd_coverage(const CoverageArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    const Model model = resolve_model(a.model, std::nullopt);
    const fs::path dir = prepare_out(a.out);
    const auto rows = coverage_report(model, a.threshold, a.full_kernel);
    write_coverage_csv(dir / "coverage.csv", rows);
    out << "stage,block,diameter,coverage\n";
    for (const auto& r : rows) {
        out << r.stage << ',' << r.block << ',' << r.diameter << ',' << r.coverage << '\n';
    }
    json config = model_identity(model);
    config["threshold"] = a.threshold;
    config["full_kernel"] = a.full_kernel;
    write_manifest(dir, "coverage", args, config, model.config().seed, {"coverage.csv"});
    return kExitOk;
}

// ---- truncate

struct TruncateArgs {
    std::string model;
    std::size_t stage{1};
    double rel{1.0};
    bool eval{false};
    std::string data;
    std::string out;
};

int cmd_truncate(const TruncateArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    const Model model = resolve_model(a.model, std::nullopt);
    const auto& cfg = model.config();
    if (a.stage == 0 || a.stage > cfg.stages.size()) {
        throw UsageError("--stage must be in 1.." + std::to_string(cfg.stages.size()));
    }
    if (!(a.rel >= 0.0 && a.rel <= 2.0)) {
        throw UsageError("--rel must be in [0, 2]");
    }
    const fs::path dir = prepare_out(a.out);
    const Model cut = truncate_kernels(model, a.stage, a.rel);

    double kept = 0.0, total = 0.0;
    for (const auto& m : cut.truncation_masks(a.stage - 1)) {
        for (double v : m.data()) {
            kept += v;
        }
        total += static_cast<double>(m.size());
    }
    json result = {{"stage", a.stage}, {"rel", a.rel}, {"kept_tap_fraction", total > 0 ? kept / total : 0.0}};
    out << "stage " << a.stage << " rel " << a.rel << ": keeps " << kept << " of " << total << " taps\n";

    json config = model_identity(model);
    config["stage"] = a.stage;
    config["rel"] = a.rel;
    if (a.eval) {
        DatasetSpec spec;
        spec.height = cfg.input_height;
        spec.width = cfg.input_width;
        if (!a.data.empty()) {
            try {
                spec = run_config_from_json(read_text(a.data)).data;
            } catch (const json::exception& e) {
                throw UsageError("malformed JSON in " + a.data + ": " + e.what());
            } catch (const UsageError&) {
                throw;
            } catch (const Error& e) {
                throw UsageError(a.data + ": " + e.what());
            }
        }
        const Dataset val = load_dataset(spec).val;
        const double full = evaluate_accuracy(model, val);
        const double truncated = evaluate_accuracy(cut, val);
        result["val_acc_full"] = full;
        result["val_acc_truncated"] = truncated;
        config["data"] = json::parse(dataset_spec_to_json(spec));
        out << "val_acc full " << full << "  truncated " << truncated << '\n';
    }
    write_json(dir / "truncate.json", result);
    write_manifest(dir, "truncate", args, config, cfg.seed, {"truncate.json"});
    return kExitOk;
}

// ---- bench

int cmd_bench(const BenchConfig& b, const std::vector<std::string>& args, const std::string& out_dir,
              std::ostream& out) {
    if (b.variants.empty() || b.extents.size() < 2 || b.channels == 0 || b.repeats == 0) {
        throw UsageError("bench needs variants, at least two extents, and positive channels and repeats");
    }
    for (const auto& v : b.variants) {
        if (v != "dense") {
            try {
                parse_mixer_variant(v);
            } catch (const Error& e) {
                throw UsageError(e.what());
            }
        }
    }
    const fs::path dir = prepare_out(out_dir);
    const BenchTable table = bench_runtime(b);
    write_bench_csv(dir / "bench.csv", table);
    json slopes = table.slopes;
    write_json(dir / "slopes.json", slopes);
    out << "variant,extent,channels,pixels,median_seconds\n";
    for (const auto& r : table.rows) {
        out << r.variant << ',' << r.extent << ',' << r.channels << ',' << r.pixels << ',' << r.median_seconds << '\n';
    }
    for (const auto& [v, s] : table.slopes) {
        out << "slope " << v << ' ' << std::setprecision(3) << s << '\n';
    }
    const json config = {{"variants", b.variants}, {"extents", b.extents},     {"channels", b.channels},
                         {"repeats", b.repeats},   {"embed_dim", b.embed_dim}, {"seed", b.seed}};
    write_manifest(dir, "bench", args, config, b.seed, {"bench.csv", "slopes.json"});
    return kExitOk;
}

// ---- filters dump

// Channels side by side in a near-square grid, each tile scaled to its own
// [min, max] and separated by one blank pixel.
Tensor channel_montage(const Tensor& k2d) {
    const std::size_t h = k2d.dim(0), w = k2d.dim(1), c = k2d.dim(2);
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(c))));
    const std::size_t rows = (c + cols - 1) / cols;
    Tensor m({rows * (h + 1) - 1, cols * (w + 1) - 1});
    for (std::size_t ch = 0; ch < c; ++ch) {
        double lo = k2d[ch], hi = k2d[ch];
        for (std::size_t i = 0; i < h * w; ++i) {
            lo = std::min(lo, k2d[i * c + ch]);
            hi = std::max(hi, k2d[i * c + ch]);
        }
        const double span = hi > lo ? hi - lo : 1.0;
        const std::size_t oy = (ch / cols) * (h + 1), ox = (ch % cols) * (w + 1);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                m.at({oy + y, ox + x}) = (k2d[(y * w + x) * c + ch] - lo) / span;
            }
        }
    }
    return m;
}

int cmd_filters_dump(const std::string& model_src, const std::vector<std::string>& args, const std::string& out_dir,
                     std::ostream& out) {
    const Model model = resolve_model(model_src, std::nullopt);
    const fs::path dir = prepare_out(out_dir);
    std::vector<std::string> written;
    for (const auto& bk : materialized_kernels(model)) {
        for (std::size_t f = 0; f < bk.kernels.size(); ++f) {
            const Tensor& k = bk.kernels[f];
            // 1D kernels are shown as a single-row image.
            const Shape as_2d = k.rank() == 2 ? Shape{1, k.dim(0), k.dim(1)} : k.shape();
            const Tensor k2d = k.reshaped(as_2d);
            const std::size_t h = as_2d[0], w = as_2d[1], c = as_2d[2];
            Tensor mean({h, w});
            for (std::size_t i = 0; i < h * w; ++i) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    mean[i] += k2d[i * c + ch];
                }
                mean[i] /= static_cast<double>(c);
            }
            std::string stem = "stage" + std::to_string(bk.stage) + "_block" + std::to_string(bk.block);
            if (bk.kernels.size() > 1) {
                stem += f == 0 ? "_h" : "_v";
            }
            save_hpx1(dir / (stem + "_mean.hpx1"), mean);
            save_pgm(dir / (stem + "_mean.pgm"), mean);
            save_hpx1(dir / (stem + "_channels.hpx1"), k);
            save_pgm(dir / (stem + "_channels.pgm"), channel_montage(k2d));
            for (const char* suffix : {"_mean.hpx1", "_mean.pgm", "_channels.hpx1", "_channels.pgm"}) {
                written.push_back(stem + suffix);
            }
            out << stem << "  " << dims_str(k.shape()) << '\n';
        }
    }
    if (written.empty()) {
        out << "model has no long-convolution filters\n";
    }
    write_manifest(dir, "filters dump", args, model_identity(model), model.config().seed, written);
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"HyenaPixel long-convolution models: training, inspection and analysis", "hpx"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", kVersion);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress progress output");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON run config");
    train_cmd->add_option("--config", train_args.config, "Run config JSON {model, train, data}")->required();
    train_cmd->add_option("--out", train_args.out, "Output directory")->required();
    train_cmd->add_option("--seed", train_args.seed, "Override model and training seeds");
    train_cmd->add_option("--epochs", train_args.epochs, "Override the epoch count");

    InfoArgs info_args;
    auto* model_cmd = app.add_subcommand("model", "Model inspection");
    model_cmd->require_subcommand(1);
    auto* info_cmd = model_cmd->add_subcommand("info", "Print config, shape ladder and parameter count");
    info_cmd->add_option("--preset", info_args.preset_name, "Preset name");
    info_cmd->add_option("--config", info_args.config, "Model config JSON file");
    info_cmd->add_option("--checkpoint", info_args.checkpoint, "Checkpoint directory");
    info_cmd->add_option("source", info_args.positional, "Preset, config file or checkpoint");
    info_cmd->add_flag("--json", info_args.as_json, "Print one JSON document");

    ErfArgs erf_args;
    auto* erf_cmd = app.add_subcommand("erf", "Effective receptive field of the centre output");
    erf_cmd->add_option("--model", erf_args.model, "Checkpoint, config file or preset")->required();
    erf_cmd->add_option("--images", erf_args.images, "Image directory or 'synthetic'")->capture_default_str();
    erf_cmd->add_option("--count", erf_args.count, "Number of images")->capture_default_str();
    erf_cmd->add_option("--seed", erf_args.seed, "Seed of the synthetic images")->capture_default_str();
    erf_cmd->add_option("--out", erf_args.out, "Output directory")->required();

    CoverageArgs cov_args;
    auto* cov_cmd = app.add_subcommand("coverage", "Effective kernel diameter per block");
    cov_cmd->add_option("--model", cov_args.model, "Checkpoint, config file or preset")->required();
    cov_cmd->add_option("--threshold", cov_args.threshold, "Relative magnitude threshold")->capture_default_str();
    cov_cmd->add_flag("--full-kernel", cov_args.full_kernel, "Measure |kernel| instead of the window");
    cov_cmd->add_option("--out", cov_args.out, "Output directory")->required();

    TruncateArgs trunc_args;
    auto* trunc_cmd = app.add_subcommand("truncate", "Zero kernel taps outside a centred disk");
    trunc_cmd->add_option("--model", trunc_args.model, "Checkpoint, config file or preset")->required();
    trunc_cmd->add_option("--stage", trunc_args.stage, "Stage, 1-based")->required();
    trunc_cmd->add_option("--rel", trunc_args.rel, "Disk diameter relative to the feature extent")->required();
    trunc_cmd->add_flag("--eval", trunc_args.eval, "Report validation accuracy before and after");
    trunc_cmd->add_option("--data", trunc_args.data, "Run config JSON whose data section is evaluated");
    trunc_cmd->add_option("--out", trunc_args.out, "Output directory")->required();

    BenchConfig bench_args;
    std::string bench_out;
    auto* bench_cmd = app.add_subcommand("bench", "Time mixer forward passes over map sizes");
    bench_cmd->add_option("--variants", bench_args.variants, "hpx, hb, causal, hpx_sep, local, dense")
        ->delimiter(',');
    bench_cmd->add_option("--extents", bench_args.extents, "Square map extents")->delimiter(',');
    bench_cmd->add_option("--channels", bench_args.channels, "Channels")->capture_default_str();
    bench_cmd->add_option("--repeats", bench_args.repeats, "Timed repeats per point")->capture_default_str();
    bench_cmd->add_option("--embed-dim", bench_args.embed_dim, "Filter embedding dimension")->capture_default_str();
    bench_cmd->add_option("--seed", bench_args.seed, "Parameter seed")->capture_default_str();
    bench_cmd->add_option("--out", bench_out, "Output directory")->required();

    std::string filters_model, filters_out;
    auto* filters_cmd = app.add_subcommand("filters", "Implicit filter export");
    filters_cmd->require_subcommand(1);
    auto* dump_cmd = filters_cmd->add_subcommand("dump", "Write materialized kernels as HPX1 and PGM");
    dump_cmd->add_option("--model", filters_model, "Checkpoint, config file or preset")->required();
    dump_cmd->add_option("--out", filters_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code == 0) {
            return kExitOk;
        }
        err << app.help();
        return kExitUsage;
    }

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        if (train_cmd->parsed()) {
            return cmd_train(train_args, args, quiet, out);
        }
        if (info_cmd->parsed()) {
            return cmd_model_info(info_args, out);
        }
        if (erf_cmd->parsed()) {
            return cmd_erf(erf_args, args, out);
        }
        if (cov_cmd->parsed()) {
            return cmd_coverage(cov_args, args, out);
        }
        if (trunc_cmd->parsed()) {
            return cmd_truncate(trunc_args, args, out);
        }
        if (bench_cmd->parsed()) {
            return cmd_bench(bench_args, args, bench_out, out);
        }
        if (dump_cmd->parsed()) {
            return cmd_filters_dump(filters_model, args, filters_out, out);
        }
    } catch (const UsageError& e) {
        err << "hpx: " << e.what() << '\n';
        return kExitUsage;
    } catch (const json::parse_error& e) {
        err << "hpx: malformed JSON: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "hpx: " << e.what() << '\n';
        return kExitFailure;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace hpx::cli
