#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "doctest.h"
#include "hpx/tensor_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result hpx_run(std::initializer_list<std::string> args) {
    std::vector<std::string> owned{"hpx"};
    owned.insert(owned.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : owned) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    const int code = hpx::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("hpx_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

const char* kTinyRun = R"({
  "model": {"preset": "micro-hpx"},
  "train": {"total_epochs": 2, "warmup_epochs": 1, "batch_size": 16},
  "data": {"train_size": 32, "val_size": 16}
})";

}  // namespace

TEST_CASE("unknown subcommand is a usage error with usage text") {
    const auto r = hpx_run({"bogus"});
    CHECK(r.code == hpx::cli::kExitUsage);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(hpx_run({}).code == hpx::cli::kExitUsage);
    CHECK(hpx_run({"--help"}).code == hpx::cli::kExitOk);
    CHECK(hpx_run({"model"}).code == hpx::cli::kExitUsage);
    CHECK(hpx_run({"erf", "--model", "micro-hpx"}).code == hpx::cli::kExitUsage);
}

TEST_CASE("model info on a preset prints the ladder and parameter count") {
    const auto r = hpx_run({"model", "info", "--preset", "hpx-s18"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("stage 1  56x56x64  blocks 3  mixer hpx  kernel 111x111") != std::string::npos);
    CHECK(r.out.find("stage 4  7x7x512") != std::string::npos);
    CHECK(r.out.find("parameters 27494158") != std::string::npos);

    const auto j = json::parse(hpx_run({"model", "info", "--json", "micro-hb"}).out);
    CHECK(j["config"]["name"] == "micro-hb");
    CHECK(j["stages"].size() == 4);
    CHECK(j["stages"][0]["kernels"][0] == json::array({127}));
    CHECK(j["parameters"].get<std::size_t>() > 0);
}

TEST_CASE("config problems exit with the usage code") {
    const auto dir = scratch("bad_configs");
    write_file(dir / "broken.json", "{\"model\": ");
    write_file(dir / "typo.json", R"({"model": {"preset": "micro-hpx", "num_clases": 3}})");
    write_file(dir / "badsection.json", R"({"modle": {}})");
    for (const char* name : {"broken.json", "typo.json", "badsection.json", "missing.json"}) {
        CAPTURE(name);
        const auto r = hpx_run({"train", "--config", (dir / name).string(), "--out", (dir / "run").string()});
        CHECK(r.code == hpx::cli::kExitUsage);
        CHECK(!r.err.empty());
    }
    CHECK(!fs::exists(dir / "run"));
    CHECK(hpx_run({"model", "info", "--preset", "no-such-model"}).code == hpx::cli::kExitUsage);
    CHECK(hpx_run({"model", "info", "--config", (dir / "typo.json").string()}).code == hpx::cli::kExitUsage);
    CHECK(hpx_run({"model", "info", "--preset", "micro-hpx", "--checkpoint", dir.string()}).code ==
          hpx::cli::kExitUsage);
}

TEST_CASE("train writes a checkpoint whose model info reproduces the config echo") {
    const auto dir = scratch("train");
    write_file(dir / "cfg.json", kTinyRun);
    const auto run = dir / "run1";
    const auto t = hpx_run({"train", "--config", (dir / "cfg.json").string(), "--out", run.string(), "--quiet"});
    REQUIRE_MESSAGE(t.code == 0, t.err);
    for (const char* f : {"history.csv", "config.json", "manifest.json", "checkpoint/manifest.json"}) {
        CHECK_MESSAGE(fs::exists(run / f), f);
    }
    std::ifstream history(run / "history.csv");
    std::string header;
    std::getline(history, header);
    CHECK(header == "epoch,lr,train_loss,val_acc");

    const auto info = hpx_run({"model", "info", "--checkpoint", (run / "checkpoint").string()});
    REQUIRE(info.code == 0);
    const auto echo = read_json(run / "config.json")["model"].dump(2);
    CHECK(t.out.substr(0, echo.size()) == echo);
    CHECK(info.out.substr(0, echo.size()) == echo);

    const auto manifest = read_json(run / "manifest.json");
    CHECK(manifest["subcommand"] == "train");
    CHECK(manifest["seed"] == 0);
    CHECK(manifest["versions"].contains("hpx"));
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);

    // Same config and seed: same hash and bitwise-identical weights.
    const auto run2 = dir / "run2";
    REQUIRE(hpx_run({"train", "--config", (dir / "cfg.json").string(), "--out", run2.string(), "-q"}).code == 0);
    CHECK(read_json(run2 / "manifest.json")["config_hash"] == manifest["config_hash"]);
    CHECK(slurp(run / "checkpoint/stem.conv.weight.hpx1") == slurp(run2 / "checkpoint/stem.conv.weight.hpx1"));

    const auto run3 = dir / "run3";
    REQUIRE(hpx_run({"train", "--config", (dir / "cfg.json").string(), "--out", run3.string(), "-q", "--seed", "7"})
                .code == 0);
    CHECK(read_json(run3 / "manifest.json")["config_hash"] != manifest["config_hash"]);
    CHECK(read_json(run3 / "config.json")["model"]["seed"] == 7);
}

TEST_CASE("erf writes pgm, hpx1 and manifest deterministically") {
    const auto dir = scratch("erf");
    const auto a = hpx_run({"erf", "--model", "micro-hpx", "--count", "2", "--out", (dir / "a").string()});
    REQUIRE_MESSAGE(a.code == 0, a.err);
    for (const char* f : {"erf.pgm", "erf.hpx1", "manifest.json"}) {
        CHECK_MESSAGE(fs::exists(dir / "a" / f), f);
    }
    const auto raw = hpx::load_hpx1(dir / "a/erf.hpx1");
    CHECK(raw.shape() == hpx::Shape{32, 32});
    CHECK(slurp(dir / "a/erf.pgm").rfind("P5", 0) == 0);

    REQUIRE(hpx_run({"erf", "--model", "micro-hpx", "--count", "2", "--out", (dir / "b").string()}).code == 0);
    CHECK(slurp(dir / "a/erf.hpx1") == slurp(dir / "b/erf.hpx1"));
    CHECK(read_json(dir / "a/manifest.json")["config_hash"] == read_json(dir / "b/manifest.json")["config_hash"]);
    // Only the output path differs, so the manifests match up to the arguments.
    auto ma = read_json(dir / "a/manifest.json"), mb = read_json(dir / "b/manifest.json");
    ma.erase("arguments");
    mb.erase("arguments");
    CHECK(ma == mb);
}

TEST_CASE("erf on an image directory of the wrong size is a runtime failure") {
    const auto dir = scratch("erf_images");
    fs::create_directories(dir / "imgs");
    {
        std::ofstream os(dir / "imgs/a.pgm", std::ios::binary);
        os << "P5\n4 4\n255\n" << std::string(16, '\x40');
    }
    const auto r =
        hpx_run({"erf", "--model", "micro-hpx", "--images", (dir / "imgs").string(), "--out", (dir / "o").string()});
    CHECK(r.code == hpx::cli::kExitFailure);
    CHECK(r.err.find("expects 32x32") != std::string::npos);
    CHECK(hpx_run({"erf", "--model", "micro-hpx", "--images", (dir / "none").string(), "--out",
                   (dir / "o").string()})
              .code == hpx::cli::kExitUsage);
}

TEST_CASE("coverage csv header and rows") {
    const auto dir = scratch("coverage");
    REQUIRE(hpx_run({"coverage", "--model", "micro-hb", "--out", dir.string()}).code == 0);
    std::ifstream is(dir / "coverage.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "stage,block,diameter,coverage");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        rows += !line.empty();
    }
    CHECK(rows == 4);
    CHECK(read_json(dir / "manifest.json")["subcommand"] == "coverage");
}

TEST_CASE("truncate reports kept taps and accuracies") {
    const auto dir = scratch("truncate");
    const auto r = hpx_run({"truncate", "--model", "micro-hpx", "--stage", "1", "--rel", "2", "--eval", "--out",
                            dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto j = read_json(dir / "truncate.json");
    CHECK(j["kept_tap_fraction"] == 1.0);
    CHECK(j["val_acc_full"] == j["val_acc_truncated"]);

    CHECK(hpx_run({"truncate", "--model", "micro-hpx", "--stage", "9", "--rel", "1", "--out", dir.string()}).code ==
          hpx::cli::kExitUsage);
    CHECK(hpx_run({"truncate", "--model", "micro-hpx", "--stage", "1", "--rel", "3", "--out", dir.string()}).code ==
          hpx::cli::kExitUsage);
    // Stages without a long convolution cannot be truncated.
    CHECK(hpx_run({"truncate", "--model", "micro-conv", "--stage", "1", "--rel", "1", "--out", dir.string()}).code ==
          hpx::cli::kExitFailure);
}

TEST_CASE("bench writes the timing table and slopes") {
    const auto dir = scratch("bench");
    const auto r = hpx_run({"bench", "--variants", "hpx,dense", "--extents", "8,16", "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::ifstream is(dir / "bench.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line == "variant,extent,channels,pixels,median_seconds");
    const auto slopes = read_json(dir / "slopes.json");
    CHECK(slopes.contains("hpx"));
    CHECK(slopes.contains("dense"));
    CHECK(hpx_run({"bench", "--variants", "nonsense", "--extents", "8,16", "--out", dir.string()}).code ==
          hpx::cli::kExitUsage);
}

TEST_CASE("filters dump writes mean and per-channel kernels per block") {
    const auto dir = scratch("filters");
    REQUIRE(hpx_run({"filters", "dump", "--model", "micro-hpx", "--out", dir.string()}).code == 0);
    const auto mean = hpx::load_hpx1(dir / "stage1_block1_mean.hpx1");
    CHECK(mean.shape() == hpx::Shape{15, 15});
    const auto all = hpx::load_hpx1(dir / "stage1_block1_channels.hpx1");
    CHECK(all.shape() == hpx::Shape{15, 15, 16});
    CHECK(fs::exists(dir / "stage4_block1_channels.pgm"));

    const auto sep = scratch("filters_sep");
    REQUIRE(hpx_run({"filters", "dump", "--model", "micro-hb", "--out", sep.string()}).code == 0);
    CHECK(hpx::load_hpx1(sep / "stage1_block1_mean.hpx1").shape() == hpx::Shape{1, 127});
}
