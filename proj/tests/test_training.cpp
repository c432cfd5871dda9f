#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "hpx/ops.hpp"
#include "hpx/training.hpp"
#include "oracles.hpp"

using namespace hpx;
using hpx::testing::random_tensor;

namespace {

double ce(const Tensor& logits, std::span<const std::size_t> labels, double eps) {
    Tape tape(false);
    return cross_entropy_smoothed(tape.constant(logits), labels, eps).value()[0];
}

DatasetSplit small_blobs(std::size_t train, std::size_t val, std::uint64_t seed = 3) {
    DatasetSpec s;
    s.train_size = train;
    s.val_size = val;
    s.seed = seed;
    return make_quadrant_blobs(s);
}

void write_ppm(const std::filesystem::path& p, std::size_t w, std::size_t h, unsigned char value) {
    std::ofstream os(p, std::ios::binary);
    os << "P6\n" << w << " " << h << "\n255\n";
    for (std::size_t i = 0; i < w * h * 3; ++i) {
        os.put(static_cast<char>(value));
    }
}

}  // namespace

TEST_CASE("cosine schedule with warmup") {
    const double peak = 1e-3, fin = 1e-5;
    CHECK(cosine_warmup_lr(0, 10, 100, peak, fin) == 0.0);
    CHECK(cosine_warmup_lr(1, 10, 100, peak, fin) <= peak / 2);
    CHECK(cosine_warmup_lr(10, 10, 100, peak, fin) == doctest::Approx(peak));
    CHECK(cosine_warmup_lr(100, 10, 100, peak, fin) == doctest::Approx(fin));
    CHECK(std::abs(cosine_warmup_lr(55, 10, 100, peak, fin) - (peak + fin) / 2) < 1e-15);
    const double bound = peak / 10 + (peak - fin) * std::numbers::pi / (2.0 * 90);
    for (std::size_t s = 0; s < 100; ++s) {
        CHECK(std::abs(cosine_warmup_lr(s + 1, 10, 100, peak, fin) - cosine_warmup_lr(s, 10, 100, peak, fin)) <=
              bound + 1e-18);
    }
}

TEST_CASE("smoothed cross entropy") {
    const std::array<std::size_t, 2> labels{1, 3};
    CHECK(std::abs(ce(Tensor({2, 4}, 0.7), labels, 0.0) - std::log(4.0)) < 1e-12);
    Tensor sharp({2, 4});
    sharp.at({0, 1}) = 100.0;
    sharp.at({1, 3}) = 100.0;
    CHECK(ce(sharp, labels, 0.0) < 1e-40);
    std::mt19937_64 rng(1);
    const Tensor logits = random_tensor({2, 4}, rng, -3.0, 3.0);
    const double eps = 0.1;
    double direct = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            z += std::exp(logits.at({i, j}));
        }
        for (std::size_t j = 0; j < 4; ++j) {
            const double t = (j == labels[i] ? 1.0 - eps : 0.0) + eps / 4.0;
            direct -= t * (logits.at({i, j}) - std::log(z));
        }
    }
    CHECK(std::abs(ce(logits, labels, eps) - direct / 2.0) < 1e-10);
    Tensor bad({2, 4});
    bad[0] = std::nan("");
    CHECK_THROWS_AS(ce(bad, labels, 0.1), Error);
    Tape tape(false);
    CHECK_THROWS_AS(cross_entropy_smoothed(tape.constant(Tensor({2, 4})), std::array<std::size_t, 2>{1, 4}, 0.1),
                    Error);
}

TEST_CASE("AdamW with zero gradients only applies the decay factor") {
    std::mt19937_64 rng(2);
    std::vector<Tensor> p{random_tensor({3, 2}, rng)};
    const Tensor before = p[0];
    const std::vector<Tensor> g{Tensor({3, 2})};
    AdamState st;
    adamw_step(p, g, st, 0.01, {}, 0.05);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(p[0][i] == before[i] * (1.0 - 0.01 * 0.05));
    }
}

TEST_CASE("AdamW first step closed form") {
    const double lr = 0.1, wd = 0.2, g = -0.3, w0 = 0.7, eps = 1e-8;
    std::vector<Tensor> p{Tensor({1}, w0)};
    AdamState st;
    adamw_step(p, std::vector<Tensor>{Tensor({1}, g)}, st, lr, {0.9, 0.999, eps}, wd);
    CHECK(std::abs(p[0][0] - (w0 * (1 - lr * wd) - lr * g / (std::abs(g) + eps))) < 1e-15);
}

TEST_CASE("AdamW converges on a convex quadratic") {
    std::mt19937_64 rng(3);
    Tensor target = random_tensor({5}, rng);
    Tensor start = random_tensor({5}, rng);
    const double norm = std::sqrt([&] {
        double s = 0;
        for (auto v : start.data()) s += v * v;
        return s;
    }());
    for (auto& v : start.data()) {
        v /= norm;
    }
    std::vector<Tensor> p{start};
    AdamState st;
    for (int i = 0; i < 200; ++i) {
        Tensor g({5});
        for (std::size_t j = 0; j < 5; ++j) {
            g[j] = 2.0 * (p[0][j] - target[j]);
        }
        adamw_step(p, std::vector<Tensor>{g}, st, 0.05, {}, 0.0);
    }
    double dist = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
        dist += (p[0][j] - target[j]) * (p[0][j] - target[j]);
    }
    CHECK(std::sqrt(dist) < 1e-2);
}

TEST_CASE("AdamW without decay is bitwise Adam") {
    std::mt19937_64 rng(4);
    std::vector<Tensor> a{random_tensor({4, 3}, rng), random_tensor({3}, rng)};
    std::vector<Tensor> b = a;
    AdamState sa, sb;
    for (int i = 0; i < 50; ++i) {
        const std::vector<Tensor> g{random_tensor({4, 3}, rng), random_tensor({3}, rng)};
        adamw_step(a, g, sa, 0.01, {}, 0.0);
        adam_step(b, g, sb, 0.01, {});
        REQUIRE(a == b);
    }
}

TEST_CASE("optimizer rejects non-finite gradients and mismatched state") {
    std::vector<Tensor> p{Tensor({2}, 1.0)};
    AdamState st;
    Tensor g({2});
    g[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(adamw_step(p, std::vector<Tensor>{g}, st, 0.1, {}, 0.0), Error);
    CHECK_THROWS_AS(adamw_step(p, std::vector<Tensor>{}, st, 0.1, {}, 0.0), Error);
}

TEST_CASE("quadrant blobs are balanced, deterministic and disjoint") {
    const auto a = small_blobs(40, 20);
    const auto b = small_blobs(40, 20);
    CHECK(a.train.images == b.train.images);
    CHECK(a.train.labels == b.train.labels);
    CHECK(a.train.images.shape() == Shape{40, 32, 32, 3});
    std::array<std::size_t, 4> counts{};
    for (auto l : a.train.labels) {
        ++counts[l];
    }
    CHECK(counts == std::array<std::size_t, 4>{10, 10, 10, 10});
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        for (std::size_t j = 0; j < a.val.size(); ++j) {
            CHECK_FALSE(a.train.image(i) == a.val.image(j));
        }
    }
    // The brightest pixel sits in the labelled quadrant.
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        const Tensor img = a.train.image(i);
        std::size_t best = 0;
        double best_v = -1.0;
        for (std::size_t p = 0; p < 32 * 32; ++p) {
            const double v = img[3 * p] + img[3 * p + 1] + img[3 * p + 2];
            if (v > best_v) {
                best_v = v;
                best = p;
            }
        }
        const std::size_t quadrant = (best / 32 >= 16 ? 2 : 0) + (best % 32 >= 16 ? 1 : 0);
        CHECK(quadrant == a.train.labels[i]);
    }
    DatasetSpec bad;
    bad.num_classes = 3;
    CHECK_THROWS_AS(make_quadrant_blobs(bad), Error);
}

TEST_CASE("directory datasets load class sub-directories") {
    namespace fs = std::filesystem;
    const auto root = fs::temp_directory_path() / "hpx_test_images";
    fs::remove_all(root);
    for (const char* cls : {"cat", "dog"}) {
        fs::create_directories(root / cls);
        for (int i = 0; i < 5; ++i) {
            write_ppm(root / cls / ("img" + std::to_string(i) + ".ppm"), 8, 8, cls[0] == 'c' ? 10 : 200);
        }
    }
    DatasetSpec s;
    s.source = DatasetSource::directory;
    s.directory = root;
    s.height = s.width = 8;
    const auto split = load_dataset(s);
    CHECK(split.train.size() == 8);
    CHECK(split.val.size() == 2);
    CHECK(split.train.class_names == std::vector<std::string>{"cat", "dog"});
    CHECK(split.val.labels == std::vector<std::size_t>{0, 1});
    CHECK(std::abs(split.val.images[0] - 10.0 / 255.0) < 1e-12);
    s.height = 16;
    CHECK_THROWS_AS(load_dataset(s), Error);
    s.directory = root / "missing";
    CHECK_THROWS_AS(load_dataset(s), Error);
    fs::remove_all(root);
}

TEST_CASE("training is deterministic and rejects mismatched data") {
    const auto data = small_blobs(48, 16);
    TrainConfig tc;
    tc.total_epochs = 2;
    tc.warmup_epochs = 1;
    tc.batch_size = 16;
    Model a(preset("micro-conv"));
    Model b(preset("micro-conv"));
    const auto ra = train(a, data, tc);
    const auto rb = train(b, data, tc);
    REQUIRE(ra.history.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
        CHECK(ra.history[i].val_acc == rb.history[i].val_acc);
    }
    auto cfg = preset("micro-conv");
    cfg.num_classes = 5;
    Model wrong(cfg);
    CHECK_THROWS_AS(train(wrong, data, tc), Error);
    tc.warmup_epochs = 2;
    CHECK_THROWS_AS(train(a, data, tc), Error);
}

TEST_CASE("zero learning rate without decay leaves the model unchanged") {
    const auto data = small_blobs(32, 16);
    TrainConfig tc;
    tc.total_epochs = 3;
    tc.warmup_epochs = 1;
    tc.lr_peak = 0.0;
    tc.lr_final = 0.0;
    tc.weight_decay = 0.0;
    tc.batch_size = 8;
    Model m(preset("micro-hpx"));
    const auto before = m.params();
    const auto r = train(m, data, tc);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(m.params()[i].value == before[i].value);
    }
    for (const auto& rec : r.history) {
        CHECK(std::abs(rec.train_loss - r.history[0].train_loss) < 1e-12);
        CHECK(rec.val_acc == r.history[0].val_acc);
    }
}

TEST_CASE("loss decreases over five epochs for every mixer variant") {
    const auto data = small_blobs(128, 32);
    TrainConfig tc;
    tc.total_epochs = 5;
    tc.warmup_epochs = 1;
    tc.batch_size = 16;
    for (const char* layout : {"causal", "hb", "hpx", "hpxsep", "conv"}) {
        Model m(preset(std::string("micro-") + layout));
        const auto r = train(m, data, tc);
        CHECK_MESSAGE(r.history.back().train_loss < r.history.front().train_loss, layout);
    }
}

TEST_CASE("history CSV and run configs") {
    const auto path = std::filesystem::temp_directory_path() / "hpx_history.csv";
    const std::vector<EpochRecord> h{{1, 0.5, 1.25, 0.75}};
    write_history_csv(path, h);
    std::ifstream is(path);
    std::string header, row;
    std::getline(is, header);
    std::getline(is, row);
    CHECK(header == "epoch,lr,train_loss,val_acc");
    CHECK(row == "1,0.5,1.25,0.75");
    std::filesystem::remove(path);

    const auto rc = run_config_from_json(
        R"({"model": {"preset": "micro-hb"}, "train": {"total_epochs": 3, "warmup_epochs": 1}, "data": {"train_size": 64}})");
    CHECK(rc.model == preset("micro-hb"));
    CHECK(rc.train.total_epochs == 3);
    CHECK(rc.data.train_size == 64);
    CHECK(run_config_from_json("{}").model == preset("micro-hpx"));
    CHECK_THROWS_AS(run_config_from_json(R"({"train": {"epochs": 3}})"), Error);
    CHECK_THROWS_AS(run_config_from_json(R"({"optimizer": {}})"), Error);
    CHECK_THROWS_AS(run_config_from_json(R"({"data": {"source": "web"}})"), Error);
    CHECK_THROWS_AS(run_config_from_json(R"({"train": {"label_smoothing": 1.0}})"), Error);
}
