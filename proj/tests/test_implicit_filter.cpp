#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "hpx/grad_check.hpp"
#include "hpx/implicit_filter.hpp"
#include "hpx/ops.hpp"
#include "oracles.hpp"

using namespace hpx;
using hpx::testing::random_tensor;

namespace {

WindowParams window(WindowVariant v, std::vector<double> alpha, std::vector<double> bias) {
    WindowParams w;
    w.variant = v;
    const std::size_t c = alpha.size();
    w.alpha = Tensor({c}, std::move(alpha));
    w.bias = Tensor({c}, std::move(bias));
    return w;
}

Tensor positions_1d(std::vector<double> t) {
    const std::size_t n = t.size();
    return Tensor({n, 1}, std::move(t));
}

}  // namespace

TEST_CASE("1D basis holds a constant column and sin/cos pairs at integer frequencies") {
    const auto b = build_basis_1d(7, 7, 3, -3);
    REQUIRE(b.features.shape() == Shape{7, 5});
    for (std::size_t i = 0; i < 7; ++i) {
        const double t = static_cast<double>(i) - 3.0;
        CHECK(b.features.at({i, 0}) == 1.0);
        for (std::size_t f = 1; f < 3; ++f) {
            const double phase = 2.0 * std::numbers::pi * static_cast<double>(f) * t / 7.0;
            CHECK(std::abs(b.features.at({i, 2 * f - 1}) - std::sin(phase)) < 1e-15);
            CHECK(std::abs(b.features.at({i, 2 * f}) - std::cos(phase)) < 1e-15);
        }
    }
    CHECK_THROWS_AS(build_basis_1d(7, 7, 0), Error);
}

TEST_CASE("1D basis is periodic in the period") {
    const auto a = build_basis_1d(4, 5, 4, 0);
    const auto b = build_basis_1d(4, 5, 4, 5);
    CHECK(max_abs_diff(a.features, b.features) < 1e-12);
}

TEST_CASE("2D basis splits vertical and horizontal halves and rejects odd K") {
    const auto b = build_basis_2d(3, 2, 6);
    REQUIRE(b.features.shape() == Shape{3 * 5, 6});
    // Row (y, x) = (0, 0) sits at offsets (-1, -2).
    const double py = 2.0 * std::numbers::pi * -1.0 / 3.0;
    const double px = 2.0 * std::numbers::pi * -2.0 / 5.0;
    CHECK(std::abs(b.features.at({0, 0}) - std::sin(py)) < 1e-15);
    CHECK(std::abs(b.features.at({0, 1}) - std::cos(py)) < 1e-15);
    CHECK(std::abs(b.features.at({0, 2}) - std::cos(2 * py)) < 1e-15);
    CHECK(std::abs(b.features.at({0, 3}) - std::sin(px)) < 1e-15);
    CHECK(std::abs(b.features.at({0, 5}) - std::cos(2 * px)) < 1e-15);
    CHECK_THROWS_AS(build_basis_2d(3, 3, 5), Error);
    CHECK_THROWS_AS(build_basis_2d(3, 3, 0), Error);
}

TEST_CASE("window closed forms") {
    const double b = 0.25;
    const auto w = window(WindowVariant::bidirectional, {std::numbers::ln2, 0.7}, {0.0, b});
    const Tensor v = eval_window(w, positions_1d({0.0, 1.0, -1.0, 2.0}));
    CHECK(std::abs(v.at({0, 0}) - 1.0) < 1e-12);
    CHECK(std::abs(v.at({0, 1}) - (1.0 + b)) < 1e-12);
    CHECK(std::abs(v.at({1, 0}) - 0.5) < 1e-12);
    CHECK(std::abs(v.at({2, 0}) - 0.5) < 1e-12);
    CHECK(std::abs(v.at({3, 0}) - 0.25) < 1e-12);
    CHECK(v.at({1, 1}) == v.at({2, 1}));
}

TEST_CASE("bidirectional window is exactly even") {
    std::mt19937_64 rng(5);
    const auto w = init_window(WindowVariant::bidirectional, 4, 30, rng);
    std::vector<double> t;
    for (int i = -29; i <= 29; ++i) {
        t.push_back(i);
    }
    const Tensor v = eval_window(w, positions_1d(t));
    for (std::size_t i = 0; i < 29; ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(v.at({i, c}) == v.at({58 - i, c}));
        }
    }
}

TEST_CASE("radial window is exactly symmetric on rings and non-increasing in distance") {
    auto w = window(WindowVariant::radial2d, {0.3}, {0.1});
    // Ring of radius 5 with integer points.
    const Tensor ring({8, 2}, {3, 4, 4, 3, -3, 4, 4, -3, 0, 5, -5, 0, 0, -5, -4, -3});
    const Tensor v = eval_window(w, ring);
    for (std::size_t i = 1; i < 8; ++i) {
        CHECK(v[i] == v[0]);
    }
    CHECK(std::abs(eval_window(w, Tensor({1, 2}, {0, 0}))[0] - 1.1) < 1e-12);
    const Tensor line({6, 2}, {0, 0, 0, 1, 1, 1, 0, 2, 2, 2, 3, 3});
    const Tensor lv = eval_window(w, line);
    for (std::size_t i = 1; i < 6; ++i) {
        CHECK(lv[i] < lv[i - 1]);
    }
}

TEST_CASE("causal window rejects negative offsets and negative decay") {
    const auto w = window(WindowVariant::causal, {0.1}, {0.0});
    CHECK_THROWS_AS(eval_window(w, positions_1d({-1.0})), Error);
    const auto bad = window(WindowVariant::bidirectional, {-0.1}, {0.0});
    CHECK_THROWS_AS(eval_window(bad, positions_1d({1.0})), Error);
}

TEST_CASE("window initialisation spans ln2/L .. 5 ln2/L with zero bias") {
    std::mt19937_64 rng(1);
    const auto w = init_window(WindowVariant::radial2d, 256, 56, rng);
    for (std::size_t c = 0; c < 256; ++c) {
        CHECK(w.alpha[c] >= std::numbers::ln2 / 56);
        CHECK(w.alpha[c] <= 5 * std::numbers::ln2 / 56);
        CHECK(w.bias[c] == 0.0);
    }
}

TEST_CASE("kernel grids have the expected extents") {
    CHECK(causal_grid(16, 4).extent == Shape{16});
    CHECK(bidirectional_grid(3136, 8).extent == Shape{6271});
    CHECK(bidirectional_grid(3136, 8).features.shape() == Shape{6271, 15});
    for (std::size_t l : {56u, 28u, 14u, 7u}) {
        const auto g = pixel_grid(l, l, 4);
        CHECK(g.extent == Shape{2 * l - 1, 2 * l - 1});
        CHECK(g.num_positions() == (2 * l - 1) * (2 * l - 1));
        CHECK(grid_feature_extent(g) == l);
    }
    CHECK(pixel_grid(56, 56, 4).extent[0] == 111);
}

TEST_CASE("tap radius is Euclidean and capped at F - 1") {
    const auto g = pixel_grid(3, 3, 2);
    const Tensor r = tap_radius(g);
    // Corner (-2, -2) has distance 2.83 but is capped at 2.
    CHECK(r[0] == 2.0);
    CHECK(r[2 * 5 + 2] == 0.0);
    CHECK(r[2 * 5 + 3] == 1.0);
    CHECK(std::abs(r[1 * 5 + 1] - std::sqrt(2.0)) < 1e-15);
}

TEST_CASE("materialize_filter with a constant FFN reproduces the window") {
    std::mt19937_64 rng(2);
    const auto grid = bidirectional_grid(5, 3);
    auto ffn = FilterFFN::init(grid.feature_dim(), 6, 2, rng);
    ffn.w2.fill(0.0);
    ffn.b2 = Tensor({2}, 1.0);
    const auto w = window(WindowVariant::bidirectional, {0.2, 0.9}, {0.1, -0.3});
    const Tensor k = materialize_filter(grid, ffn, w);
    CHECK(max_abs_diff(k, eval_window(w, grid.positions)) < 1e-15);
}

TEST_CASE("materialize_filter decays to zero for a huge decay rate") {
    std::mt19937_64 rng(3);
    const auto grid = bidirectional_grid(6, 3);
    const auto ffn = FilterFFN::init(grid.feature_dim(), 6, 1, rng);
    const auto w = window(WindowVariant::bidirectional, {1e6}, {0.0});
    const Tensor k = materialize_filter(grid, ffn, w);
    for (std::size_t p = 0; p < grid.num_positions(); ++p) {
        if (grid.positions[p] != 0.0) {
            CHECK(std::abs(k[p]) < 1e-30);
        }
    }
}

TEST_CASE("materialize_filter rejects mismatched channel counts") {
    std::mt19937_64 rng(4);
    const auto grid = pixel_grid(4, 4, 4);
    const auto ffn = FilterFFN::init(grid.feature_dim(), 8, 3, rng);
    const auto w = init_window(WindowVariant::radial2d, 2, 4, rng);
    CHECK_THROWS_AS(materialize_filter(grid, ffn, w), Error);
}

TEST_CASE("stage-1 pixel kernel has 111 x 111 taps by 64 channels") {
    std::mt19937_64 rng(6);
    const auto grid = pixel_grid(56, 56, 4);
    const auto ffn = FilterFFN::init(grid.feature_dim(), 8, 64, rng);
    const auto w = init_window(WindowVariant::radial2d, 64, 56, rng);
    CHECK(materialize_filter(grid, ffn, w).shape() == Shape{111 * 111, 64});
}

TEST_CASE("resampling to the same size is bitwise identical") {
    std::mt19937_64 rng(7);
    const auto grid = pixel_grid(6, 6, 4);
    const auto ffn = FilterFFN::init(grid.feature_dim(), 8, 3, rng);
    const auto w = init_window(WindowVariant::radial2d, 3, 6, rng);
    CHECK(resample_filter(ffn, w, 4, {6, 6}, {6, 6}) == materialize_filter(grid, ffn, w));
    const auto g1 = bidirectional_grid(9, 3);
    const auto f1 = FilterFFN::init(g1.feature_dim(), 6, 2, rng);
    const auto w1 = init_window(WindowVariant::bidirectional, 2, 9, rng);
    CHECK(resample_filter(f1, w1, 3, {9}, {9}) == materialize_filter(g1, f1, w1));
}

TEST_CASE("resampled kernels reproduce old taps at coinciding normalized coordinates") {
    std::mt19937_64 rng(8);
    // Periods 5 -> 15 (L = 3 -> 8): new offset 3t coincides with old offset t.
    const auto old_grid = pixel_grid(3, 3, 4);
    const auto ffn = FilterFFN::init(old_grid.feature_dim(), 8, 2, rng);
    const auto w = init_window(WindowVariant::radial2d, 2, 3, rng);
    const Tensor old_k = materialize_filter(old_grid, ffn, w);
    const Tensor new_k = resample_filter(ffn, w, 4, {3, 3}, {8, 8});
    REQUIRE(new_k.shape() == Shape{15 * 15, 2});
    for (long ty = -2; ty <= 2; ++ty) {
        for (long tx = -2; tx <= 2; ++tx) {
            const auto po = static_cast<std::size_t>((ty + 2) * 5 + (tx + 2));
            const auto pn = static_cast<std::size_t>((3 * ty + 7) * 15 + (3 * tx + 7));
            for (std::size_t c = 0; c < 2; ++c) {
                CHECK(std::abs(old_k[po * 2 + c] - new_k[pn * 2 + c]) < 1e-9);
            }
        }
    }
    // 1D causal: periods 4 -> 12.
    const auto cg = causal_grid(4, 3);
    const auto cf = FilterFFN::init(cg.feature_dim(), 6, 1, rng);
    const auto cw = init_window(WindowVariant::causal, 1, 4, rng);
    const Tensor ck = materialize_filter(cg, cf, cw);
    const Tensor cn = resample_filter(cf, cw, 3, {4}, {12});
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(std::abs(ck[t] - cn[3 * t]) < 1e-9);
    }
}

TEST_CASE("resampled stage kernels at 384 px are 191, 95, 47, 23") {
    std::mt19937_64 rng(9);
    const std::array<std::size_t, 4> old_l{56, 28, 14, 7};
    const std::array<std::size_t, 4> new_l{96, 48, 24, 12};
    const std::array<std::size_t, 4> expect{191, 95, 47, 23};
    for (std::size_t s = 0; s < 4; ++s) {
        const auto g = resample_grid(WindowVariant::radial2d, 4, {old_l[s], old_l[s]}, {new_l[s], new_l[s]});
        CHECK(g.extent == Shape{expect[s], expect[s]});
    }
    CHECK_THROWS_AS(resample_grid(WindowVariant::radial2d, 4, {3, 3}, {0, 3}), Error);
}

TEST_CASE("materialize_filter is differentiable end to end") {
    std::mt19937_64 rng(10);
    for (const auto& grid : {bidirectional_grid(5, 3), pixel_grid(3, 4, 4), causal_grid(6, 2)}) {
        const auto ffn = FilterFFN::init(grid.feature_dim(), 5, 2, rng);
        auto w = init_window(grid.variant, 2, 5, rng);
        w.bias = random_tensor({2}, rng, -0.5, 0.5);
        const Tensor weights = random_tensor({grid.num_positions(), 2}, rng);
        const auto f = [&grid, &weights](Tape&, std::span<const Var> v) {
            const FilterFFNVars vars{v[0], v[1], v[2], v[3], v[4], v[5]};
            return weighted_sum(materialize_filter(grid, vars, v[6], v[7]), weights);
        };
        const std::vector<Tensor> inputs{ffn.w0, ffn.b0, ffn.w1, ffn.b1, ffn.w2, ffn.b2, w.alpha, w.bias};
        CHECK(grad_check(f, inputs) < 1e-5);
    }
}
