#include "hpx/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace hpx {

namespace {

double evaluate(const ScalarObjective& f, const std::vector<Tensor>& inputs) {
    Tape tape(false);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) {
        vars.push_back(tape.constant(t));
    }
    const Var out = f(tape, vars);
    if (out.value().size() != 1) {
        throw Error("grad_check: objective must be scalar, got " + shape_str(out.shape()));
    }
    return out.value()[0];
}

}  // namespace

double grad_check(const ScalarObjective& f, std::span<const Tensor> inputs, const GradCheckOptions& options) {
    if (!(options.eps > 0.0 && options.eps <= 1e-2)) {
        throw Error("grad_check: eps must be in (0, 1e-2]");
    }
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& t : inputs) {
            vars.push_back(tape.leaf(t));
        }
        const Var out = f(tape, vars);
        if (out.value().size() != 1) {
            throw Error("grad_check: objective must be scalar, got " + shape_str(out.shape()));
        }
        tape.backward(out);
        for (const auto& v : vars) {
            analytic.push_back(tape.grad(v));
        }
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            coords.emplace_back(i, j);
        }
    }
    if (coords.size() > options.max_coordinates) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(options.max_coordinates);
    }

    std::vector<Tensor> probe(inputs.begin(), inputs.end());
    double worst = 0.0;
    for (const auto& [i, j] : coords) {
        const double x0 = probe[i][j];
        probe[i][j] = x0 + options.eps;
        const double fp = evaluate(f, probe);
        probe[i][j] = x0 - options.eps;
        const double fm = evaluate(f, probe);
        probe[i][j] = x0;
        const double numeric = (fp - fm) / (2.0 * options.eps);
        const double a = analytic[i][j];
        const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace hpx
