#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "hpx/autograd.hpp"

namespace hpx {

// Builds a scalar objective from leaf Vars bound on the given tape.
using ScalarObjective = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
    double eps{1e-5};
    // Above this many coordinates a seeded random subset of this size is probed.
    std::size_t max_coordinates{10000};
    std::uint64_t seed{20240229};
};

// Max over probed coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|),
// numeric being the central difference (f(x + eps) - f(x - eps)) / 2eps.
double grad_check(const ScalarObjective& f, std::span<const Tensor> inputs, const GradCheckOptions& options = {});

}  // namespace hpx
