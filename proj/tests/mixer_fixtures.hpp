#pragma once

// Random mixer instances and thin wrappers that run the library mixers on
// plain tensors, shared by the mixer tests and the acceptance suite.

#include <random>

#include "hpx/mixers.hpp"
#include "hpx/ops.hpp"
#include "oracles.hpp"

namespace hpx::testing {

// kind: 0 causal, 1 h_b, 2 h_px, 3 separable. extent is {L} or {Ly, Lx}.
inline MixerTensors random_mixer(int kind, const Shape& extent, std::size_t c, std::mt19937_64& rng) {
    const bool seq = kind <= 1;
    const std::size_t k = seq ? 3 : 5;
    MixerTensors m;
    m.pw = random_tensor({c, 3 * c}, rng);
    m.pb = random_tensor({3 * c}, rng);
    m.dw = random_tensor({seq ? 1u : k, k, 3 * c}, rng);
    m.db = random_tensor({3 * c}, rng);
    switch (kind) {
        case 0:
            m.kernels = {random_tensor({extent[0], c}, rng)};
            break;
        case 1:
            m.kernels = {random_tensor({2 * extent[0] - 1, c}, rng)};
            break;
        case 2:
            m.kernels = {random_tensor({2 * extent[0] - 1, 2 * extent[1] - 1, c}, rng)};
            break;
        default:
            m.kernels = {random_tensor({2 * extent[1] - 1, c}, rng), random_tensor({2 * extent[0] - 1, c}, rng)};
            break;
    }
    return m;
}

inline Var run_mixer(int kind, const Var& x, std::span<const Var> v) {
    const ProjectionVars proj{v[0], v[1], v[2], v[3]};
    switch (kind) {
        case 0:
            return hyena_causal_mix(x, proj, v[4]);
        case 1:
            return hyena_bidirectional_mix(x, proj, v[4]);
        case 2:
            return hyena_pixel_mix(x, proj, v[4]);
        default:
            return separable_mix(x, proj, v[4], v[5]);
    }
}

inline std::vector<Tensor> mixer_inputs(const Tensor& x, const MixerTensors& m) {
    std::vector<Tensor> in{x, m.pw, m.pb, m.dw, m.db};
    in.insert(in.end(), m.kernels.begin(), m.kernels.end());
    return in;
}

inline Tensor library_hyena(int kind, const Tensor& x, const MixerTensors& m) {
    Tape tape(false);
    std::vector<Var> v;
    for (const auto& t : mixer_inputs(x, m)) {
        v.push_back(tape.constant(t));
    }
    return run_mixer(kind, v[0], std::span<const Var>(v).subspan(1)).value();
}

inline LocalConvTensors random_local_conv(std::size_t c, std::size_t e, std::mt19937_64& rng) {
    return {random_tensor({c, e}, rng),
            random_tensor({e}, rng),
            random_tensor({kLocalConvKernel, kLocalConvKernel, e}, rng),
            random_tensor({e}, rng),
            Tensor({1}, 0.8944),
            Tensor({1}, -0.4472),
            random_tensor({e, c}, rng),
            random_tensor({c}, rng)};
}

inline std::vector<Tensor> local_conv_inputs(const Tensor& x, const LocalConvTensors& p) {
    return {x, p.ew, p.eb, p.dw, p.db, p.s, p.b, p.cw, p.cb};
}

inline Var run_local_conv(const Var& x, std::span<const Var> v) {
    return local_conv_mix(x, {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
}

inline Tensor library_local_conv(const Tensor& x, const LocalConvTensors& p) {
    Tape tape(false);
    std::vector<Var> v;
    for (const auto& t : local_conv_inputs(x, p)) {
        v.push_back(tape.constant(t));
    }
    return run_local_conv(v[0], std::span<const Var>(v).subspan(1)).value();
}

}  // namespace hpx::testing
