#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hpx/autograd.hpp"

// Differentiable tensor ops. Spatial maps are channels-last: [H, W, C] for
// images and feature maps, [L, C] for sequences.
namespace hpx {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

// Broadcast a [C] vector over the last axis of x.
Var add_channel(const Var& x, const Var& bias);
Var mul_channel(const Var& x, const Var& scale);

// x[..., in] @ w[in, out] (+ b[out]).
Var linear(const Var& x, const Var& w);
Var linear(const Var& x, const Var& w, const Var& b);

Var sin(const Var& x);

// s * relu(x)^2 + b with learnable scalars s, b (shape [1]).
Var star_relu(const Var& x, const Var& s, const Var& b);

// Normalizes each position over the last axis, then gamma * xhat + beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// Per-channel 2D correlation, stride 1, zero padding, output extent == input extent.
// out[i, j, c] = sum_{a, b} w[a, b, c] * x[i + a - pad_top, j + b - pad_left, c].
Var depthwise_conv2d(const Var& x, const Var& w, std::size_t pad_top, std::size_t pad_left);

// Dense strided 2D correlation with symmetric zero padding: x[H, W, Cin], w[k, k, Cin, Cout].
Var conv2d(const Var& x, const Var& w, std::size_t stride, std::size_t pad);

// Channels [start, start + count) of the last axis.
Var slice_channels(const Var& x, std::size_t start, std::size_t count);

Var reshape(const Var& x, Shape shape);

// Mean over every position: [..., C] -> [C].
Var mean_positions(const Var& x);

// Stack equally shaped values along a new leading axis.
Var stack(std::span<const Var> xs);

Var sum(const Var& x);
// sum(x * weights) with constant weights.
Var weighted_sum(const Var& x, const Tensor& weights);

// exp(-alpha[c] * d[p]) + bias[c] -> [P, C]. Alpha must be non-negative.
Var decay_window(const Var& alpha, const Var& bias, const Tensor& distances);

// Mean over the batch of -sum_c t_c log softmax(logits)_c, t = (1 - eps) onehot + eps / K.
Var cross_entropy_smoothed(const Var& logits, std::span<const std::size_t> labels, double eps);

}  // namespace hpx
