#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "hpx/tensor.hpp"

namespace hpx {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_{nullptr};
    std::size_t id_{0};
};

// Vector-Jacobian product of one recorded op: given dL/d(output), accumulate
// dL/d(input_i) into grads[i]. grads[i] is pre-sized to input i's shape and
// may already hold contributions from other consumers.
using Backward = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grads)>;

// Single-writer record of a forward pass. backward() replays the recorded ops
// in reverse order of recording, which is a reverse topological order because
// inputs must exist before the op that consumes them.
class Tape {
public:
    // record_grads = false keeps values only; backward() is then an error.
    explicit Tape(bool record_grads = true) : record_grads_(record_grads) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);
    Var constant(Tensor value);
    Var record(Tensor value, std::vector<Var> inputs, Backward backward);

    bool records_grads() const { return record_grads_; }
    bool requires_grad(const Var& v) const;
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(output) and propagates. A tape can be consumed once.
    void backward(const Var& output, const Tensor& seed);
    void backward(const Var& scalar_output);

    // Gradient after backward(); exact zeros for inputs the output does not use.
    Tensor grad(const Var& v) const;

private:
    friend class Var;

    struct Node {
        Tensor value;
        std::vector<std::size_t> inputs;
        Backward backward;
        bool requires_grad{false};
    };

    const Node& node(const Var& v) const;

    std::deque<Node> nodes_{};
    std::vector<Tensor> grads_{};
    bool record_grads_{true};
    bool consumed_{false};
};

}  // namespace hpx
