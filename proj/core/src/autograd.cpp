#include "hpx/autograd.hpp"

namespace hpx {

const Tensor& Var::value() const {
    if (tape_ == nullptr) {
        throw Error("use of an unbound Var");
    }
    return tape_->node(*this).value;
}

const Tape::Node& Tape::node(const Var& v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) {
        throw Error("Var does not belong to this tape");
    }
    return nodes_[v.id_];
}

Var Tape::leaf(Tensor value) {
    if (!value.all_finite()) {
        throw Error("non-finite value in leaf tensor");
    }
    nodes_.push_back(Node{std::move(value), {}, {}, record_grads_});
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, Backward backward) {
    if (consumed_) {
        throw Error("tape already consumed by backward(); record a new forward pass");
    }
    if (!value.all_finite()) {
        throw Error("non-finite value produced by op with output shape " + shape_str(value.shape()));
    }
    Node n{std::move(value), {}, {}, false};
    if (record_grads_) {
        n.inputs.reserve(inputs.size());
        for (const auto& in : inputs) {
            if (in.tape_ != this) {
                throw Error("op mixes Vars from different tapes");
            }
            n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
            n.inputs.push_back(in.id_);
        }
        if (n.requires_grad) {
            n.backward = std::move(backward);
        }
    }
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

bool Tape::requires_grad(const Var& v) const { return node(v).requires_grad; }

void Tape::backward(const Var& scalar_output) {
    if (node(scalar_output).value.size() != 1) {
        throw Error("backward() without a seed needs a scalar output, got " + shape_str(scalar_output.shape()));
    }
    backward(scalar_output, Tensor(scalar_output.shape(), 1.0));
}

void Tape::backward(const Var& output, const Tensor& seed) {
    if (!record_grads_) {
        throw Error("backward() on a tape recorded without gradients");
    }
    if (consumed_) {
        throw Error("tape consumed twice; record a new forward pass");
    }
    const auto& out = node(output);
    if (seed.shape() != out.value.shape()) {
        throw Error("backward seed shape " + shape_str(seed.shape()) + " != output " + shape_str(out.value.shape()));
    }
    consumed_ = true;
    grads_.assign(nodes_.size(), Tensor{});
    grads_[output.id_] = seed;

    std::vector<Tensor*> input_grads;
    for (std::size_t id = output.id_ + 1; id-- > 0;) {
        auto& n = nodes_[id];
        if (!n.backward || grads_[id].empty()) {
            continue;
        }
        input_grads.clear();
        for (auto in : n.inputs) {
            if (!nodes_[in].requires_grad) {
                input_grads.push_back(nullptr);
                continue;
            }
            auto& g = grads_[in];
            if (g.empty()) {
                g = Tensor(nodes_[in].value.shape(), 0.0);
            }
            input_grads.push_back(&g);
        }
        n.backward(grads_[id], input_grads);
    }
}

Tensor Tape::grad(const Var& v) const {
    const auto& n = node(v);
    if (!consumed_) {
        throw Error("grad() before backward()");
    }
    if (v.id_ < grads_.size() && !grads_[v.id_].empty()) {
        return grads_[v.id_];
    }
    return Tensor(n.value.shape(), 0.0);
}

}  // namespace hpx
