#include "rcl/tape.hpp"

#include "rcl/error.hpp"

namespace rcl {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::tracked() const { return tape_->tracked(id_); }

Var Tape::variable(Tensor value) {
    if (!value.all_finite()) throw NumericError("non-finite value in tape variable");
    nodes_.push_back(Node{std::move(value), {}, {}, true, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NumericError("non-finite value in tape constant");
    nodes_.push_back(Node{std::move(value), {}, {}, false, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    Node node;
    node.value = std::move(value);
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
        if (&in.tape() != this) throw Error("op mixes vars from different tapes");
        node.inputs.push_back(in.id());
        node.tracked = node.tracked || nodes_[in.id()].tracked;
    }
    if (node.tracked) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var output) {
    if (&output.tape() != this) throw Error("backward on a var from another tape");
    if (consumed_) throw Error("tape already consumed by a backward pass");
    const Node& out = nodes_.at(output.id());
    if (out.value.size() != 1) {
        throw ShapeError("backward needs a scalar output, got " + shape_str(out.value.shape()));
    }
    consumed_ = true;
    Gradients result;
    if (!out.tracked) return result;

    std::vector<Tensor> grads(nodes_.size());
    grads[output.id()] = Tensor::full(out.value.shape(), 1.0);

    std::vector<const Tensor*> in_values;
    std::vector<Tensor*> in_grads;
    for (NodeId id = output.id() + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.tracked || node.leaf || grads[id].empty()) continue;
        in_values.clear();
        in_grads.clear();
        for (NodeId in : node.inputs) {
            in_values.push_back(&nodes_[in].value);
            if (nodes_[in].tracked) {
                if (grads[in].empty()) grads[in] = Tensor::zeros(nodes_[in].value.shape());
                in_grads.push_back(&grads[in]);
            } else {
                in_grads.push_back(nullptr);
            }
        }
        node.backward(BackwardContext{grads[id], node.value, in_values, in_grads});
        // Interior gradients are no longer needed once propagated.
        grads[id] = Tensor();
    }

    for (NodeId id = 0; id < nodes_.size(); ++id) {
        const Node& node = nodes_[id];
        if (!node.leaf || !node.tracked) continue;
        result.emplace(id, grads[id].empty() ? Tensor::zeros(node.value.shape()) : std::move(grads[id]));
    }
    return result;
}

}  // namespace rcl
