#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "rcl/tensor.hpp"

namespace rcl {

using NodeId = std::size_t;
class Tape;

/// Handle to a value recorded on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    NodeId id() const { return id_; }
    bool tracked() const;
    Tape& tape() const { return *tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

/// What a node's backward function sees: the output gradient, the saved
/// forward values, and accumulation targets for tracked inputs (nullptr
/// for untracked ones).
struct BackwardContext {
    const Tensor& grad_out;
    const Tensor& output;
    std::span<const Tensor* const> inputs;
    std::span<Tensor* const> grad_inputs;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Gradient per tracked leaf, keyed by node id.
using Gradients = std::map<NodeId, Tensor>;

/// Append-only record of primitive operations. Nodes are stored in
/// creation order, so inputs always precede their consumers. A tape
/// supports exactly one backward pass.
///
/// Not thread-safe; use one tape per thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf whose gradient is reported by backward().
    Var variable(Tensor value);
    // Leaf excluded from differentiation.
    Var constant(Tensor value);

    // Records an op output. The node is tracked iff any input is tracked;
    // untracked nodes drop their backward function.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

    // Reverse sweep from a scalar output. Returns d(output)/d(leaf) for
    // every tracked leaf; an untracked output yields an empty map.
    Gradients backward(Var output);

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    bool tracked(NodeId id) const { return nodes_.at(id).tracked; }
    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> inputs;
        BackwardFn backward;
        bool tracked = false;
        bool leaf = false;
    };

    // deque keeps value references stable while the tape grows.
    std::deque<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace rcl
