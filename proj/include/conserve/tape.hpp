#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "conserve/param_store.hpp"
#include "conserve/tensor.hpp"

namespace conserve {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode differentiation tape. Nodes are appended in evaluation
/// order, so parents always precede children; backward() walks the nodes
/// in exact reverse order and accumulates into ParamStore gradient buffers.
class Tape {
public:
    /// Propagates the gradient of node `self` into its parents.
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var scalar(double value) { return constant(Tensor::scalar(value)); }

    /// Leaf bound to a stored parameter. Repeated requests for the same
    /// parameter return the same node. The store must outlive the tape and
    /// must not be modified while the tape is in use.
    Var param(ParamStore& store, const std::string& name);

    /// Appends an operation node. `backward` is dropped when no parent
    /// requires a gradient.
    Var record(Tensor value, const char* op, std::vector<std::size_t> parents, BackwardFn backward);

    /// Seeds d(root)/d(root) = 1 and accumulates into the gradient buffers of
    /// every parameter reachable from root. Root must hold a single value.
    void backward(Var root);

    const Tensor& value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const char* op(std::size_t id) const { return nodes_[id].op; }
    const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient accumulated for a node during the last backward(), or
    /// nullptr if none reached it.
    const Tensor* grad(Var v) const;

    /// Gradient buffer of node `id`, zero-initialised on first access.
    Tensor& grad_buffer(std::size_t id);

private:
    struct Node {
        Tensor value;
        const Tensor* external = nullptr;
        const char* op = "";
        std::vector<std::size_t> parents;
        BackwardFn backward;
        bool requires_grad = false;
        bool has_grad = false;
        Tensor grad;
        Tensor* param_grad = nullptr;
    };

    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace conserve
