#include "conserve/tape.hpp"

#include <algorithm>

#include "conserve/error.hpp"

namespace conserve {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.op = "constant";
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamStore& store, const std::string& name) {
    Parameter& p = store.at(name);
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var(this, it->second);
    Node n;
    n.external = &p.value;
    n.op = "param";
    n.requires_grad = true;
    n.param_grad = &p.grad;
    nodes_.push_back(std::move(n));
    const std::size_t id = nodes_.size() - 1;
    param_nodes_.emplace(&p, id);
    return Var(this, id);
}

Var Tape::record(Tensor value, const char* op, std::vector<std::size_t> parents, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [this](std::size_t p) { return nodes_[p].requires_grad; });
    if (n.requires_grad) n.backward = std::move(backward);
    n.parents = std::move(parents);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
}

const Tensor* Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.has_grad ? &n.grad : nullptr;
}

Tensor& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(value(id).shape(), 0.0);
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
    if (value(root.id()).size() != 1) {
        throw ShapeError("backward: root must be scalar, got shape " + shape_string(value(root.id()).shape()));
    }
    for (auto& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    grad_buffer(root.id())[0] = 1.0;

    for (std::size_t id = root.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.has_grad || !n.requires_grad) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param_grad) {
            auto dst = n.param_grad->data();
            auto src = n.grad.data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
    }
}

}  // namespace conserve
