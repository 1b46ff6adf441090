#include "conserve/param_store.hpp"

#include <algorithm>
#include <stdexcept>

namespace conserve {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
    auto [it, inserted] = params_.emplace(name, Parameter(std::move(init)));
    if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
    return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, p] : params_) std::fill(p.grad.values().begin(), p.grad.values().end(), 0.0);
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
}

}  // namespace conserve
