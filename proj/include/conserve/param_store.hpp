#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "conserve/tensor.hpp"

namespace conserve {

/// A trainable tensor with its gradient buffer and Adam moment slots,
/// all of identical shape.
struct Parameter {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;

    explicit Parameter(Tensor init)
        : value(std::move(init)), grad(value.shape()), m(value.shape()), v(value.shape()) {}
};

/// Named parameters, iterated in canonical (lexicographic) name order.
class ParamStore {
public:
    using Map = std::map<std::string, Parameter>;

    /// Inserts a new parameter; throws if the name already exists.
    Parameter& add(const std::string& name, Tensor init);

    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    void zero_grad();

    std::vector<std::string> names() const;
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    Map::iterator begin() { return params_.begin(); }
    Map::iterator end() { return params_.end(); }
    Map::const_iterator begin() const { return params_.begin(); }
    Map::const_iterator end() const { return params_.end(); }

    /// Number of optimizer steps applied so far (Adam bias correction).
    std::size_t step_count = 0;

private:
    Map params_;
};

}  // namespace conserve
