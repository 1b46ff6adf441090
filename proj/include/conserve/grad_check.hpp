#pragma once

#include <functional>

#include "conserve/param_store.hpp"
#include "conserve/tape.hpp"

namespace conserve {

/// Builds a scalar on the given tape from parameters in the store.
using ScalarFn = std::function<Var(Tape&, ParamStore&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares tape gradients against the five-point central stencil
/// (8(f(p+h) - f(p-h)) - (f(p+2h) - f(p-2h))) / 12h for every scalar of every parameter.
/// Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator, so
/// gradients below 1e-6 are compared in absolute terms.
GradCheckResult grad_check(const ScalarFn& f, ParamStore& params, double h = 1e-4);

}  // namespace conserve
