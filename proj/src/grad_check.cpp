#include "conserve/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace conserve {

namespace {

double evaluate(const ScalarFn& f, ParamStore& params) {
    Tape tape;
    return f(tape, params).value().item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, ParamStore& params, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

    params.zero_grad();
    {
        Tape tape;
        Var root = f(tape, params);
        tape.backward(root);
    }

    GradCheckResult result;
    for (auto& [name, p] : params) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double original = p.value[i];
            auto at = [&](double offset) {
                p.value[i] = original + offset;
                return evaluate(f, params);
            };
            const double up1 = at(h), down1 = at(-h), up2 = at(2.0 * h), down2 = at(-2.0 * h);
            p.value[i] = original;

            const double numeric = (8.0 * (up1 - down1) - (up2 - down2)) / (12.0 * h);
            const double analytic = p.grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            const double err = std::abs(analytic - numeric) / denom;
            if (err > result.max_rel_error || result.worst_param.empty()) {
                result.max_rel_error = err;
                result.worst_param = name;
                result.worst_index = i;
                result.analytic = analytic;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace conserve
