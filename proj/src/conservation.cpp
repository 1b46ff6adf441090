#include "conserve/conservation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "conserve/error.hpp"
#include "conserve/ops.hpp"

namespace conserve {

namespace {
std::atomic<std::size_t> g_degenerate{0};
}

const char* law_name(LawKind kind) { return kind == LawKind::Linear ? "mass" : "norm"; }

void ConservationLaw::validate(std::size_t out_channels) const {
    if (channels.empty()) throw UsageError("conservation law needs at least one channel");
    for (std::size_t c : channels) {
        if (c >= out_channels) {
            throw UsageError("conservation law channel " + std::to_string(c) + " outside output range " +
                             std::to_string(out_channels));
        }
    }
    if (!(epsilon >= 0.0)) throw UsageError("conservation law epsilon must be >= 0");
}

double quantity_linear(const Tensor& U) { return pairwise_sum(U.data()); }

double quantity_quadratic(const Tensor& U) {
    std::vector<double> sq(U.size());
    for (std::size_t i = 0; i < U.size(); ++i) sq[i] = U[i] * U[i];
    return pairwise_sum(sq);
}

double quantity(LawKind kind, const Tensor& U) {
    return kind == LawKind::Linear ? quantity_linear(U) : quantity_quadratic(U);
}

double quantity(const ConservationLaw& law, const Tensor& field) {
    if (field.rank() < 1) throw ShapeError("quantity: expected a (channels, dims...) field");
    const std::size_t C = field.shape()[0];
    const std::size_t P = field.size() / C;
    std::vector<double> vals;
    vals.reserve(law.channels.size() * P);
    for (std::size_t c : law.channels) {
        if (c >= C) throw ShapeError("quantity: law channel out of range");
        auto ch = field.data().subspan(c * P, P);
        vals.insert(vals.end(), ch.begin(), ch.end());
    }
    const std::size_t n = vals.size();
    return quantity(law.kind, Tensor(Shape{n}, std::move(vals)));
}

Var quantity_linear(Var U) { return reduce_sum(U); }
Var quantity_quadratic(Var U) { return reduce_sum(square(U)); }

std::vector<double> local_correct(std::vector<double> U, std::size_t i, double m0) {
    if (i >= U.size()) {
        throw std::out_of_range("local_correct: index " + std::to_string(i) + " out of range for size " +
                                std::to_string(U.size()));
    }
    std::vector<double> others;
    others.reserve(U.size());
    for (std::size_t k = 0; k < U.size(); ++k) {
        if (k != i) others.push_back(U[k]);
    }
    U[i] = m0 - pairwise_sum(others);
    return U;
}

Var linear_correct(Var U, const CorrectionCoefficients& coeffs, double m0) {
    if (coeffs.constraint != CoefficientConstraint::SumToOne) {
        throw std::invalid_argument("linear_correct: coefficients must satisfy the sum-to-one constraint");
    }
    if (U.shape() != coeffs.A.shape()) {
        throw ShapeError("linear_correct: U" + shape_string(U.shape()) + " vs A" + shape_string(coeffs.A.shape()));
    }
    Var residual = shift(neg(reduce_sum(U)), m0);
    return add(U, mul(residual, coeffs.A));
}

std::vector<double> lambda2_roots(double lambda1, double s_u2, double s_ua, double s_a2, double c0) {
    if (!(s_a2 > 0.0)) throw DomainError("lambda2_roots: S_A2 must be positive");
    const double a = s_a2;
    const double b = 2.0 * lambda1 * s_ua;
    const double c = lambda1 * lambda1 * s_u2 - c0;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return {};
    if (disc == 0.0) return {-b / (2.0 * a)};
    // Cancellation-free pair: q = -(b + sign(b) sqrt(disc)) / 2, roots q/a and c/q.
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    std::vector<double> roots{q / a, c / q};
    std::sort(roots.begin(), roots.end());
    return roots;
}

std::size_t degenerate_count() { return g_degenerate.load(); }
void reset_degenerate_count() { g_degenerate.store(0); }

Var quadratic_correct(Var U, const CorrectionCoefficients& coeffs, double c0, const ConservationLaw& law) {
    if (c0 < 0.0) throw DomainError("quadratic_correct: target must be non-negative");
    Var A = coeffs.A;
    if (U.shape() != A.shape()) {
        throw ShapeError("quadratic_correct: U" + shape_string(U.shape()) + " vs A" + shape_string(A.shape()));
    }
    const double eps = law.epsilon;
    if (c0 == 0.0) return scale(U, 0.0);

    Var s_u2 = reduce_sum(square(U));
    if (s_u2.value().item() == 0.0) {
        if (eps == 0.0 || law.strict) {
            throw DomainError("quadratic_correct: output is identically zero but target is " + std::to_string(c0));
        }
        ++g_degenerate;
        return scale(U, 0.0);
    }

    Tape& t = *U.tape();
    Var lambda1 = sqrt(div(t.scalar(c0), shift(s_u2, eps)));
    Var scaled = mul(lambda1, U);
    Var out = scaled;
    Var s_a2 = reduce_sum(square(A));
    // A == 0 with eps == 0: the A term vanishes (the lambda2 = 0 root).
    if (s_a2.value().item() + eps > 0.0) {
        Var s_ua = reduce_sum(mul(U, A));
        Var coef = mul(scale(div(s_ua, shift(s_a2, eps)), 2.0), lambda1);
        out = sub(scaled, mul(coef, A));
    }

    if (eps > 0.0 && law.exactness_pass) {
        Var s_out = reduce_sum(square(out));
        if (s_out.value().item() == 0.0) {
            if (law.strict) throw DomainError("quadratic_correct: corrected output collapsed to zero");
            ++g_degenerate;
            return out;
        }
        out = mul(sqrt(div(t.scalar(c0), s_out)), out);
    }
    return out;
}

Var project_linear(Var U, double m0) {
    const double inv_n = 1.0 / static_cast<double>(U.value().size());
    Var residual = shift(neg(reduce_sum(U)), m0);
    return add(U, scale(residual, inv_n));
}

Var project_quadratic(Var U, double c0) {
    if (c0 < 0.0) throw DomainError("project_quadratic: target must be non-negative");
    Var s = reduce_sum(square(U));
    if (s.value().item() == 0.0) throw DomainError("project_quadratic: projection of the zero field is not unique");
    if (c0 == 0.0) return scale(U, 0.0);
    Tape& t = *U.tape();
    return mul(sqrt(div(t.scalar(c0), s)), U);
}

Tensor project_linear(const Tensor& U, double m0) {
    Tape t;
    return project_linear(t.constant(U), m0).value();
}

Tensor project_quadratic(const Tensor& U, double c0) {
    Tape t;
    return project_quadratic(t.constant(U), c0).value();
}

Var penalty_term(Var U, LawKind kind, double target) {
    Var q = kind == LawKind::Linear ? quantity_linear(U) : quantity_quadratic(U);
    return abs(shift(q, -target));
}

ConservationError conservation_error(const Tensor& pred, LawKind kind, double target) {
    ConservationError e;
    e.abs = std::abs(quantity(kind, pred) - target);
    if (std::abs(target) > 1e-8) e.rel = e.abs / std::abs(target);
    return e;
}

}  // namespace conserve
