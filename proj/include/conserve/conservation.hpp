#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "conserve/tape.hpp"
#include "conserve/tensor.hpp"

namespace conserve {

enum class LawKind { Linear, Quadratic };

const char* law_name(LawKind kind);  // "mass" | "norm"

/// The conserved quantity enforced on model outputs.
///  Linear:    M(U) = sum_i U_i
///  Quadratic: S(U) = sum_i U_i^2   (Re and Im channels both participate)
struct ConservationLaw {
    LawKind kind = LawKind::Linear;
    std::vector<std::size_t> channels{0};
    /// Stability constant of the quadratic corrector.
    double epsilon = 1e-12;
    /// Rescale the quadratic correction on tape so the residual left by
    /// epsilon is removed.
    bool exactness_pass = true;
    /// Degenerate quadratic input (U == 0, c0 > 0) throws when strict,
    /// otherwise passes through and bumps degenerate_count().
    bool strict = true;

    /// Throws UsageError if channels are empty/out of range or epsilon < 0.
    void validate(std::size_t out_channels) const;
};

enum class CoefficientConstraint { SumToOne, Unconstrained };

/// Direction A along which the corrector redistributes the residual.
struct CorrectionCoefficients {
    Var A;
    CoefficientConstraint constraint = CoefficientConstraint::Unconstrained;
};

double quantity_linear(const Tensor& U);
double quantity_quadratic(const Tensor& U);
double quantity(LawKind kind, const Tensor& U);
/// Quantity over the law's channels of a (channels, dims...) field.
double quantity(const ConservationLaw& law, const Tensor& field);

Var quantity_linear(Var U);
Var quantity_quadratic(Var U);

/// Local corrector: rewrites only entry i so that the entries sum to m0.
std::vector<double> local_correct(std::vector<double> U, std::size_t i, double m0);

/// L(m0, U) = U + (m0 - M(U)) A with sum(A) = 1.
Var linear_correct(Var U, const CorrectionCoefficients& coeffs, double m0);

/// Real roots r of l1^2 S_U2 + 2 l1 r S_UA + r^2 S_A2 = c0, ascending.
std::vector<double> lambda2_roots(double lambda1, double s_u2, double s_ua, double s_a2, double c0);

/// L^q(c0, U) = l1 U - (2 S_UA / (S_A2 + eps)) l1 A,  l1 = sqrt(c0 / (S_U2 + eps)),
/// followed, when eps > 0 and the law asks for it, by an on-tape rescale
/// onto S = c0.
Var quadratic_correct(Var U, const CorrectionCoefficients& coeffs, double c0, const ConservationLaw& law);

/// Number of degenerate quadratic inputs passed through in non-strict mode.
std::size_t degenerate_count();
void reset_degenerate_count();

/// Nearest point (Euclidean) with sum = m0: uniform offset.
Var project_linear(Var U, double m0);
/// Nearest point with sum of squares = c0: radial rescale. U must be nonzero.
Var project_quadratic(Var U, double c0);
Tensor project_linear(const Tensor& U, double m0);
Tensor project_quadratic(const Tensor& U, double c0);

/// |quantity(U) - target| on tape.
Var penalty_term(Var U, LawKind kind, double target);

struct ConservationError {
    double abs = 0.0;
    /// Present when |target| > 1e-8.
    std::optional<double> rel;
};

ConservationError conservation_error(const Tensor& pred, LawKind kind, double target);

}  // namespace conserve
