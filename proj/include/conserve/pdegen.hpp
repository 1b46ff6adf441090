#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "conserve/conservation.hpp"
#include "conserve/tensor.hpp"

namespace conserve {

enum class PdeKind { Te2d, Cac2d, Lse1d, Nls1d };
enum class Split { Train, Test };

const char* pde_name(PdeKind pde);  // te2d | cac2d | lse1d | nls1d
PdeKind parse_pde(const std::string& name);
LawKind parse_law(const std::string& name);  // mass | norm
const char* split_name(Split split);
Split parse_split(const std::string& name);

/// TE: mass or norm; CAC: mass; LSE/NLS: norm.
bool law_allowed(PdeKind pde, LawKind law);
std::string valid_pde_law_pairs();

struct PdeSpec {
    PdeKind pde = PdeKind::Lse1d;
    std::size_t resolution = 128;  // points per axis
    double dt_solver = 1e-4;
    double horizon = 0.025;
    double epsilon = 0.01;  // CAC interface width
    double potential = 1.0;  // LSE
    double coupling = 1.0;   // NLS
    std::uint64_t seed = 0;

    /// Desk-scale defaults. `paper_dt` selects the 1e-5 CAC Euler step.
    static PdeSpec defaults(PdeKind pde, bool paper_dt = false);

    std::size_t spatial_rank() const;
    std::size_t channels() const;
    Shape grid() const;
    /// Solver steps per horizon; throws UsageError when dt_solver does not divide it.
    std::size_t steps_per_horizon() const;
    void validate() const;
};

struct TransportIc {
    double amplitude = 0.0;
    int k1 = 0;
    int k2 = 0;
};

struct SchrodingerIc {
    std::array<double, 5> a{};
    std::array<double, 5> b{};
    std::array<double, 5> phase{};
};

TransportIc sample_ic_te2d(std::mt19937_64& rng);
/// A sin(2 pi k1 (x - t)) sin(2 pi k2 (y - t)) on an n x n grid, x along the first axis.
GridField solve_te2d(const TransportIc& ic, std::size_t n, double t);

/// Independent U(-1, 1) values at each grid point.
GridField sample_ic_cac2d(std::mt19937_64& rng, std::size_t n);
/// Forward Euler on u_t = eps Lap u + f(u) - mean f(u), f(u) = u - u^3.
/// Throws NumericalError naming the step once any |u| exceeds 10.
GridField solve_cac2d(const GridField& u0, const PdeSpec& spec, std::size_t steps);

SchrodingerIc sample_ic_schrodinger(std::mt19937_64& rng);
/// sum_k (a_k + i b_k) exp(i (2 pi k x + phase_k)), k = 1..5.
ComplexField schrodinger_field(const SchrodingerIc& ic, std::size_t n);
/// Strang splitting: half kinetic step, full potential (LSE) or cubic (NLS) phase step, half kinetic step.
ComplexField solve_schrodinger(ComplexField psi, const PdeSpec& spec, std::size_t steps);

double compute_cons_target(const Tensor& input, LawKind law);

/// Independent stream per (seed, split, sample index).
std::mt19937_64 sample_rng(std::uint64_t seed, Split split, std::size_t index);

/// Initial condition of one sample, as a grid field.
GridField sample_initial_state(const PdeSpec& spec, Split split, std::size_t index, bool* zero_flag = nullptr);
/// States at t = 0, horizon, ..., steps * horizon for one sample.
std::vector<GridField> reference_trajectory(const PdeSpec& spec, Split split, std::size_t index, std::size_t steps);
/// Advances a state by one horizon with the numerical solver (CAC, LSE, NLS).
GridField advance(const GridField& state, const PdeSpec& spec);

}  // namespace conserve
