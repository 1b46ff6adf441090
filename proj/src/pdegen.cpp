#include "conserve/pdegen.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "conserve/error.hpp"
#include "conserve/fft.hpp"
#include "conserve/ops.hpp"

namespace conserve {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

const char* pde_name(PdeKind pde) {
    switch (pde) {
        case PdeKind::Te2d: return "te2d";
        case PdeKind::Cac2d: return "cac2d";
        case PdeKind::Lse1d: return "lse1d";
        case PdeKind::Nls1d: return "nls1d";
    }
    return "?";
}

PdeKind parse_pde(const std::string& name) {
    for (PdeKind p : {PdeKind::Te2d, PdeKind::Cac2d, PdeKind::Lse1d, PdeKind::Nls1d}) {
        if (name == pde_name(p)) return p;
    }
    throw UsageError("unknown pde '" + name + "' (expected te2d, cac2d, lse1d or nls1d)");
}

LawKind parse_law(const std::string& name) {
    if (name == "mass") return LawKind::Linear;
    if (name == "norm") return LawKind::Quadratic;
    throw UsageError("unknown law '" + name + "' (expected mass or norm)");
}

const char* split_name(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "test") return Split::Test;
    throw UsageError("unknown split '" + name + "'");
}

bool law_allowed(PdeKind pde, LawKind law) {
    switch (pde) {
        case PdeKind::Te2d: return true;
        case PdeKind::Cac2d: return law == LawKind::Linear;
        case PdeKind::Lse1d:
        case PdeKind::Nls1d: return law == LawKind::Quadratic;
    }
    return false;
}

std::string valid_pde_law_pairs() { return "te2d+mass, te2d+norm, cac2d+mass, lse1d+norm, nls1d+norm"; }

PdeSpec PdeSpec::defaults(PdeKind pde, bool paper_dt) {
    PdeSpec s;
    s.pde = pde;
    switch (pde) {
        case PdeKind::Te2d:
            s.resolution = 64;
            s.horizon = 0.05;
            s.dt_solver = 0.05;  // closed form, one evaluation per horizon
            break;
        case PdeKind::Cac2d:
            s.resolution = 32;
            s.horizon = 0.5;
            s.dt_solver = paper_dt ? 1e-5 : 1e-4;
            break;
        case PdeKind::Lse1d:
        case PdeKind::Nls1d:
            s.resolution = 128;
            s.horizon = 0.025;
            s.dt_solver = 1e-4;
            break;
    }
    return s;
}

std::size_t PdeSpec::spatial_rank() const { return pde == PdeKind::Lse1d || pde == PdeKind::Nls1d ? 1 : 2; }

std::size_t PdeSpec::channels() const { return spatial_rank() == 1 ? 2 : 1; }

Shape PdeSpec::grid() const { return Shape(spatial_rank(), resolution); }

std::size_t PdeSpec::steps_per_horizon() const {
    if (!(dt_solver > 0.0) || !(horizon > 0.0)) throw UsageError("dt_solver and horizon must be positive");
    const double ratio = horizon / dt_solver;
    const double steps = std::round(ratio);
    if (steps < 1.0 || std::abs(ratio - steps) > 1e-9 * steps) {
        throw UsageError("dt_solver " + std::to_string(dt_solver) + " does not divide horizon " + std::to_string(horizon));
    }
    return static_cast<std::size_t>(steps);
}

void PdeSpec::validate() const {
    if (resolution < 2) throw UsageError("resolution must be at least 2");
    if (spatial_rank() == 1 && !is_power_of_two(resolution)) {
        throw UsageError("schrodinger resolution must be a power of two, got " + std::to_string(resolution));
    }
    steps_per_horizon();
    if (pde == PdeKind::Cac2d) {
        const double h = 1.0 / static_cast<double>(resolution);
        const double bound = h * h / (4.0 * epsilon);
        if (!(epsilon > 0.0) || dt_solver > bound) {
            throw UsageError("cac2d dt_solver " + std::to_string(dt_solver) + " exceeds the stability bound " +
                             std::to_string(bound));
        }
    }
}

TransportIc sample_ic_te2d(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> amp(2.5, 3.0);
    std::uniform_int_distribution<int> wave(0, 3);
    TransportIc ic;
    ic.amplitude = amp(rng);
    ic.k1 = wave(rng);
    ic.k2 = wave(rng);
    return ic;
}

GridField solve_te2d(const TransportIc& ic, std::size_t n, double t) {
    GridField u(1, {n, n});
    const std::vector<double> x = grid_coordinates(n);
    std::vector<double> sx(n), sy(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double shifted = t == 0.0 ? x[i] : x[i] - t - std::floor(x[i] - t);
        sx[i] = std::sin(kTwoPi * ic.k1 * shifted);
        sy[i] = std::sin(kTwoPi * ic.k2 * shifted);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) u[i * n + j] = ic.amplitude * sx[i] * sy[j];
    return u;
}

GridField sample_ic_cac2d(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    GridField u(1, {n, n});
    for (double& v : u.values()) v = dist(rng);
    return u;
}

GridField solve_cac2d(const GridField& u0, const PdeSpec& spec, std::size_t steps) {
    const Shape dims = u0.dims();
    if (u0.channels() != 1 || dims.size() != 2) throw ShapeError("solve_cac2d: expected a (1, H, W) field");
    const std::size_t H = dims[0], W = dims[1], P = H * W;
    // 1/h^2 along each axis, h = 1/n
    const double cx = static_cast<double>(H) * static_cast<double>(H);
    const double cy = static_cast<double>(W) * static_cast<double>(W);
    const double dt = spec.dt_solver, eps = spec.epsilon;

    std::vector<double> u(u0.data().begin(), u0.data().end()), f(P), next(P);
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t p = 0; p < P; ++p) f[p] = u[p] - u[p] * u[p] * u[p];
        const double mean_f = pairwise_sum(f) / static_cast<double>(P);
        for (std::size_t i = 0; i < H; ++i) {
            const std::size_t up = (i + H - 1) % H, down = (i + 1) % H;
            for (std::size_t j = 0; j < W; ++j) {
                const std::size_t left = (j + W - 1) % W, right = (j + 1) % W;
                const double c = u[i * W + j];
                const double lap = cx * (u[up * W + j] - 2.0 * c + u[down * W + j]) +
                                   cy * (u[i * W + left] - 2.0 * c + u[i * W + right]);
                next[i * W + j] = c + dt * (eps * lap + f[i * W + j] - mean_f);
            }
        }
        u.swap(next);
        for (double v : u) {
            if (!(std::abs(v) <= 10.0)) {
                throw NumericalError("cac2d solver unstable at step " + std::to_string(step + 1) + " (|u| > 10)");
            }
        }
    }
    return GridField(1, dims, std::move(u));
}

SchrodingerIc sample_ic_schrodinger(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    SchrodingerIc ic;
    for (std::size_t k = 0; k < 5; ++k) {
        ic.a[k] = normal(rng);
        ic.b[k] = normal(rng);
        ic.phase[k] = phase(rng);
    }
    return ic;
}

ComplexField schrodinger_field(const SchrodingerIc& ic, std::size_t n) {
    ComplexField psi({n});
    const std::vector<double> x = grid_coordinates(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::complex<double> v{};
        for (std::size_t k = 0; k < 5; ++k) {
            const double theta = kTwoPi * static_cast<double>(k + 1) * x[i] + ic.phase[k];
            v += std::complex<double>(ic.a[k], ic.b[k]) * std::polar(1.0, theta);
        }
        psi.re[i] = v.real();
        psi.im[i] = v.imag();
    }
    return psi;
}

ComplexField solve_schrodinger(ComplexField psi, const PdeSpec& spec, std::size_t steps) {
    if (psi.dims.size() != 1) throw ShapeError("solve_schrodinger: expected a 1D field");
    const std::size_t N = psi.points();
    if (!is_power_of_two(N)) throw ShapeError("solve_schrodinger: grid length " + std::to_string(N) + " is not a power of two");
    const double dt = spec.dt_solver;
    const bool nonlinear = spec.pde == PdeKind::Nls1d;

    std::vector<cplx> half_kinetic(N);
    for (std::size_t k = 0; k < N; ++k) {
        const double kw = k <= N / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(N);
        const double w = kTwoPi * kw;
        half_kinetic[k] = std::polar(1.0, -w * w * dt / 4.0);
    }
    const cplx linear_phase = std::polar(1.0, spec.potential * dt);

    std::vector<cplx> z(N);
    for (std::size_t i = 0; i < N; ++i) z[i] = {psi.re[i], psi.im[i]};
    auto kinetic = [&] {
        fft_inplace(z, false);
        for (std::size_t k = 0; k < N; ++k) z[k] *= half_kinetic[k];
        fft_inplace(z, true);
    };
    for (std::size_t step = 0; step < steps; ++step) {
        kinetic();
        if (nonlinear) {
            for (cplx& v : z) v *= std::polar(1.0, spec.coupling * std::norm(v) * dt);
        } else {
            for (cplx& v : z) v *= linear_phase;
        }
        kinetic();
    }
    for (std::size_t i = 0; i < N; ++i) {
        psi.re[i] = z[i].real();
        psi.im[i] = z[i].imag();
    }
    return psi;
}

double compute_cons_target(const Tensor& input, LawKind law) { return quantity(law, input); }

std::mt19937_64 sample_rng(std::uint64_t seed, Split split, std::size_t index) {
    const std::uint64_t stream = (static_cast<std::uint64_t>(split == Split::Test) << 48) ^ index;
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

namespace {

TransportIc te_ic(const PdeSpec& spec, Split split, std::size_t index) {
    auto rng = sample_rng(spec.seed, split, index);
    return sample_ic_te2d(rng);
}

}  // namespace

GridField sample_initial_state(const PdeSpec& spec, Split split, std::size_t index, bool* zero_flag) {
    auto rng = sample_rng(spec.seed, split, index);
    if (zero_flag) *zero_flag = false;
    switch (spec.pde) {
        case PdeKind::Te2d: {
            TransportIc ic = sample_ic_te2d(rng);
            if (zero_flag) *zero_flag = ic.k1 == 0 || ic.k2 == 0;
            return solve_te2d(ic, spec.resolution, 0.0);
        }
        case PdeKind::Cac2d: return sample_ic_cac2d(rng, spec.resolution);
        case PdeKind::Lse1d:
        case PdeKind::Nls1d: return schrodinger_field(sample_ic_schrodinger(rng), spec.resolution).to_grid();
    }
    throw UsageError("unknown pde");
}

GridField advance(const GridField& state, const PdeSpec& spec) {
    const std::size_t steps = spec.steps_per_horizon();
    switch (spec.pde) {
        case PdeKind::Cac2d: return solve_cac2d(state, spec, steps);
        case PdeKind::Lse1d:
        case PdeKind::Nls1d: return solve_schrodinger(ComplexField::from_grid(state), spec, steps).to_grid();
        case PdeKind::Te2d: break;
    }
    throw UsageError("advance: transport states are evaluated in closed form");
}

std::vector<GridField> reference_trajectory(const PdeSpec& spec, Split split, std::size_t index, std::size_t steps) {
    spec.validate();
    std::vector<GridField> out;
    out.reserve(steps + 1);
    if (spec.pde == PdeKind::Te2d) {
        const TransportIc ic = te_ic(spec, split, index);
        for (std::size_t s = 0; s <= steps; ++s) {
            out.push_back(solve_te2d(ic, spec.resolution, static_cast<double>(s) * spec.horizon));
        }
        return out;
    }
    out.push_back(sample_initial_state(spec, split, index));
    for (std::size_t s = 0; s < steps; ++s) out.push_back(advance(out.back(), spec));
    return out;
}

}  // namespace conserve
