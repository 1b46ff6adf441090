#include "conserve/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "conserve/error.hpp"

namespace conserve {

namespace {

std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const std::string& origin) {
    T out{};
    auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw DataError(origin + ": invalid value for " + key + ": '" + value + "'");
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint32_t pde_tag(PdeKind p) { return static_cast<std::uint32_t>(p); }
std::uint32_t law_tag(LawKind l) { return l == LawKind::Linear ? 0u : 1u; }

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& dataset) {
    std::filesystem::path p = dataset;
    p += ".meta";
    return p;
}

DatasetSplit generate_split(const PdeSpec& spec, LawKind law, Split split, std::size_t n) {
    spec.validate();
    if (!law_allowed(spec.pde, law)) {
        throw UsageError(std::string("law ") + law_name(law) + " is not valid for " + pde_name(spec.pde) +
                         "; valid pairs: " + valid_pde_law_pairs());
    }
    DatasetSplit data;
    data.spec = spec;
    data.law = law;
    data.split = split;
    data.inputs.reserve(n);
    data.targets.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        bool zero = false;
        GridField input = sample_initial_state(spec, split, i, &zero);
        GridField target = spec.pde == PdeKind::Te2d ? reference_trajectory(spec, split, i, 1).back() : advance(input, spec);
        if (zero) ++data.te_zero_samples;
        data.cons_targets.push_back(compute_cons_target(input, law));
        data.inputs.push_back(std::move(input));
        data.targets.push_back(std::move(target));
    }
    const double residual = target_residual(data);
    if (!(residual < 1e-8)) {
        throw NumericalError(std::string("generated ") + pde_name(spec.pde) + " targets violate the " + law_name(law) +
                             " law (residual " + fmt(residual) + ")");
    }
    return data;
}

double target_residual(const DatasetSplit& data) {
    double worst = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double c = data.cons_targets[i];
        const double r = std::abs(quantity(data.law, data.targets[i]) - c) / std::max(1.0, std::abs(c));
        if (!(r <= worst)) worst = r;
    }
    return worst;
}

void write_dataset(const DatasetSplit& data, const std::filesystem::path& path) {
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open " + path.string() + " for writing");
        const Shape grid = data.spec.grid();
        out.write("NODS1", 5);
        detail::write_u32(out, kDatasetVersion);
        detail::write_u32(out, pde_tag(data.spec.pde));
        detail::write_u32(out, law_tag(data.law));
        detail::write_u32(out, static_cast<std::uint32_t>(data.size()));
        detail::write_u32(out, static_cast<std::uint32_t>(data.spec.channels()));
        detail::write_u32(out, static_cast<std::uint32_t>(grid.size()));
        for (std::size_t d : grid) detail::write_u32(out, static_cast<std::uint32_t>(d));
        detail::write_u64(out, data.spec.seed);
        for (std::size_t i = 0; i < data.size(); ++i) {
            detail::write_f64s(out, data.inputs[i].data());
            detail::write_f64s(out, data.targets[i].data());
            detail::write_f64(out, data.cons_targets[i]);
        }
        if (!out) throw DataError("write failed: " + path.string());
    }

    std::ofstream meta(sidecar_path(path), std::ios::trunc);
    if (!meta) throw DataError("cannot open " + sidecar_path(path).string() + " for writing");
    const PdeSpec& s = data.spec;
    meta << "format=NODS1\n"
         << "pde=" << pde_name(s.pde) << "\n"
         << "law=" << law_name(data.law) << "\n"
         << "split=" << split_name(data.split) << "\n"
         << "n_samples=" << data.size() << "\n"
         << "resolution=" << s.resolution << "\n"
         << "channels=" << s.channels() << "\n"
         << "dt_solver=" << fmt(s.dt_solver) << "\n"
         << "horizon=" << fmt(s.horizon) << "\n"
         << "epsilon=" << fmt(s.epsilon) << "\n"
         << "potential=" << fmt(s.potential) << "\n"
         << "coupling=" << fmt(s.coupling) << "\n"
         << "seed=" << s.seed << "\n"
         << "te_zero_samples=" << data.te_zero_samples << "\n";
    if (!meta) throw DataError("write failed: " + sidecar_path(path).string());
}

DatasetSplit read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset " + path.string());
    const std::string what = "dataset " + path.string();
    detail::Reader r(in, what);
    r.expect_magic("NODS1");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
    const std::uint32_t ptag = r.u32();
    const std::uint32_t ltag = r.u32();
    if (ptag > 3) throw DataError(what + ": unknown pde tag " + std::to_string(ptag));
    if (ltag > 1) throw DataError(what + ": unknown law tag " + std::to_string(ltag));
    const std::size_t n = r.u32();
    const std::size_t channels = r.u32();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 3) throw DataError(what + ": unsupported grid rank " + std::to_string(rank));
    Shape dims(rank);
    for (std::size_t& d : dims) d = r.u32();

    DatasetSplit data;
    data.spec = PdeSpec::defaults(static_cast<PdeKind>(ptag));
    data.law = ltag == 0 ? LawKind::Linear : LawKind::Quadratic;
    data.spec.seed = r.u64();
    if (dims.size() != data.spec.spatial_rank() || channels != data.spec.channels()) {
        throw DataError(what + ": header shape does not match pde " + pde_name(data.spec.pde));
    }
    for (std::size_t d : dims) {
        if (d != dims[0]) throw DataError(what + ": non-square grids are not supported");
    }
    data.spec.resolution = dims[0];

    if (std::filesystem::exists(sidecar_path(path))) {
        std::ifstream ms(sidecar_path(path));
        std::stringstream buf;
        buf << ms.rdbuf();
        const std::string origin = sidecar_path(path).string();
        std::map<std::string, std::string> kv;
        try {
            kv = parse_key_values(buf.str(), origin);
        } catch (const UsageError& e) {
            throw DataError(e.what());
        }
        auto get = [&](const char* key) -> const std::string* {
            auto it = kv.find(key);
            return it == kv.end() ? nullptr : &it->second;
        };
        auto mismatch = [&](const char* key) { throw DataError(origin + ": " + key + " disagrees with the binary header"); };
        if (auto v = get("pde"); v && *v != pde_name(data.spec.pde)) mismatch("pde");
        if (auto v = get("law"); v && *v != law_name(data.law)) mismatch("law");
        if (auto v = get("n_samples"); v && parse_number<std::size_t>("n_samples", *v, origin) != n) mismatch("n_samples");
        if (auto v = get("resolution"); v && parse_number<std::size_t>("resolution", *v, origin) != dims[0]) mismatch("resolution");
        if (auto v = get("seed"); v && parse_number<std::uint64_t>("seed", *v, origin) != data.spec.seed) mismatch("seed");
        if (auto v = get("split")) {
            try {
                data.split = parse_split(*v);
            } catch (const UsageError& e) {
                throw DataError(origin + ": " + e.what());
            }
        }
        if (auto v = get("dt_solver")) data.spec.dt_solver = parse_number<double>("dt_solver", *v, origin);
        if (auto v = get("horizon")) data.spec.horizon = parse_number<double>("horizon", *v, origin);
        if (auto v = get("epsilon")) data.spec.epsilon = parse_number<double>("epsilon", *v, origin);
        if (auto v = get("potential")) data.spec.potential = parse_number<double>("potential", *v, origin);
        if (auto v = get("coupling")) data.spec.coupling = parse_number<double>("coupling", *v, origin);
        if (auto v = get("te_zero_samples")) data.te_zero_samples = parse_number<std::size_t>("te_zero_samples", *v, origin);
    }

    data.inputs.reserve(n);
    data.targets.reserve(n);
    data.cons_targets.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        GridField input(channels, dims), target(channels, dims);
        r.f64s(input.data());
        r.f64s(target.data());
        const double c = r.f64();
        const double recomputed = compute_cons_target(input, data.law);
        if (!(std::abs(recomputed - c) <= 1e-12 * std::max(std::abs(c), std::abs(recomputed)))) {
            throw DataError(what + ": sample " + std::to_string(i) + " conserved value " + fmt(c) +
                            " does not match its input (" + fmt(recomputed) + "); file is corrupt");
        }
        data.inputs.push_back(std::move(input));
        data.targets.push_back(std::move(target));
        data.cons_targets.push_back(c);
    }
    if (!r.at_eof()) throw DataError(what + ": trailing bytes after " + std::to_string(n) + " samples");
    return data;
}

}  // namespace conserve
