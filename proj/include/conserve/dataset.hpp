#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "conserve/pdegen.hpp"

namespace conserve {

inline constexpr std::uint32_t kDatasetVersion = 1;

/// (initial state, state after one horizon) pairs with the conserved value
/// of each initial state.
struct DatasetSplit {
    PdeSpec spec;
    LawKind law = LawKind::Linear;
    Split split = Split::Train;
    std::vector<GridField> inputs;
    std::vector<GridField> targets;
    std::vector<double> cons_targets;
    std::size_t te_zero_samples = 0;

    std::size_t size() const { return inputs.size(); }
};

/// Generates n samples. Throws NumericalError if a target misses the law
/// by more than 1e-8 relative.
DatasetSplit generate_split(const PdeSpec& spec, LawKind law, Split split, std::size_t n);

/// Largest |quantity(target) - cons_target| / max(1, |cons_target|).
double target_residual(const DatasetSplit& data);

/// Writes the NODS1 file at `path` and the key=value sidecar at `path.meta`.
///
/// NODS1 layout, little-endian: "NODS1", u32 version, u32 pde tag,
/// u32 law tag, u32 n_samples, u32 channels, u32 rank, u32 dims[rank],
/// u64 seed, then per sample the input field, the target field and the
/// conserved value, all f64.
void write_dataset(const DatasetSplit& data, const std::filesystem::path& path);

/// Reads and validates a dataset. The sidecar is optional; when present it
/// supplies the solver settings and must agree with the binary header.
/// Throws DataError on bad magic/version, truncation, sidecar mismatch or a
/// conserved value that differs from the recomputed one by more than 1e-12 relative.
DatasetSplit read_dataset(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& dataset);

/// Parses `key=value` lines; `#` starts a comment; later keys win.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin);

}  // namespace conserve
