#pragma once

#include <filesystem>

#include "conserve/param_store.hpp"

namespace conserve {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// NOPC1 layout: "NOPC1", u32 version, then per parameter in name order:
/// u32 name length, name bytes, u32 rank, u32 dims[rank], f64 data.
/// All integers and floats little-endian.
void write_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into an initialised store. Names and shapes must
/// match exactly; otherwise DataError.
void load_checkpoint(ParamStore& params, const std::filesystem::path& path);

}  // namespace conserve
