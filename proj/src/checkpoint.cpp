#include "conserve/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "conserve/error.hpp"

namespace conserve {

void write_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write("NOPC1", 5);
    detail::write_u32(out, kCheckpointVersion);
    for (const auto& [name, p] : params) {
        detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
        detail::write_bytes(out, name.data(), name.size());
        detail::write_u32(out, static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t d : p.value.shape()) detail::write_u32(out, static_cast<std::uint32_t>(d));
        detail::write_f64s(out, p.value.data());
    }
    if (!out) throw DataError("write failed: " + path.string());
}

ParamStore read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    detail::Reader r(in, "checkpoint " + path.string());
    r.expect_magic("NOPC1");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
    }
    ParamStore params;
    while (!r.at_eof()) {
        const std::uint32_t name_len = r.u32();
        if (name_len == 0 || name_len > 4096) throw DataError("checkpoint " + path.string() + ": bad tensor name length");
        std::string name(name_len, '\0');
        r.bytes(name.data(), name.size());
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw DataError("checkpoint " + path.string() + ": tensor " + name + " has rank " + std::to_string(rank));
        Shape shape(rank);
        for (std::size_t& d : shape) d = r.u32();
        Tensor t(shape);
        r.f64s(t.values());
        if (params.contains(name)) throw DataError("checkpoint " + path.string() + ": duplicate tensor " + name);
        params.add(name, std::move(t));
    }
    return params;
}

void load_checkpoint(ParamStore& params, const std::filesystem::path& path) {
    ParamStore loaded = read_checkpoint(path);
    if (loaded.names() != params.names()) {
        throw DataError("checkpoint " + path.string() + " does not match the model parameter set");
    }
    for (auto& [name, p] : params) {
        const Tensor& src = loaded.at(name).value;
        if (src.shape() != p.value.shape()) {
            throw DataError("checkpoint tensor " + name + " has shape " + shape_string(src.shape()) + ", model expects " +
                            shape_string(p.value.shape()));
        }
        p.value = src;
    }
}

}  // namespace conserve
