#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "conserve/models.hpp"
#include "conserve/pdegen.hpp"
#include "conserve/training.hpp"

namespace conserve {

/// Flat key=value run configuration. Every key has a default; "auto" values
/// are filled in by resolve() from the PDE and architecture.
class RunConfig {
public:
    RunConfig();

    static const std::vector<std::string>& keys();

    /// Throws UsageError for unknown keys.
    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool is_auto(const std::string& key) const { return get(key) == "auto"; }

    /// Applies a key=value text; later keys override earlier ones.
    void merge_text(const std::string& text, const std::string& origin);
    void merge_file(const std::filesystem::path& path);
    static RunConfig from_file(const std::filesystem::path& path);

    /// Fills pde and law when they are auto (throws DataError when an explicit
    /// value disagrees), then every remaining auto value.
    void resolve(PdeKind pde, LawKind law);
    /// resolve() using the explicit pde and law keys.
    void resolve();

    std::string to_text() const;
    void write(const std::filesystem::path& path) const;

    std::string str(const std::string& key) const { return get(key); }
    double real(const std::string& key) const;
    std::size_t count(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> reals(const std::string& key) const;  // comma separated

    PdeKind pde() const;
    LawKind law() const;
    Method method() const;

    PdeSpec pde_spec() const;
    ModelConfig model_config(std::uint64_t seed) const;
    CorrectionHead head() const;
    TrainConfig train_config(std::uint64_t seed) const;
    Surrogate make_surrogate(std::uint64_t seed) const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace conserve
