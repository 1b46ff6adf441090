#include "conserve/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "conserve/dataset.hpp"
#include "conserve/error.hpp"

namespace conserve {

namespace {

struct KeyDef {
    const char* key;
    const char* fallback;
};

// Order here is the order of resolved.cfg.
const KeyDef kKeys[] = {
    // data
    {"pde", "auto"},
    {"law", "auto"},
    {"resolution", "auto"},
    {"n_train", "512"},
    {"n_test", "128"},
    {"seed", "0"},
    {"paper_dt", "false"},
    {"dt_solver", "auto"},
    {"horizon", "auto"},
    {"pde_epsilon", "0.01"},
    {"potential", "1"},
    {"coupling", "1"},
    // model
    {"arch", "auto"},
    {"width", "auto"},
    {"layers", "4"},
    {"modes", "auto"},
    {"activation", "auto"},
    {"generator", "auto"},
    {"head_layers", "3"},
    {"law_epsilon", "1e-12"},
    {"exactness_pass", "true"},
    // training
    {"method", "raw"},
    {"lambda", "0"},
    {"epochs", "100"},
    {"batch_size", "16"},
    {"lr0", "auto"},
    // evaluation, sweeps, benchmarks
    {"steps", "10"},
    {"lambdas", "auto"},
    {"seeds", "3"},
    {"suite", "lse-norm"},
    // paths
    {"data", "data"},
    {"out", "out"},
    {"checkpoint", "out/model.nopc"},
};

std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T>
T parse_as(const std::string& key, const std::string& value) {
    T out{};
    auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw UsageError("config: invalid value for " + key + ": '" + value + "'");
    }
    return out;
}

template <typename E, std::size_t K>
E parse_enum(const std::string& key, const std::string& value, const E (&options)[K], const char* (*name)(E)) {
    std::string valid;
    for (E e : options) {
        if (value == name(e)) return e;
        valid += valid.empty() ? "" : ", ";
        valid += name(e);
    }
    throw UsageError("config: invalid value for " + key + ": '" + value + "' (expected " + valid + ")");
}

const Arch kArchs[] = {Arch::Fno1d, Arch::Cnn2d};
const Activation kActivations[] = {Activation::Gelu, Activation::Tanh};
const GeneratorKind kGenerators[] = {GeneratorKind::SoftmaxVector, GeneratorKind::PointwiseMlp, GeneratorKind::ConvK3};

}  // namespace

RunConfig::RunConfig() {
    for (const KeyDef& k : kKeys) values_[k.key] = k.fallback;
}

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> out = [] {
        std::vector<std::string> v;
        for (const KeyDef& k : kKeys) v.emplace_back(k.key);
        return v;
    }();
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("config: unknown key '" + key + "'");
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("config: unknown key '" + key + "'");
    return it->second;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
    for (const auto& [k, v] : parse_key_values(text, origin)) {
        if (!values_.count(k)) throw UsageError(origin + ": unknown key '" + k + "'");
        values_[k] = v;
    }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    merge_text(buf.str(), path.string());
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    RunConfig cfg;
    cfg.merge_file(path);
    return cfg;
}

double RunConfig::real(const std::string& key) const { return parse_as<double>(key, get(key)); }
std::size_t RunConfig::count(const std::string& key) const { return parse_as<std::size_t>(key, get(key)); }
std::uint64_t RunConfig::u64(const std::string& key) const { return parse_as<std::uint64_t>(key, get(key)); }

bool RunConfig::flag(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config: invalid value for " + key + ": '" + v + "' (expected true or false)");
}

std::vector<double> RunConfig::reals(const std::string& key) const {
    std::vector<double> out;
    std::stringstream in(get(key));
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b == std::string::npos) throw UsageError("config: empty entry in " + key);
        out.push_back(parse_as<double>(key, item.substr(b, e - b + 1)));
    }
    if (out.empty()) throw UsageError("config: " + key + " is empty");
    return out;
}

PdeKind RunConfig::pde() const {
    if (is_auto("pde")) throw UsageError("config: pde is not set");
    return parse_pde(get("pde"));
}

LawKind RunConfig::law() const {
    if (is_auto("law")) throw UsageError("config: law is not set");
    return parse_law(get("law"));
}

Method RunConfig::method() const { return parse_method(get("method")); }

void RunConfig::resolve(PdeKind pde_kind, LawKind law_kind) {
    if (!is_auto("pde") && pde() != pde_kind) {
        throw DataError(std::string("config asks for pde ") + get("pde") + " but the data holds " + pde_name(pde_kind));
    }
    if (!is_auto("law") && law() != law_kind) {
        throw DataError(std::string("config asks for law ") + get("law") + " but the data conserves " + law_name(law_kind));
    }
    values_["pde"] = pde_name(pde_kind);
    values_["law"] = law_name(law_kind);
    if (!law_allowed(pde_kind, law_kind)) {
        throw UsageError(std::string("law ") + law_name(law_kind) + " is not valid for " + pde_name(pde_kind) +
                         "; valid pairs: " + valid_pde_law_pairs());
    }

    const PdeSpec d = PdeSpec::defaults(pde_kind, flag("paper_dt"));
    const bool one_d = d.spatial_rank() == 1;
    auto fill = [&](const char* key, const std::string& v) {
        if (is_auto(key)) values_[key] = v;
    };
    fill("resolution", std::to_string(d.resolution));
    fill("dt_solver", fmt(d.dt_solver));
    fill("horizon", fmt(d.horizon));
    fill("arch", one_d ? "fno1d" : "cnn2d");
    fill("width", one_d ? "32" : "16");
    fill("modes", std::to_string(std::min<std::size_t>(16, count("resolution") / 2)));
    fill("activation", one_d ? "gelu" : "tanh");
    fill("generator", one_d ? "mlp" : "conv");
    fill("lr0", one_d ? "0.0015" : "0.0001");
    if (is_auto("lambdas")) {
        std::string grid;
        for (double l : default_lambdas(law_kind)) grid += (grid.empty() ? "" : ",") + fmt(l);
        values_["lambdas"] = grid;
    }

    const Arch arch = parse_enum("arch", get("arch"), kArchs, arch_name);
    if ((arch == Arch::Fno1d) != one_d) {
        throw UsageError(std::string("arch ") + arch_name(arch) + " does not fit the " + pde_name(pde_kind) + " grid");
    }
    method();
    pde_spec().validate();
    model_config(0).validate();
    train_config(0).validate();
    head().law.validate(d.channels());
}

void RunConfig::resolve() { resolve(pde(), law()); }

std::string RunConfig::to_text() const {
    std::ostringstream out;
    for (const KeyDef& k : kKeys) out << k.key << '=' << values_.at(k.key) << '\n';
    return out.str();
}

void RunConfig::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_text();
    if (!out) throw DataError("write failed: " + path.string());
}

PdeSpec RunConfig::pde_spec() const {
    PdeSpec s = PdeSpec::defaults(pde(), flag("paper_dt"));
    s.resolution = count("resolution");
    s.dt_solver = real("dt_solver");
    s.horizon = real("horizon");
    s.epsilon = real("pde_epsilon");
    s.potential = real("potential");
    s.coupling = real("coupling");
    s.seed = u64("seed");
    return s;
}

ModelConfig RunConfig::model_config(std::uint64_t seed) const {
    const PdeSpec s = pde_spec();
    ModelConfig m;
    m.arch = parse_enum("arch", get("arch"), kArchs, arch_name);
    m.in_channels = s.channels() + s.spatial_rank();
    m.out_channels = s.channels();
    m.hidden_width = count("width");
    m.layers = count("layers");
    m.modes = count("modes");
    m.activation = parse_enum("activation", get("activation"), kActivations, activation_name);
    m.seed = seed;
    return m;
}

CorrectionHead RunConfig::head() const {
    const PdeSpec s = pde_spec();
    CorrectionHead h;
    h.generator = parse_enum("generator", get("generator"), kGenerators, generator_name);
    h.law.kind = law();
    h.law.channels.clear();
    for (std::size_t c = 0; c < s.channels(); ++c) h.law.channels.push_back(c);
    h.law.epsilon = real("law_epsilon");
    h.law.exactness_pass = flag("exactness_pass");
    h.grid = s.grid();
    h.hidden_layers = count("head_layers");
    return h;
}

TrainConfig RunConfig::train_config(std::uint64_t seed) const {
    TrainConfig t;
    t.method = method();
    t.lambda = real("lambda");
    t.epochs = count("epochs");
    t.batch_size = count("batch_size");
    t.lr0 = real("lr0");
    t.seed = seed;
    return t;
}

Surrogate RunConfig::make_surrogate(std::uint64_t seed) const {
    return Surrogate::create(model_config(seed), head(), method());
}

}  // namespace conserve
