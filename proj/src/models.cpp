#include "conserve/models.hpp"

#include <cmath>
#include <random>

#include "conserve/error.hpp"
#include "conserve/fft.hpp"
#include "conserve/ops.hpp"

namespace conserve {

const char* arch_name(Arch a) { return a == Arch::Fno1d ? "fno1d" : "cnn2d"; }
const char* activation_name(Activation a) { return a == Activation::Gelu ? "gelu" : "tanh"; }

const char* generator_name(GeneratorKind g) {
    switch (g) {
        case GeneratorKind::SoftmaxVector: return "softmax";
        case GeneratorKind::PointwiseMlp: return "mlp";
        case GeneratorKind::ConvK3: return "conv";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (layers < 1) throw UsageError("model needs at least one layer");
    if (in_channels == 0 || out_channels == 0 || hidden_width == 0) throw UsageError("model channel counts must be positive");
    if (arch == Arch::Fno1d && modes == 0) throw UsageError("fno1d needs at least one Fourier mode");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Tensor uniform(const Shape& shape, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

void add_dense(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    ps.add(name + ".weight", uniform({out, in}, -bound, bound, rng));
    ps.add(name + ".bias", uniform({out}, -bound, bound, rng));
}

void add_conv(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * 9));
    ps.add(name + ".kernel", uniform({out, in, 3, 3}, -bound, bound, rng));
    ps.add(name + ".bias", uniform({out}, -bound, bound, rng));
}

Var apply_dense(ParamStore& ps, const std::string& name, Var x) {
    Tape& t = *x.tape();
    return dense(x, t.param(ps, name + ".weight"), t.param(ps, name + ".bias"));
}

Var apply_conv(ParamStore& ps, const std::string& name, Var x) {
    Tape& t = *x.tape();
    return circular_conv2d(x, t.param(ps, name + ".kernel"), t.param(ps, name + ".bias"));
}

Var activate(Activation a, Var x) { return a == Activation::Gelu ? gelu(x) : tanh(x); }

std::size_t mlp_hidden(const ModelConfig& cfg) { return 2 * cfg.out_channels; }

void add_pointwise_mlp(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg, std::size_t hidden_layers,
                       std::size_t out, std::mt19937_64& rng) {
    const std::size_t h = mlp_hidden(cfg);
    std::size_t in = cfg.out_channels;
    for (std::size_t l = 0; l < hidden_layers; ++l) {
        add_dense(ps, prefix + ".hidden" + std::to_string(l), in, h, rng);
        in = h;
    }
    add_dense(ps, prefix + ".out", in, out, rng);
}

Var apply_pointwise_mlp(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg, std::size_t hidden_layers,
                        Var y) {
    Var h = y;
    for (std::size_t l = 0; l < hidden_layers; ++l) {
        h = activate(cfg.activation, apply_dense(ps, prefix + ".hidden" + std::to_string(l), h));
    }
    return apply_dense(ps, prefix + ".out", h);
}

Shape spatial_of(const Tensor& t) { return Shape(t.shape().begin() + 1, t.shape().end()); }

}  // namespace

void init_model_params(const ModelConfig& cfg, ParamStore& ps) {
    cfg.validate();
    std::mt19937_64 rng(splitmix64(cfg.seed));
    const std::size_t w = cfg.hidden_width;
    if (cfg.arch == Arch::Fno1d) {
        add_dense(ps, "model.lift", cfg.in_channels, w, rng);
        const double scale = 1.0 / static_cast<double>(w * w);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::string name = "model.layer" + std::to_string(l);
            ps.add(name + ".spectral", uniform({cfg.modes, w, w, 2}, 0.0, scale, rng));
            add_dense(ps, name + ".skip", w, w, rng);
        }
    } else {
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            add_conv(ps, "model.layer" + std::to_string(l), l == 0 ? cfg.in_channels : w, w, rng);
        }
    }
    add_dense(ps, "model.proj", w, cfg.out_channels, rng);
}

void init_head_params(const CorrectionHead& head, const ModelConfig& cfg, ParamStore& ps) {
    head.law.validate(cfg.out_channels);
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x68656164ULL));
    const std::size_t law_c = head.law.channels.size();
    switch (head.generator) {
        case GeneratorKind::SoftmaxVector: {
            if (head.grid.empty()) throw UsageError("softmax generator needs the grid shape");
            Shape s{law_c};
            s.insert(s.end(), head.grid.begin(), head.grid.end());
            ps.add("head.logits", Tensor(s, 0.0));
            break;
        }
        case GeneratorKind::PointwiseMlp:
            add_pointwise_mlp(ps, "head.mlp", cfg, head.hidden_layers, law_c, rng);
            break;
        case GeneratorKind::ConvK3:
            add_conv(ps, "head.conv", cfg.out_channels + cfg.hidden_width, law_c, rng);
            break;
    }
}

void init_append_params(const ModelConfig& cfg, ParamStore& ps) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x68656164ULL));
    add_pointwise_mlp(ps, "append.mlp", cfg, 3, cfg.out_channels, rng);
}

ModelOutput fno1d_forward(const ModelConfig& cfg, ParamStore& ps, Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.shape()[0] != cfg.in_channels) {
        throw ShapeError("fno1d: expected input (" + std::to_string(cfg.in_channels) + ", N), got " + shape_string(xv.shape()));
    }
    const std::size_t N = xv.shape()[1];
    if (!is_power_of_two(N) || N < 2 * cfg.modes) {
        throw ShapeError("fno1d: grid length " + std::to_string(N) + " must be a power of two >= 2 * modes");
    }
    Tape& t = *x.tape();
    Var h = apply_dense(ps, "model.lift", x);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string name = "model.layer" + std::to_string(l);
        Var s = spectral_conv1d(h, t.param(ps, name + ".spectral"));
        Var k = apply_dense(ps, name + ".skip", h);
        h = activate(cfg.activation, add(s, k));
    }
    return {apply_dense(ps, "model.proj", h), h};
}

ModelOutput cnn2d_forward(const ModelConfig& cfg, ParamStore& ps, Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3 || xv.shape()[0] != cfg.in_channels) {
        throw ShapeError("cnn2d: expected input (" + std::to_string(cfg.in_channels) + ", H, W), got " + shape_string(xv.shape()));
    }
    Var h = x;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        h = activate(cfg.activation, apply_conv(ps, "model.layer" + std::to_string(l), h));
    }
    return {apply_dense(ps, "model.proj", h), h};
}

ModelOutput model_forward(const ModelConfig& cfg, ParamStore& ps, Var x) {
    return cfg.arch == Arch::Fno1d ? fno1d_forward(cfg, ps, x) : cnn2d_forward(cfg, ps, x);
}

CorrectionCoefficients generate_A(const CorrectionHead& head, const ModelConfig& cfg, ParamStore& ps, Var output,
                                  Var features) {
    const Shape spatial = spatial_of(output.value());
    if (spatial_of(features.value()) != spatial) {
        throw ShapeError("generate_A: output " + shape_string(output.shape()) + " and features " +
                         shape_string(features.shape()) + " differ spatially");
    }
    Tape& t = *output.tape();
    Var raw;
    switch (head.generator) {
        case GeneratorKind::SoftmaxVector: {
            raw = t.param(ps, "head.logits");
            if (spatial_of(raw.value()) != spatial) {
                throw ShapeError("generate_A: logit field " + shape_string(raw.shape()) + " does not match grid " +
                                 shape_string(spatial));
            }
            break;
        }
        case GeneratorKind::PointwiseMlp:
            raw = apply_pointwise_mlp(ps, "head.mlp", cfg, head.hidden_layers, output);
            break;
        case GeneratorKind::ConvK3: {
            Var input = concat_channels({output, features});
            if (spatial.size() == 1) {
                // 1D grids run as a single periodic row.
                Var as2d = reshape(input, Shape{input.shape()[0], 1, spatial[0]});
                Var c = apply_conv(ps, "head.conv", as2d);
                raw = reshape(c, Shape{c.shape()[0], spatial[0]});
            } else if (spatial.size() == 2) {
                raw = apply_conv(ps, "head.conv", input);
            } else {
                throw ShapeError("generate_A: conv generator supports 1D and 2D grids");
            }
            break;
        }
    }
    if (head.law.kind == LawKind::Linear) return {softmax_flat(raw), CoefficientConstraint::SumToOne};
    return {raw, CoefficientConstraint::Unconstrained};
}

Var corrected_forward(const ModelConfig& cfg, const CorrectionHead& head, ParamStore& ps, Var x, double target) {
    ModelOutput m = model_forward(cfg, ps, x);
    CorrectionCoefficients A = generate_A(head, cfg, ps, m.output, m.features);

    const auto& channels = head.law.channels;
    bool all = channels.size() == cfg.out_channels;
    for (std::size_t i = 0; all && i < channels.size(); ++i) all = channels[i] == i;
    Var U = all ? m.output : select_channels(m.output, channels);

    Var fixed = head.law.kind == LawKind::Linear ? linear_correct(U, A, target)
                                                 : quadratic_correct(U, A, target, head.law);
    return all ? fixed : merge_channels(m.output, fixed, channels);
}

Var append_mlp_forward(const ModelConfig& cfg, ParamStore& ps, Var x) {
    ModelOutput m = model_forward(cfg, ps, x);
    return apply_pointwise_mlp(ps, "append.mlp", cfg, 3, m.output);
}

}  // namespace conserve
