#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "conserve/conservation.hpp"
#include "conserve/param_store.hpp"
#include "conserve/tape.hpp"

namespace conserve {

enum class Arch { Fno1d, Cnn2d };
enum class Activation { Gelu, Tanh };

struct ModelConfig {
    Arch arch = Arch::Fno1d;
    std::size_t in_channels = 3;
    std::size_t out_channels = 2;
    std::size_t hidden_width = 32;
    std::size_t layers = 4;
    std::size_t modes = 16;  // Fno1d only
    Activation activation = Activation::Gelu;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class GeneratorKind { SoftmaxVector, PointwiseMlp, ConvK3 };

/// Learnable generator of the correction direction A plus the law it serves.
struct CorrectionHead {
    GeneratorKind generator = GeneratorKind::PointwiseMlp;
    ConservationLaw law;
    /// Grid of the free logit field (SoftmaxVector only).
    Shape grid;
    std::size_t hidden_layers = 3;
};

struct ModelOutput {
    Var output;    // (out_channels, dims...)
    Var features;  // last hidden activations, (hidden_width, dims...)
};

const char* arch_name(Arch a);
const char* activation_name(Activation a);
const char* generator_name(GeneratorKind g);

/// Registers model parameters under "model." with seeded initialisation.
void init_model_params(const ModelConfig& cfg, ParamStore& params);
/// Registers generator parameters under "head.". The generator output
/// width is the number of law channels.
void init_head_params(const CorrectionHead& head, const ModelConfig& cfg, ParamStore& params);
/// Appended pointwise MLP of the ablation, under "append.".
void init_append_params(const ModelConfig& cfg, ParamStore& params);

/// Lifting dense -> layers x act(spectral_conv1d + dense skip) -> projection dense.
ModelOutput fno1d_forward(const ModelConfig& cfg, ParamStore& params, Var x);
/// layers x act(circular_conv2d) -> 1x1 projection.
ModelOutput cnn2d_forward(const ModelConfig& cfg, ParamStore& params, Var x);
ModelOutput model_forward(const ModelConfig& cfg, ParamStore& params, Var x);

/// Correction direction A over the law channels. Linear laws pass through
/// softmax_flat (SumToOne); quadratic laws use the raw generator output.
CorrectionCoefficients generate_A(const CorrectionHead& head, const ModelConfig& cfg, ParamStore& params,
                                  Var output, Var features);

/// model -> generator -> corrector, all on one tape.
Var corrected_forward(const ModelConfig& cfg, const CorrectionHead& head, ParamStore& params, Var x, double target);

/// Ablation: the model output passed through an appended pointwise MLP, no correction.
Var append_mlp_forward(const ModelConfig& cfg, ParamStore& params, Var x);

}  // namespace conserve
