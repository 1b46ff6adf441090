#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "conserve/tape.hpp"

namespace conserve {

enum class OpKind { Add, Sub, Mul, Div, Neg, Square, Sqrt, Tanh, Gelu, Relu, Abs };

/// Pairwise (cascade) summation.
double pairwise_sum(std::span<const double> values);

/// Elementwise op. Binary kinds accept identical shapes or a scalar on
/// either side; unary kinds ignore `b`. Sqrt requires strictly positive
/// input, Div a nonzero divisor.
Var elementwise(OpKind kind, Var a, Var b = Var());

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var square(Var a);
Var sqrt(Var a);
Var tanh(Var a);
Var gelu(Var a);
Var relu(Var a);
Var abs(Var a);

Var scale(Var a, double c);
Var shift(Var a, double c);

/// Sum of every entry, as a scalar.
Var reduce_sum(Var a);
/// Per-channel sums of a (channels, dims...) tensor, shape (channels).
Var reduce_sum_channels(Var a);

/// Pointwise channel mixing: out[o, p] = b[o] + sum_i W[o, i] x[i, p].
/// W has shape (out, in), b has shape (out).
Var dense(Var x, Var W, Var b);

/// Periodic 3x3 cross-correlation of a (in, H, W) field with kernel
/// K (out, in, 3, 3) plus bias b (out). Output keeps the spatial size.
Var circular_conv2d(Var x, Var K, Var b);

/// Fourier layer on a real (in, N) field: keep modes k < W.shape[0], mix
/// channels with complex weights W (modes, out, in, 2) [re, im], and return
/// the real inverse transform. N must be a power of two with N >= 2 * modes.
Var spectral_conv1d(Var x, Var W);

/// Softmax over all entries (max-subtracted). Output sums to one.
Var softmax_flat(Var logits);

Var select_channels(Var x, const std::vector<std::size_t>& channels);
Var concat_channels(const std::vector<Var>& parts);
/// Copy of `base` with `channels` replaced, in order, by the channels of `replacement`.
Var merge_channels(Var base, Var replacement, const std::vector<std::size_t>& channels);
Var reshape(Var x, Shape shape);

/// ||pred - gt||_2 / ||gt||_2 over all entries, on tape. gt must be nonzero.
Var relative_l2_loss(Var pred, const Tensor& gt);

}  // namespace conserve
