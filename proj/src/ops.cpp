#include "conserve/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

#include "conserve/error.hpp"
#include "conserve/fft.hpp"

namespace conserve {

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

namespace {

void check_same_tape(Var a, Var b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
        throw std::invalid_argument("operands must live on the same tape");
    }
}

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Div: return "div";
        case OpKind::Neg: return "neg";
        case OpKind::Square: return "square";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Tanh: return "tanh";
        case OpKind::Gelu: return "gelu";
        case OpKind::Relu: return "relu";
        case OpKind::Abs: return "abs";
    }
    return "?";
}

bool is_binary(OpKind k) {
    return k == OpKind::Add || k == OpKind::Sub || k == OpKind::Mul || k == OpKind::Div;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_deriv(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi * kInvSqrt2);
    return cdf + x * pdf;
}

Var binary(OpKind kind, Var a, Var b) {
    check_same_tape(a, b);
    Tape& tape = *a.tape();
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool a_scalar = av.size() == 1 && av.is_scalar();
    const bool b_scalar = bv.size() == 1 && bv.is_scalar();
    if (av.shape() != bv.shape() && !a_scalar && !b_scalar) {
        std::ostringstream os;
        os << op_name(kind) << ": shape mismatch " << shape_string(av.shape()) << " vs " << shape_string(bv.shape());
        throw ShapeError(os.str());
    }
    const Shape& out_shape = (a_scalar && !b_scalar) ? bv.shape() : av.shape();
    const std::size_t n = shape_size(out_shape);
    const double* ap = av.data().data();
    const double* bp = bv.data().data();
    const std::size_t as = a_scalar ? 0 : 1;
    const std::size_t bs = b_scalar ? 0 : 1;

    if (kind == OpKind::Div) {
        for (std::size_t i = 0; i < bv.size(); ++i) {
            if (bp[i] == 0.0) throw DomainError("div: division by zero");
        }
    }

    Tensor out(out_shape);
    double* o = out.data().data();
    switch (kind) {
        case OpKind::Add: for (std::size_t i = 0; i < n; ++i) o[i] = ap[i * as] + bp[i * bs]; break;
        case OpKind::Sub: for (std::size_t i = 0; i < n; ++i) o[i] = ap[i * as] - bp[i * bs]; break;
        case OpKind::Mul: for (std::size_t i = 0; i < n; ++i) o[i] = ap[i * as] * bp[i * bs]; break;
        case OpKind::Div: for (std::size_t i = 0; i < n; ++i) o[i] = ap[i * as] / bp[i * bs]; break;
        default: break;
    }

    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return tape.record(std::move(out), op_name(kind), {ia, ib}, [kind, ia, ib, as, bs, n](Tape& t, std::size_t self) {
        const double* g = t.grad_buffer(self).data().data();
        const double* x = t.value(ia).data().data();
        const double* y = t.value(ib).data().data();
        if (t.requires_grad(ia)) {
            double* ga = t.grad_buffer(ia).data().data();
            for (std::size_t i = 0; i < n; ++i) {
                double d = 0.0;
                switch (kind) {
                    case OpKind::Add: d = g[i]; break;
                    case OpKind::Sub: d = g[i]; break;
                    case OpKind::Mul: d = g[i] * y[i * bs]; break;
                    case OpKind::Div: d = g[i] / y[i * bs]; break;
                    default: break;
                }
                ga[i * as] += d;
            }
        }
        if (t.requires_grad(ib)) {
            double* gb = t.grad_buffer(ib).data().data();
            for (std::size_t i = 0; i < n; ++i) {
                double d = 0.0;
                switch (kind) {
                    case OpKind::Add: d = g[i]; break;
                    case OpKind::Sub: d = -g[i]; break;
                    case OpKind::Mul: d = g[i] * x[i * as]; break;
                    case OpKind::Div: {
                        const double yv = y[i * bs];
                        d = -g[i] * x[i * as] / (yv * yv);
                        break;
                    }
                    default: break;
                }
                gb[i * bs] += d;
            }
        }
    });
}

Var unary(OpKind kind, Var a) {
    if (!a.valid()) throw std::invalid_argument("unary op on invalid var");
    Tape& tape = *a.tape();
    const Tensor& av = a.value();
    const std::size_t n = av.size();
    const double* x = av.data().data();
    if (kind == OpKind::Sqrt) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!(x[i] > 0.0)) {
                std::ostringstream os;
                os << "sqrt: non-positive entry " << x[i] << " at index " << i;
                throw DomainError(os.str());
            }
        }
    }
    Tensor out(av.shape());
    double* o = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        switch (kind) {
            case OpKind::Neg: o[i] = -x[i]; break;
            case OpKind::Square: o[i] = x[i] * x[i]; break;
            case OpKind::Sqrt: o[i] = std::sqrt(x[i]); break;
            case OpKind::Tanh: o[i] = std::tanh(x[i]); break;
            case OpKind::Gelu: o[i] = gelu_value(x[i]); break;
            case OpKind::Relu: o[i] = x[i] > 0.0 ? x[i] : 0.0; break;
            case OpKind::Abs: o[i] = std::abs(x[i]); break;
            default: break;
        }
    }
    const std::size_t ia = a.id();
    return tape.record(std::move(out), op_name(kind), {ia}, [kind, ia, n](Tape& t, std::size_t self) {
        const double* g = t.grad_buffer(self).data().data();
        const double* x = t.value(ia).data().data();
        const double* y = t.value(self).data().data();
        double* ga = t.grad_buffer(ia).data().data();
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.0;
            switch (kind) {
                case OpKind::Neg: d = -1.0; break;
                case OpKind::Square: d = 2.0 * x[i]; break;
                case OpKind::Sqrt: d = 0.5 / y[i]; break;
                case OpKind::Tanh: d = 1.0 - y[i] * y[i]; break;
                case OpKind::Gelu: d = gelu_deriv(x[i]); break;
                case OpKind::Relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
                case OpKind::Abs: d = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0); break;
                default: break;
            }
            ga[i] += g[i] * d;
        }
    });
}

}  // namespace

Var elementwise(OpKind kind, Var a, Var b) { return is_binary(kind) ? binary(kind, a, b) : unary(kind, a); }

Var add(Var a, Var b) { return binary(OpKind::Add, a, b); }
Var sub(Var a, Var b) { return binary(OpKind::Sub, a, b); }
Var mul(Var a, Var b) { return binary(OpKind::Mul, a, b); }
Var div(Var a, Var b) { return binary(OpKind::Div, a, b); }
Var neg(Var a) { return unary(OpKind::Neg, a); }
Var square(Var a) { return unary(OpKind::Square, a); }
Var sqrt(Var a) { return unary(OpKind::Sqrt, a); }
Var tanh(Var a) { return unary(OpKind::Tanh, a); }
Var gelu(Var a) { return unary(OpKind::Gelu, a); }
Var relu(Var a) { return unary(OpKind::Relu, a); }
Var abs(Var a) { return unary(OpKind::Abs, a); }

Var scale(Var a, double c) {
    Tensor out = a.value();
    for (double& v : out.values()) v *= c;
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), "scale", {ia}, [ia, c](Tape& t, std::size_t self) {
        auto g = t.grad_buffer(self).data();
        auto ga = t.grad_buffer(ia).data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

Var shift(Var a, double c) {
    Tensor out = a.value();
    for (double& v : out.values()) v += c;
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), "shift", {ia}, [ia](Tape& t, std::size_t self) {
        auto g = t.grad_buffer(self).data();
        auto ga = t.grad_buffer(ia).data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var reduce_sum(Var a) {
    const std::size_t ia = a.id();
    return a.tape()->record(Tensor::scalar(pairwise_sum(a.value().data())), "reduce_sum", {ia},
                            [ia](Tape& t, std::size_t self) {
                                const double g = t.grad_buffer(self)[0];
                                for (double& v : t.grad_buffer(ia).values()) v += g;
                            });
}

Var reduce_sum_channels(Var a) {
    const Tensor& av = a.value();
    if (av.rank() < 1) throw ShapeError("reduce_sum_channels needs rank >= 1, got " + shape_string(av.shape()));
    const std::size_t channels = av.shape()[0];
    const std::size_t per = av.size() / channels;
    Tensor out(Shape{channels});
    for (std::size_t c = 0; c < channels; ++c) out[c] = pairwise_sum(av.data().subspan(c * per, per));
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(out), "reduce_sum_channels", {ia},
                            [ia, channels, per](Tape& t, std::size_t self) {
                                auto g = t.grad_buffer(self).data();
                                auto ga = t.grad_buffer(ia).data();
                                for (std::size_t c = 0; c < channels; ++c) {
                                    for (std::size_t p = 0; p < per; ++p) ga[c * per + p] += g[c];
                                }
                            });
}

Var dense(Var x, Var W, Var b) {
    check_same_tape(x, W);
    check_same_tape(x, b);
    const Tensor& xv = x.value();
    const Tensor& wv = W.value();
    const Tensor& bv = b.value();
    if (xv.rank() < 1 || wv.rank() != 2 || bv.rank() != 1 || wv.shape()[1] != xv.shape()[0] ||
        bv.shape()[0] != wv.shape()[0]) {
        throw ShapeError("dense: incompatible shapes x" + shape_string(xv.shape()) + " W" + shape_string(wv.shape()) +
                         " b" + shape_string(bv.shape()));
    }
    const std::size_t cin = wv.shape()[1];
    const std::size_t cout = wv.shape()[0];
    const std::size_t P = xv.size() / cin;
    Shape out_shape = xv.shape();
    out_shape[0] = cout;
    Tensor out(out_shape);
    {
        const double* xp = xv.data().data();
        const double* wp = wv.data().data();
        double* op = out.data().data();
        for (std::size_t o = 0; o < cout; ++o) {
            double* orow = op + o * P;
            std::fill(orow, orow + P, bv[o]);
            for (std::size_t i = 0; i < cin; ++i) {
                const double w = wp[o * cin + i];
                const double* xrow = xp + i * P;
                for (std::size_t p = 0; p < P; ++p) orow[p] += w * xrow[p];
            }
        }
    }
    const std::size_t ix = x.id(), iw = W.id(), ib = b.id();
    return x.tape()->record(std::move(out), "dense", {ix, iw, ib}, [=](Tape& t, std::size_t self) {
        const double* g = t.grad_buffer(self).data().data();
        const double* xp = t.value(ix).data().data();
        const double* wp = t.value(iw).data().data();
        if (t.requires_grad(ix)) {
            double* gx = t.grad_buffer(ix).data().data();
            for (std::size_t o = 0; o < cout; ++o) {
                const double* grow = g + o * P;
                for (std::size_t i = 0; i < cin; ++i) {
                    const double w = wp[o * cin + i];
                    double* gxrow = gx + i * P;
                    for (std::size_t p = 0; p < P; ++p) gxrow[p] += w * grow[p];
                }
            }
        }
        if (t.requires_grad(iw)) {
            double* gw = t.grad_buffer(iw).data().data();
            for (std::size_t o = 0; o < cout; ++o) {
                const double* grow = g + o * P;
                for (std::size_t i = 0; i < cin; ++i) {
                    const double* xrow = xp + i * P;
                    double s[4] = {0.0, 0.0, 0.0, 0.0};
                    std::size_t p = 0;
                    for (; p + 4 <= P; p += 4) {
                        for (std::size_t j = 0; j < 4; ++j) s[j] += grow[p + j] * xrow[p + j];
                    }
                    for (; p < P; ++p) s[0] += grow[p] * xrow[p];
                    gw[o * cin + i] += (s[0] + s[1]) + (s[2] + s[3]);
                }
            }
        }
        if (t.requires_grad(ib)) {
            double* gb = t.grad_buffer(ib).data().data();
            for (std::size_t o = 0; o < cout; ++o) {
                const double* grow = g + o * P;
                double s = 0.0;
                for (std::size_t p = 0; p < P; ++p) s += grow[p];
                gb[o] += s;
            }
        }
    });
}

namespace {

// out[y][x] += k * src[(y + dy) mod H][(x + dx) mod W]
void axpy_shifted(double* out, const double* src, std::size_t H, std::size_t W, int dy, int dx, double k) {
    for (std::size_t y = 0; y < H; ++y) {
        const std::size_t sy = (y + H + static_cast<std::size_t>(dy + static_cast<int>(H))) % H;
        const double* s = src + sy * W;
        double* o = out + y * W;
        if (dx == 0) {
            for (std::size_t x = 0; x < W; ++x) o[x] += k * s[x];
        } else if (dx > 0) {
            for (std::size_t x = 0; x + 1 < W; ++x) o[x] += k * s[x + 1];
            o[W - 1] += k * s[0];
        } else {
            o[0] += k * s[W - 1];
            for (std::size_t x = 1; x < W; ++x) o[x] += k * s[x - 1];
        }
    }
}

// sum_{y,x} a[y][x] * src[(y + dy) mod H][(x + dx) mod W]
double dot_shifted(const double* a, const double* src, std::size_t H, std::size_t W, int dy, int dx) {
    double total = 0.0;
    for (std::size_t y = 0; y < H; ++y) {
        const std::size_t sy = (y + H + static_cast<std::size_t>(dy + static_cast<int>(H))) % H;
        const double* s = src + sy * W;
        const double* r = a + y * W;
        double acc = 0.0;
        if (dx == 0) {
            for (std::size_t x = 0; x < W; ++x) acc += r[x] * s[x];
        } else if (dx > 0) {
            for (std::size_t x = 0; x + 1 < W; ++x) acc += r[x] * s[x + 1];
            acc += r[W - 1] * s[0];
        } else {
            acc += r[0] * s[W - 1];
            for (std::size_t x = 1; x < W; ++x) acc += r[x] * s[x - 1];
        }
        total += acc;
    }
    return total;
}

}  // namespace

Var circular_conv2d(Var x, Var K, Var b) {
    check_same_tape(x, K);
    check_same_tape(x, b);
    const Tensor& xv = x.value();
    const Tensor& kv = K.value();
    const Tensor& bv = b.value();
    if (xv.rank() != 3) throw ShapeError("circular_conv2d: expected (channels, H, W) input, got " + shape_string(xv.shape()));
    if (kv.rank() != 4 || kv.shape()[2] != 3 || kv.shape()[3] != 3 || kv.shape()[1] != xv.shape()[0] ||
        bv.rank() != 1 || bv.shape()[0] != kv.shape()[0]) {
        throw ShapeError("circular_conv2d: incompatible kernel " + shape_string(kv.shape()) + " / bias " +
                         shape_string(bv.shape()) + " for input " + shape_string(xv.shape()));
    }
    const std::size_t cin = xv.shape()[0], H = xv.shape()[1], W = xv.shape()[2];
    const std::size_t cout = kv.shape()[0];
    const std::size_t P = H * W;
    Tensor out(Shape{cout, H, W});
    {
        const double* xp = xv.data().data();
        const double* kp = kv.data().data();
        double* op = out.data().data();
        for (std::size_t o = 0; o < cout; ++o) {
            std::fill(op + o * P, op + (o + 1) * P, bv[o]);
            for (std::size_t i = 0; i < cin; ++i) {
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const double k = kp[((o * cin + i) * 3 + ky) * 3 + kx];
                        axpy_shifted(op + o * P, xp + i * P, H, W, ky - 1, kx - 1, k);
                    }
                }
            }
        }
    }
    const std::size_t ix = x.id(), ik = K.id(), ib = b.id();
    return x.tape()->record(std::move(out), "circular_conv2d", {ix, ik, ib}, [=](Tape& t, std::size_t self) {
        const double* g = t.grad_buffer(self).data().data();
        const double* xp = t.value(ix).data().data();
        const double* kp = t.value(ik).data().data();
        if (t.requires_grad(ix)) {
            double* gx = t.grad_buffer(ix).data().data();
            for (std::size_t o = 0; o < cout; ++o) {
                for (std::size_t i = 0; i < cin; ++i) {
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const double k = kp[((o * cin + i) * 3 + ky) * 3 + kx];
                            axpy_shifted(gx + i * P, g + o * P, H, W, 1 - ky, 1 - kx, k);
                        }
                    }
                }
            }
        }
        if (t.requires_grad(ik)) {
            double* gk = t.grad_buffer(ik).data().data();
            for (std::size_t o = 0; o < cout; ++o) {
                for (std::size_t i = 0; i < cin; ++i) {
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            gk[((o * cin + i) * 3 + ky) * 3 + kx] +=
                                dot_shifted(g + o * P, xp + i * P, H, W, ky - 1, kx - 1);
                        }
                    }
                }
            }
        }
        if (t.requires_grad(ib)) {
            double* gb = t.grad_buffer(ib).data().data();
            for (std::size_t o = 0; o < cout; ++o) {
                double s = 0.0;
                for (std::size_t p = 0; p < P; ++p) s += g[o * P + p];
                gb[o] += s;
            }
        }
    });
}

namespace {

// Low bins of the spectra of two real signals from one complex transform of a + i b.
// b may be null.
void real_pair_spectra(const double* a, const double* b, std::size_t N, std::size_t modes, std::vector<cplx>& buf,
                       cplx* A, cplx* B) {
    for (std::size_t n = 0; n < N; ++n) buf[n] = cplx(a[n], b ? b[n] : 0.0);
    fft_inplace(buf, false);
    for (std::size_t k = 0; k < modes; ++k) {
        const cplx z = buf[k];
        const cplx r = std::conj(buf[(N - k) % N]);
        A[k] = 0.5 * (z + r);
        if (B) B[k] = cmul(cplx(0.0, -0.5), z - r);
    }
}

// Inverse of two Hermitian spectra given by their low bins (bin 0 taken as real).
void real_pair_inverse(const cplx* A, const cplx* B, std::size_t N, std::size_t modes, std::vector<cplx>& buf,
                       double* a, double* b) {
    const cplx I(0.0, 1.0);
    std::fill(buf.begin(), buf.end(), cplx(0.0, 0.0));
    buf[0] = cplx(A[0].real(), B ? B[0].real() : 0.0);
    for (std::size_t k = 1; k < modes; ++k) {
        const cplx bk = B ? B[k] : cplx(0.0, 0.0);
        buf[k] = A[k] + cmul(I, bk);
        buf[N - k] = std::conj(A[k]) + cmul(I, std::conj(bk));
    }
    fft_inplace(buf, true);
    for (std::size_t n = 0; n < N; ++n) {
        a[n] = buf[n].real();
        if (b) b[n] = buf[n].imag();
    }
}

}  // namespace

Var spectral_conv1d(Var x, Var W) {
    check_same_tape(x, W);
    const Tensor& xv = x.value();
    const Tensor& wv = W.value();
    if (xv.rank() != 2) throw ShapeError("spectral_conv1d: expected (channels, N) input, got " + shape_string(xv.shape()));
    if (wv.rank() != 4 || wv.shape()[3] != 2 || wv.shape()[2] != xv.shape()[0]) {
        throw ShapeError("spectral_conv1d: weights " + shape_string(wv.shape()) + " incompatible with input " +
                         shape_string(xv.shape()));
    }
    const std::size_t cin = xv.shape()[0], N = xv.shape()[1];
    const std::size_t modes = wv.shape()[0], cout = wv.shape()[1];
    if (!is_power_of_two(N)) throw ShapeError("spectral_conv1d: grid length must be a power of two, got " + std::to_string(N));
    if (modes == 0 || 2 * modes > N) {
        throw ShapeError("spectral_conv1d: " + std::to_string(modes) + " modes too many for grid of " + std::to_string(N));
    }

    // Truncated forward spectra of every input channel, kept for the backward pass.
    auto spec = std::make_shared<std::vector<cplx>>(cin * modes);
    std::vector<cplx> buf(N);
    const double* xp = xv.data().data();
    for (std::size_t i = 0; i < cin; i += 2) {
        const bool pair = i + 1 < cin;
        real_pair_spectra(xp + i * N, pair ? xp + (i + 1) * N : nullptr, N, modes, buf, spec->data() + i * modes,
                          pair ? spec->data() + (i + 1) * modes : nullptr);
    }

    const double* wp = wv.data().data();
    auto weight = [wp, cout, cin](std::size_t k, std::size_t o, std::size_t i) {
        const std::size_t at = ((k * cout + o) * cin + i) * 2;
        return cplx(wp[at], wp[at + 1]);
    };

    std::vector<cplx> Y(cout * modes);
    for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t k = 0; k < modes; ++k) {
            cplx acc(0.0, 0.0);
            for (std::size_t i = 0; i < cin; ++i) acc += cmul(weight(k, o, i), (*spec)[i * modes + k]);
            Y[o * modes + k] = acc;
        }
    }
    Tensor out(Shape{cout, N});
    double* op = out.data().data();
    for (std::size_t o = 0; o < cout; o += 2) {
        const bool pair = o + 1 < cout;
        real_pair_inverse(Y.data() + o * modes, pair ? Y.data() + (o + 1) * modes : nullptr, N, modes, buf, op + o * N,
                          pair ? op + (o + 1) * N : nullptr);
    }

    const std::size_t ix = x.id(), iw = W.id();
    return x.tape()->record(std::move(out), "spectral_conv1d", {ix, iw}, [=](Tape& t, std::size_t self) {
        const double* g = t.grad_buffer(self).data().data();
        const double* wp = t.value(iw).data().data();
        auto weight = [wp, cout, cin](std::size_t k, std::size_t o, std::size_t i) {
            const std::size_t at = ((k * cout + o) * cin + i) * 2;
            return cplx(wp[at], wp[at + 1]);
        };
        // Complex gradient G = dL/dRe(Y) + i dL/dIm(Y) of the retained output modes.
        std::vector<cplx> G(cout * modes);
        std::vector<cplx> buf(N);
        const double invN = 1.0 / static_cast<double>(N);
        for (std::size_t o = 0; o < cout; o += 2) {
            const bool pair = o + 1 < cout;
            real_pair_spectra(g + o * N, pair ? g + (o + 1) * N : nullptr, N, modes, buf, G.data() + o * modes,
                              pair ? G.data() + (o + 1) * modes : nullptr);
        }
        for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t k = 0; k < modes; ++k) {
                cplx& v = G[o * modes + k];
                v = k == 0 ? cplx(invN * v.real(), 0.0) : 2.0 * invN * v;
            }
        }
        if (t.requires_grad(iw)) {
            double* gw = t.grad_buffer(iw).data().data();
            for (std::size_t k = 0; k < modes; ++k) {
                for (std::size_t o = 0; o < cout; ++o) {
                    const cplx go = G[o * modes + k];
                    for (std::size_t i = 0; i < cin; ++i) {
                        const cplx d = cmul(go, std::conj((*spec)[i * modes + k]));
                        const std::size_t at = ((k * cout + o) * cin + i) * 2;
                        gw[at] += d.real();
                        gw[at + 1] += d.imag();
                    }
                }
            }
        }
        if (t.requires_grad(ix)) {
            double* gx = t.grad_buffer(ix).data().data();
            const double dN = static_cast<double>(N);
            // Re(ifft(X)) for X supported on the low bins equals the inverse of its
            // Hermitian part: Re X_0 at bin 0, X_k / 2 elsewhere.
            std::vector<cplx> H(cin * modes);
            for (std::size_t i = 0; i < cin; ++i) {
                for (std::size_t k = 0; k < modes; ++k) {
                    cplx acc(0.0, 0.0);
                    for (std::size_t o = 0; o < cout; ++o) acc += cmul(std::conj(weight(k, o, i)), G[o * modes + k]);
                    H[i * modes + k] = k == 0 ? cplx(dN * acc.real(), 0.0) : 0.5 * dN * acc;
                }
            }
            std::vector<double> row(2 * N);
            for (std::size_t i = 0; i < cin; i += 2) {
                const bool pair = i + 1 < cin;
                real_pair_inverse(H.data() + i * modes, pair ? H.data() + (i + 1) * modes : nullptr, N, modes, buf,
                                  row.data(), pair ? row.data() + N : nullptr);
                for (std::size_t n = 0; n < N; ++n) gx[i * N + n] += row[n];
                if (pair) {
                    for (std::size_t n = 0; n < N; ++n) gx[(i + 1) * N + n] += row[N + n];
                }
            }
        }
    });
}

Var softmax_flat(Var logits) {
    const Tensor& zv = logits.value();
    const double zmax = *std::max_element(zv.values().begin(), zv.values().end());
    Tensor out(zv.shape());
    for (std::size_t i = 0; i < zv.size(); ++i) out[i] = std::exp(zv[i] - zmax);
    const double total = pairwise_sum(out.data());
    for (double& v : out.values()) v /= total;
    const std::size_t iz = logits.id();
    return logits.tape()->record(std::move(out), "softmax_flat", {iz}, [iz](Tape& t, std::size_t self) {
        auto g = t.grad_buffer(self).data();
        auto a = t.value(self).data();
        std::vector<double> ag(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ag[i] = a[i] * g[i];
        const double dot = pairwise_sum(ag);
        auto gz = t.grad_buffer(iz).data();
        for (std::size_t i = 0; i < g.size(); ++i) gz[i] += a[i] * (g[i] - dot);
    });
}

Var select_channels(Var x, const std::vector<std::size_t>& channels) {
    const Tensor& xv = x.value();
    if (xv.rank() < 1) throw ShapeError("select_channels on scalar");
    const std::size_t C = xv.shape()[0];
    const std::size_t P = xv.size() / C;
    for (std::size_t c : channels) {
        if (c >= C) throw ShapeError("select_channels: channel " + std::to_string(c) + " out of range for " + shape_string(xv.shape()));
    }
    Shape s = xv.shape();
    s[0] = channels.size();
    Tensor out(s);
    for (std::size_t j = 0; j < channels.size(); ++j) {
        std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(channels[j] * P), P,
                    out.data().begin() + static_cast<std::ptrdiff_t>(j * P));
    }
    const std::size_t ix = x.id();
    return x.tape()->record(std::move(out), "select_channels", {ix}, [ix, channels, P](Tape& t, std::size_t self) {
        auto g = t.grad_buffer(self).data();
        auto gx = t.grad_buffer(ix).data();
        for (std::size_t j = 0; j < channels.size(); ++j) {
            for (std::size_t p = 0; p < P; ++p) gx[channels[j] * P + p] += g[j * P + p];
        }
    });
}

Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape& first = parts[0].shape();
    if (first.empty()) throw ShapeError("concat_channels on scalar");
    Shape spatial(first.begin() + 1, first.end());
    std::size_t total = 0;
    for (const Var& v : parts) {
        check_same_tape(parts[0], v);
        const Shape& s = v.shape();
        if (s.empty() || Shape(s.begin() + 1, s.end()) != spatial) {
            throw ShapeError("concat_channels: spatial shape mismatch " + shape_string(first) + " vs " + shape_string(s));
        }
        total += s[0];
    }
    Shape out_shape = first;
    out_shape[0] = total;
    Tensor out(out_shape);
    std::vector<std::size_t> ids, offsets;
    std::size_t off = 0;
    for (const Var& v : parts) {
        std::copy(v.value().values().begin(), v.value().values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
        ids.push_back(v.id());
        offsets.push_back(off);
        off += v.value().size();
    }
    return parts[0].tape()->record(std::move(out), "concat_channels", ids, [ids, offsets](Tape& t, std::size_t self) {
        auto g = t.grad_buffer(self).data();
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (!t.requires_grad(ids[j])) continue;
            auto gp = t.grad_buffer(ids[j]).data();
            for (std::size_t p = 0; p < gp.size(); ++p) gp[p] += g[offsets[j] + p];
        }
    });
}

Var merge_channels(Var base, Var replacement, const std::vector<std::size_t>& channels) {
    check_same_tape(base, replacement);
    const Tensor& bv = base.value();
    const Tensor& rv = replacement.value();
    if (bv.rank() < 1 || rv.rank() != bv.rank() || rv.shape()[0] != channels.size() ||
        !std::equal(bv.shape().begin() + 1, bv.shape().end(), rv.shape().begin() + 1)) {
        throw ShapeError("merge_channels: incompatible shapes " + shape_string(bv.shape()) + " and " + shape_string(rv.shape()));
    }
    const std::size_t C = bv.shape()[0];
    const std::size_t P = bv.size() / C;
    std::vector<int> source(C, -1);
    for (std::size_t j = 0; j < channels.size(); ++j) {
        if (channels[j] >= C) throw ShapeError("merge_channels: channel out of range");
        source[channels[j]] = static_cast<int>(j);
    }
    Tensor out = bv;
    for (std::size_t c = 0; c < C; ++c) {
        if (source[c] >= 0) {
            std::copy_n(rv.data().begin() + static_cast<std::ptrdiff_t>(source[c]) * static_cast<std::ptrdiff_t>(P), P,
                        out.data().begin() + static_cast<std::ptrdiff_t>(c * P));
        }
    }
    const std::size_t ib = base.id(), ir = replacement.id();
    return base.tape()->record(std::move(out), "merge_channels", {ib, ir}, [=](Tape& t, std::size_t self) {
        auto g = t.grad_buffer(self).data();
        for (std::size_t c = 0; c < C; ++c) {
            const bool replaced = source[c] >= 0;
            const std::size_t target = replaced ? ir : ib;
            if (!t.requires_grad(target)) continue;
            auto gt = t.grad_buffer(target).data();
            const std::size_t dst = replaced ? static_cast<std::size_t>(source[c]) * P : c * P;
            for (std::size_t p = 0; p < P; ++p) gt[dst + p] += g[c * P + p];
        }
    });
}

Var reshape(Var x, Shape shape) {
    if (shape_size(shape) != x.value().size()) {
        throw ShapeError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
    }
    Tensor out(std::move(shape), x.value().values());
    const std::size_t ix = x.id();
    return x.tape()->record(std::move(out), "reshape", {ix}, [ix](Tape& t, std::size_t self) {
        auto g = t.grad_buffer(self).data();
        auto gx = t.grad_buffer(ix).data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var relative_l2_loss(Var pred, const Tensor& gt) {
    if (pred.value().shape() != gt.shape()) {
        throw ShapeError("relative_l2: shape mismatch " + shape_string(pred.shape()) + " vs " + shape_string(gt.shape()));
    }
    std::vector<double> sq(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) sq[i] = gt[i] * gt[i];
    const double norm = std::sqrt(pairwise_sum(sq));
    if (norm == 0.0) throw DomainError("relative_l2: ground truth is identically zero");
    Tape& t = *pred.tape();
    Var diff = sub(pred, t.constant(gt));
    return scale(sqrt(reduce_sum(square(diff))), 1.0 / norm);
}

}  // namespace conserve
