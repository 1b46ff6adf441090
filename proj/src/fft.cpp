#include "conserve/fft.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "conserve/error.hpp"

namespace conserve {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

// w_k = exp(-2 pi i k / n), k < n/2, evaluated directly per entry.
const std::vector<cplx>& twiddles(std::size_t n) {
    thread_local std::unordered_map<std::size_t, std::vector<cplx>> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<cplx> w(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        w[k] = cplx(std::cos(a), std::sin(a));
    }
    return cache.emplace(n, std::move(w)).first->second;
}

}  // namespace

void fft_inplace(std::span<cplx> data, bool inverse) {
    const std::size_t n = data.size();
    if (!is_power_of_two(n)) {
        throw ShapeError("fft length must be a power of two, got " + std::to_string(n));
    }
    if (n == 1) return;

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }

    const auto& w = twiddles(n);
    const double sign = inverse ? -1.0 : 1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            cplx* lo = data.data() + start;
            cplx* hi = lo + half;
            for (std::size_t k = 0; k < half; ++k) {
                const cplx t(w[k * stride].real(), sign * w[k * stride].imag());
                const cplx u = lo[k];
                const cplx v = cmul(hi[k], t);
                lo[k] = u + v;
                hi[k] = u - v;
            }
        }
    }

    if (inverse) {
        const double s = 1.0 / static_cast<double>(n);
        for (auto& z : data) z *= s;
    }
}

namespace {

ComplexField transform(const ComplexField& x, bool inverse) {
    if (x.dims.size() != 1) throw ShapeError("fft_1d expects a 1D field, got " + shape_string(x.dims));
    std::vector<cplx> buf(x.points());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = cplx(x.re[i], x.im[i]);
    fft_inplace(buf, inverse);
    ComplexField out(x.dims);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out.re[i] = buf[i].real();
        out.im[i] = buf[i].imag();
    }
    return out;
}

}  // namespace

ComplexField fft_1d(const ComplexField& x) { return transform(x, false); }
ComplexField ifft_1d(const ComplexField& x) { return transform(x, true); }

}  // namespace conserve
