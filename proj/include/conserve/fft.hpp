#pragma once

#include <complex>
#include <cstddef>
#include <span>

#include "conserve/tensor.hpp"

namespace conserve {

using cplx = std::complex<double>;

bool is_power_of_two(std::size_t n);

/// Complex product without the inf/nan recovery of operator*, which
/// otherwise goes through a slow library call.
inline cplx cmul(cplx a, cplx b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

/// In-place iterative radix-2 transform. Forward is unnormalized
/// (X_k = sum_n x_n e^{-2 pi i k n / N}); inverse applies 1/N.
/// Throws ShapeError unless data.size() is a power of two.
void fft_inplace(std::span<cplx> data, bool inverse);

ComplexField fft_1d(const ComplexField& x);
ComplexField ifft_1d(const ComplexField& x);

}  // namespace conserve
