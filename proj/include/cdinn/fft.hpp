#pragma once

#include <span>

#include "cdinn/grid.hpp"

namespace cdinn {

enum class FftDirection { forward, inverse };

/// True when `n` is a power of two no smaller than 2.
constexpr bool is_fft_size(int n) noexcept { return n >= 2 && (n & (n - 1)) == 0; }

/// Centered 2D DFT. The zero frequency (and the real-space origin) sits at
/// (N/2, N/2). Forward is unnormalized, inverse divides by N^2:
///
///   F(k) = sum_x f(x) exp(-2 pi i (k - N/2).(x - N/2) / N)
///
/// Throws InvalidArgument unless the side is a power of two.
ComplexField fft2_centered(const ComplexField& field, FftDirection direction);

/// In-place variant over a row-major n*n buffer, for hot loops.
void fft2_centered_inplace(std::span<Complex> data, int n, FftDirection direction);

}  // namespace cdinn
