#include "cdinn/fft.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "cdinn/error.hpp"

namespace cdinn {
namespace {

// Iterative radix-2 plan for one length.
struct Plan {
  int n = 0;
  std::vector<int> reversed;
  std::vector<Complex> twiddles;  // exp(-2 pi i k / n), k < n/2

  explicit Plan(int size) : n(size), reversed(size), twiddles(size / 2) {
    int bits = 0;
    while ((1 << bits) < n) ++bits;
    for (int i = 0; i < n; ++i) {
      int r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
      reversed[i] = r;
    }
    for (int k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * k / n;
      twiddles[k] = {std::cos(angle), std::sin(angle)};
    }
  }

  // Strided 1D transform; `inverse` conjugates the twiddles, no scaling.
  void run(Complex* data, std::ptrdiff_t stride, bool inverse) const {
    for (int i = 0; i < n; ++i) {
      const int j = reversed[i];
      if (i < j) std::swap(data[i * stride], data[j * stride]);
    }
    for (int len = 2; len <= n; len <<= 1) {
      const int half = len / 2;
      const int step = n / len;
      for (int start = 0; start < n; start += len) {
        for (int k = 0; k < half; ++k) {
          Complex w = twiddles[k * step];
          if (inverse) w = std::conj(w);
          Complex& a = data[(start + k) * stride];
          Complex& b = data[(start + k + half) * stride];
          const Complex t = w * b;
          b = a - t;
          a += t;
        }
      }
    }
  }
};

const Plan& plan_for(int n) {
  thread_local std::vector<std::unique_ptr<Plan>> cache;
  for (const auto& p : cache)
    if (p->n == n) return *p;
  cache.push_back(std::make_unique<Plan>(n));
  return *cache.back();
}

// Multiplying by (-1)^(row+col) before and after an ordinary DFT moves both
// origins to n/2. The residual constant exp(-i pi n/2) per axis squares to 1.
void checkerboard(std::span<Complex> data, int n) {
  for (int r = 0; r < n; ++r)
    for (int c = (r & 1) ? 0 : 1; c < n; c += 2) data[static_cast<std::size_t>(r) * n + c] = -data[static_cast<std::size_t>(r) * n + c];
}

}  // namespace

void fft2_centered_inplace(std::span<Complex> data, int n, FftDirection direction) {
  if (!is_fft_size(n))
    throw InvalidArgument("fft2_centered: side " + std::to_string(n) + " is not a power of two >= 2");
  if (data.size() != static_cast<std::size_t>(n) * n)
    throw InvalidArgument("fft2_centered: buffer size does not match side");

  const Plan& plan = plan_for(n);
  const bool inverse = direction == FftDirection::inverse;
  checkerboard(data, n);
  for (int r = 0; r < n; ++r) plan.run(data.data() + static_cast<std::ptrdiff_t>(r) * n, 1, inverse);
  for (int c = 0; c < n; ++c) plan.run(data.data() + c, n, inverse);
  checkerboard(data, n);
  if (inverse) {
    const double scale = 1.0 / (static_cast<double>(n) * n);
    for (auto& v : data) v *= scale;
  }
}

ComplexField fft2_centered(const ComplexField& field, FftDirection direction) {
  ComplexField out = field;
  fft2_centered_inplace(out.values(), out.side(), direction);
  return out;
}

}  // namespace cdinn
