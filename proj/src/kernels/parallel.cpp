#include "cdinn/kernels/parallel.hpp"

#include <algorithm>
#include <vector>

#include <Eigen/Core>

namespace cdinn::kernels::parallel {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
// Eigen picks vector or scalar code paths by address, which changes the
// rounding. Everything handed to Eigen lives in 64-byte aligned scratch so
// results do not depend on where the caller's buffers happen to sit.
template <typename T>
using Scratch = std::vector<T, Eigen::aligned_allocator<T>>;

// One sample [C, H, W] -> [C*K*K, H*W] patch matrix, zero padded.
template <typename T>
void im2col(const ConvDims& d, const T* x, T* col) {
  const int pad = d.kernel / 2;
  const std::size_t hw = d.plane();
  for (int ci = 0; ci < d.in_channels; ++ci)
    for (int ky = 0; ky < d.kernel; ++ky)
      for (int kx = 0; kx < d.kernel; ++kx) {
        T* dst = col + ((static_cast<std::size_t>(ci) * d.kernel + ky) * d.kernel + kx) * hw;
        const T* src = x + ci * hw;
        const int x_lo = std::max(0, pad - kx), x_hi = std::min(d.width, d.width + pad - kx);
        for (int oy = 0; oy < d.height; ++oy) {
          T* row = dst + static_cast<std::size_t>(oy) * d.width;
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= d.height) {
            std::fill(row, row + d.width, T{0});
            continue;
          }
          const T* in_row = src + static_cast<std::size_t>(iy) * d.width;
          std::fill(row, row + x_lo, T{0});
          for (int ox = x_lo; ox < x_hi; ++ox) row[ox] = in_row[ox + kx - pad];
          std::fill(row + x_hi, row + d.width, T{0});
        }
      }
}

// Transpose of im2col, accumulating into dx.
template <typename T>
void col2im_add(const ConvDims& d, const T* col, T* dx) {
  const int pad = d.kernel / 2;
  const std::size_t hw = d.plane();
  for (int ci = 0; ci < d.in_channels; ++ci)
    for (int ky = 0; ky < d.kernel; ++ky)
      for (int kx = 0; kx < d.kernel; ++kx) {
        const T* src = col + ((static_cast<std::size_t>(ci) * d.kernel + ky) * d.kernel + kx) * hw;
        T* dst = dx + ci * hw;
        const int x_lo = std::max(0, pad - kx), x_hi = std::min(d.width, d.width + pad - kx);
        for (int oy = 0; oy < d.height; ++oy) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= d.height) continue;
          const T* row = src + static_cast<std::size_t>(oy) * d.width;
          T* out_row = dst + static_cast<std::size_t>(iy) * d.width;
          for (int ox = x_lo; ox < x_hi; ++ox) out_row[ox + kx - pad] += row[ox];
        }
      }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  const auto hw = static_cast<Eigen::Index>(d.plane());
  const auto patch = static_cast<Eigen::Index>(d.in_channels) * d.kernel * d.kernel;
  const Scratch<T> wcopy(w, w + d.weight_size());
  const ConstMatMap<T> weights(wcopy.data(), d.out_channels, patch);
#pragma omp parallel
  {
    Scratch<T> col(static_cast<std::size_t>(patch * hw));
    Scratch<T> res(static_cast<std::size_t>(d.out_channels * hw));
#pragma omp for schedule(static)
    for (int n = 0; n < d.batch; ++n) {
      im2col(d, x + n * d.in_channels * d.plane(), col.data());
      MatMap<T>(res.data(), d.out_channels, hw).noalias() = weights * ConstMatMap<T>(col.data(), patch, hw);
      T* out = y + n * d.out_channels * d.plane();
      for (int co = 0; co < d.out_channels; ++co) {
        const T bias = b ? b[co] : T{0};
        for (Eigen::Index i = 0; i < hw; ++i) out[co * hw + i] = res[co * hw + i] + bias;
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvDims& d, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
  const auto hw = static_cast<Eigen::Index>(d.plane());
  const auto patch = static_cast<Eigen::Index>(d.in_channels) * d.kernel * d.kernel;
  const Scratch<T> wcopy(w, w + d.weight_size());
  const ConstMatMap<T> weights(wcopy.data(), d.out_channels, patch);
  const int groups = (d.batch + kReductionGroup - 1) / kReductionGroup;
  const std::size_t wsize = d.weight_size();
  std::vector<Scratch<T>> dw_part(dw ? groups : 0, Scratch<T>(wsize, T{0}));
  std::vector<T> db_part(db ? static_cast<std::size_t>(groups) * d.out_channels : 0, T{0});

#pragma omp parallel
  {
    Scratch<T> col(static_cast<std::size_t>(patch * hw));
    Scratch<T> dcol(dx ? col.size() : 0);
    Scratch<T> gout(static_cast<std::size_t>(d.out_channels * hw));
#pragma omp for schedule(static)
    for (int g = 0; g < groups; ++g) {
      const int first = g * kReductionGroup, last = std::min(d.batch, first + kReductionGroup);
      for (int n = first; n < last; ++n) {
        const T* dy_n = dy + n * d.out_channels * d.plane();
        std::copy(dy_n, dy_n + gout.size(), gout.begin());
        const ConstMatMap<T> grad_out(gout.data(), d.out_channels, hw);
        if (dw || dx) im2col(d, x + n * d.in_channels * d.plane(), col.data());
        if (dw) {
          MatMap<T> part(dw_part[g].data(), d.out_channels, patch);
          part.noalias() += grad_out * ConstMatMap<T>(col.data(), patch, hw).transpose();
        }
        if (db)
          for (int co = 0; co < d.out_channels; ++co) {
            T acc{0};
            for (Eigen::Index i = 0; i < hw; ++i) acc += gout[co * hw + i];
            db_part[g * d.out_channels + co] += acc;
          }
        if (dx) {
          MatMap<T>(dcol.data(), patch, hw).noalias() = weights.transpose() * grad_out;
          col2im_add(d, dcol.data(), dx + n * d.in_channels * d.plane());
        }
      }
    }
  }

  for (int g = 0; g < groups; ++g) {
    if (dw)
      for (std::size_t i = 0; i < wsize; ++i) dw[i] += dw_part[g][i];
    if (db)
      for (int co = 0; co < d.out_channels; ++co) db[co] += db_part[g * d.out_channels + co];
  }
}

template <typename T>
void maxpool2_forward(const PlaneDims& d, const T* x, T* y, std::uint8_t* argmax) {
  const int oh = d.height / 2, ow = d.width / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.planes; ++p) {
    const T* src = x + p * d.plane();
    for (int oy = 0; oy < oh; ++oy) {
      const T* r0 = src + static_cast<std::size_t>(2 * oy) * d.width;
      const T* r1 = r0 + d.width;
      const auto o_row = (static_cast<std::size_t>(p) * oh + oy) * ow;
      for (int ox = 0; ox < ow; ++ox) {
        T best = r0[2 * ox];
        std::uint8_t at = 0;
        if (r0[2 * ox + 1] > best) best = r0[2 * ox + 1], at = 1;
        if (r1[2 * ox] > best) best = r1[2 * ox], at = 2;
        if (r1[2 * ox + 1] > best) best = r1[2 * ox + 1], at = 3;
        y[o_row + ox] = best;
        if (argmax) argmax[o_row + ox] = at;
      }
    }
  }
}

template <typename T>
void maxpool2_backward(const PlaneDims& d, const T* dy, const std::uint8_t* argmax, T* dx) {
  const int oh = d.height / 2, ow = d.width / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.planes; ++p)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const auto o = (static_cast<std::size_t>(p) * oh + oy) * ow + ox;
        const int k = argmax[o];
        dx[p * d.plane() + static_cast<std::size_t>(2 * oy + k / 2) * d.width + 2 * ox + k % 2] += dy[o];
      }
}

template <typename T>
void upsample2_forward(const PlaneDims& d, const T* x, T* y) {
  const int ow = 2 * d.width;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.planes; ++p)
    for (int iy = 0; iy < d.height; ++iy) {
      const T* src = x + p * d.plane() + static_cast<std::size_t>(iy) * d.width;
      T* top = y + 4 * p * d.plane() + static_cast<std::size_t>(2 * iy) * ow;
      T* bottom = top + ow;
      for (int ix = 0; ix < d.width; ++ix) {
        top[2 * ix] = top[2 * ix + 1] = src[ix];
        bottom[2 * ix] = bottom[2 * ix + 1] = src[ix];
      }
    }
}

template <typename T>
void upsample2_backward(const PlaneDims& d, const T* dy, T* dx) {
  const int ow = 2 * d.width;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.planes; ++p)
    for (int iy = 0; iy < d.height; ++iy) {
      T* dst = dx + p * d.plane() + static_cast<std::size_t>(iy) * d.width;
      const T* top = dy + 4 * p * d.plane() + static_cast<std::size_t>(2 * iy) * ow;
      const T* bottom = top + ow;
      for (int ix = 0; ix < d.width; ++ix)
        dst[ix] += (top[2 * ix] + top[2 * ix + 1]) + (bottom[2 * ix] + bottom[2 * ix + 1]);
    }
}

#define CDINN_INSTANTIATE(T)                                                                       \
  template void conv2d_forward<T>(const ConvDims&, const T*, const T*, const T*, T*);               \
  template void conv2d_backward<T>(const ConvDims&, const T*, const T*, const T*, T*, T*, T*);      \
  template void maxpool2_forward<T>(const PlaneDims&, const T*, T*, std::uint8_t*);                 \
  template void maxpool2_backward<T>(const PlaneDims&, const T*, const std::uint8_t*, T*);          \
  template void upsample2_forward<T>(const PlaneDims&, const T*, T*);                               \
  template void upsample2_backward<T>(const PlaneDims&, const T*, T*);

CDINN_INSTANTIATE(float)
CDINN_INSTANTIATE(double)
#undef CDINN_INSTANTIATE

}  // namespace cdinn::kernels::parallel
