#include "cdinn/kernels/reference.hpp"

namespace cdinn::kernels::reference {

template <typename T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  const int pad = d.kernel / 2;
  for (int n = 0; n < d.batch; ++n)
    for (int co = 0; co < d.out_channels; ++co)
      for (int oy = 0; oy < d.height; ++oy)
        for (int ox = 0; ox < d.width; ++ox) {
          T acc = b ? b[co] : T{0};
          for (int ci = 0; ci < d.in_channels; ++ci)
            for (int ky = 0; ky < d.kernel; ++ky) {
              const int iy = oy + ky - pad;
              if (iy < 0 || iy >= d.height) continue;
              for (int kx = 0; kx < d.kernel; ++kx) {
                const int ix = ox + kx - pad;
                if (ix < 0 || ix >= d.width) continue;
                acc += w[((co * d.in_channels + ci) * d.kernel + ky) * d.kernel + kx] *
                       x[((n * d.in_channels + ci) * d.height + iy) * d.width + ix];
              }
            }
          y[((n * d.out_channels + co) * d.height + oy) * d.width + ox] = acc;
        }
}

template <typename T>
void conv2d_backward(const ConvDims& d, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
  const int pad = d.kernel / 2;
  for (int n = 0; n < d.batch; ++n)
    for (int co = 0; co < d.out_channels; ++co)
      for (int oy = 0; oy < d.height; ++oy)
        for (int ox = 0; ox < d.width; ++ox) {
          const T g = dy[((n * d.out_channels + co) * d.height + oy) * d.width + ox];
          if (db) db[co] += g;
          for (int ci = 0; ci < d.in_channels; ++ci)
            for (int ky = 0; ky < d.kernel; ++ky) {
              const int iy = oy + ky - pad;
              if (iy < 0 || iy >= d.height) continue;
              for (int kx = 0; kx < d.kernel; ++kx) {
                const int ix = ox + kx - pad;
                if (ix < 0 || ix >= d.width) continue;
                const auto wi = ((co * d.in_channels + ci) * d.kernel + ky) * d.kernel + kx;
                const auto xi = ((n * d.in_channels + ci) * d.height + iy) * d.width + ix;
                if (dw) dw[wi] += g * x[xi];
                if (dx) dx[xi] += g * w[wi];
              }
            }
        }
}

template <typename T>
void maxpool2_forward(const PlaneDims& d, const T* x, T* y, std::uint8_t* argmax) {
  const int oh = d.height / 2, ow = d.width / 2;
  for (int p = 0; p < d.planes; ++p)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const T* base = x + (static_cast<std::size_t>(p) * d.height + 2 * oy) * d.width + 2 * ox;
        const T window[4] = {base[0], base[1], base[d.width], base[d.width + 1]};
        std::uint8_t best = 0;
        for (std::uint8_t k = 1; k < 4; ++k)
          if (window[k] > window[best]) best = k;
        const auto o = (static_cast<std::size_t>(p) * oh + oy) * ow + ox;
        y[o] = window[best];
        if (argmax) argmax[o] = best;
      }
}

template <typename T>
void maxpool2_backward(const PlaneDims& d, const T* dy, const std::uint8_t* argmax, T* dx) {
  const int oh = d.height / 2, ow = d.width / 2;
  for (int p = 0; p < d.planes; ++p)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const auto o = (static_cast<std::size_t>(p) * oh + oy) * ow + ox;
        const int k = argmax[o];
        dx[(static_cast<std::size_t>(p) * d.height + 2 * oy + k / 2) * d.width + 2 * ox + k % 2] += dy[o];
      }
}

template <typename T>
void upsample2_forward(const PlaneDims& d, const T* x, T* y) {
  const int oh = 2 * d.height, ow = 2 * d.width;
  for (int p = 0; p < d.planes; ++p)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        y[(static_cast<std::size_t>(p) * oh + oy) * ow + ox] =
            x[(static_cast<std::size_t>(p) * d.height + oy / 2) * d.width + ox / 2];
}

template <typename T>
void upsample2_backward(const PlaneDims& d, const T* dy, T* dx) {
  const int oh = 2 * d.height, ow = 2 * d.width;
  for (int p = 0; p < d.planes; ++p)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        dx[(static_cast<std::size_t>(p) * d.height + oy / 2) * d.width + ox / 2] +=
            dy[(static_cast<std::size_t>(p) * oh + oy) * ow + ox];
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

}  // namespace cdinn::kernels::reference
