#pragma once

#include <cstddef>
#include <cstdint>

namespace cdinn::kernels {

/// Geometry of a stride-1, zero "same"-padded convolution over NCHW data.
struct ConvDims {
  int batch = 1;
  int in_channels = 1;
  int out_channels = 1;
  int height = 1;
  int width = 1;
  int kernel = 3;  // odd

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t input_size() const noexcept { return batch * in_channels * plane(); }
  std::size_t output_size() const noexcept { return batch * out_channels * plane(); }
  std::size_t weight_size() const noexcept {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

/// `planes` independent H x W images (N*C for NCHW data).
struct PlaneDims {
  int planes = 1;
  int height = 2;
  int width = 2;

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
};

}  // namespace cdinn::kernels
