#pragma once

#include <cstdint>

#include "cdinn/kernels/dims.hpp"

// OpenMP + Eigen kernels with the same contracts as kernels::reference.
//
// Convolutions run im2col + GEMM per sample, parallel over the batch. Weight
// and bias gradients are summed in fixed groups of kReductionGroup samples
// and the group partials are reduced in group order, so results do not
// depend on the thread count.

namespace cdinn::kernels::parallel {

inline constexpr int kReductionGroup = 8;

template <typename T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y);

template <typename T>
void conv2d_backward(const ConvDims& d, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);

template <typename T>
void maxpool2_forward(const PlaneDims& d, const T* x, T* y, std::uint8_t* argmax);

template <typename T>
void maxpool2_backward(const PlaneDims& d, const T* dy, const std::uint8_t* argmax, T* dx);

template <typename T>
void upsample2_forward(const PlaneDims& d, const T* x, T* y);

template <typename T>
void upsample2_backward(const PlaneDims& d, const T* dy, T* dx);

}  // namespace cdinn::kernels::parallel
