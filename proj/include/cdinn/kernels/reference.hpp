#pragma once

#include <cstdint>

#include "cdinn/kernels/dims.hpp"

// Direct-loop kernels, single-threaded. They define the semantics the
// parallel kernels are tested against and are not used on hot paths.
//
// All backward kernels accumulate (+=) into their gradient outputs.

namespace cdinn::kernels::reference {

template <typename T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y);

/// `dx` may be null when the input gradient is not needed.
template <typename T>
void conv2d_backward(const ConvDims& d, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);

/// 2x2/stride-2 max. `argmax` (nullable) receives the in-window winner as
/// 0..3 in scan order; ties go to the first.
template <typename T>
void maxpool2_forward(const PlaneDims& d, const T* x, T* y, std::uint8_t* argmax);

template <typename T>
void maxpool2_backward(const PlaneDims& d, const T* dy, const std::uint8_t* argmax, T* dx);

/// Nearest-neighbour 2x. `d` describes the input planes.
template <typename T>
void upsample2_forward(const PlaneDims& d, const T* x, T* y);

template <typename T>
void upsample2_backward(const PlaneDims& d, const T* dy, T* dx);

}  // namespace cdinn::kernels::reference
