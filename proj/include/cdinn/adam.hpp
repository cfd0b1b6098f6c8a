#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cdinn/autograd.hpp"
#include "cdinn/error.hpp"

namespace cdinn::ag {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments per parameter plus the shared step counter.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t t = 0;
};

/// One bias-corrected ADAM update of every parameter from its `grad`.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.size(), T{0});
      state.v.emplace_back(p->value.size(), T{0});
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("adam_step: parameter list changed between steps");

  ++state.t;
  const auto& c = state.config;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T step = static_cast<T>(c.lr / correction1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
  const T eps = static_cast<T>(c.eps);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (p.grad.size() != p.value.size() || m.size() != p.value.size())
      throw InvalidArgument("adam_step: shape mismatch for parameter " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      // lr * m_hat / (sqrt(v_hat) + eps)
      p.value[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

}  // namespace cdinn::ag
