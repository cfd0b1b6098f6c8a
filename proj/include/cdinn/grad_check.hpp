#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cdinn/autograd.hpp"

namespace cdinn::ag {

struct GradCheckOptions {
  double h = 1e-5;
  // On a branch change the step shrinks tenfold down to this value before
  // the coordinate is given up.
  double min_h = 1e-6;
  std::size_t min_coords = 64;  // all coordinates when fewer exist
  std::uint64_t seed = 0;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // gradients that are zero up to rounding from dominating.
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  std::size_t skipped = 0;  // coordinates whose +-h probes changed a discrete branch
};

/// Central differences against backward. `build` must construct a fresh
/// 64-bit graph from the current values of `probes` and return a scalar.
/// When the probes land on a different branch (a ReLU flips, a pooling
/// winner changes) the step is reduced; coordinates where even min_h
/// straddles a kink are skipped and replaced by further random coordinates.
GradCheckResult grad_check(const std::function<Tensor<double>(Graph<double>&)>& build,
                           const std::vector<Parameter<double>*>& probes, const GradCheckOptions& options = {});

}  // namespace cdinn::ag
