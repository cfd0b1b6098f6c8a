#include "cdinn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "cdinn/error.hpp"
#include "cdinn/rng.hpp"

namespace cdinn::ag {

GradCheckResult grad_check(const std::function<Tensor<double>(Graph<double>&)>& build,
                           const std::vector<Parameter<double>*>& probes, const GradCheckOptions& options) {
  if (!(options.h >= 1e-6 && options.h <= 1e-4)) throw InvalidArgument("grad_check: h must lie in [1e-6, 1e-4]");
  if (!(options.min_h >= 1e-6 && options.min_h <= options.h))
    throw InvalidArgument("grad_check: min_h must lie in [1e-6, h]");

  std::vector<std::vector<double>> analytic;
  std::uint64_t signature = 0;
  {
    Graph<double> g;
    auto loss = build(g);
    g.backward(loss);
    signature = g.branch_signature();
    for (auto* p : probes) analytic.push_back(p->grad);
  }

  // (probe, index) pairs in random order; visited until enough usable ones.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < probes.size(); ++k)
    for (std::size_t i = 0; i < probes[k]->value.size(); ++i) coords.emplace_back(k, i);
  Rng rng(options.seed);
  rng.shuffle(std::span(coords));

  auto eval = [&](std::uint64_t& sig) {
    Graph<double> g;
    const double v = build(g).item();
    sig = g.branch_signature();
    return v;
  };

  GradCheckResult result;
  for (auto [k, i] : coords) {
    if (result.coords >= options.min_coords) break;
    double& x = probes[k]->value[i];
    const double saved = x;
    std::optional<double> numeric;
    for (double h = options.h; h >= options.min_h * (1 - 1e-9) && !numeric; h /= 10.0) {
      std::uint64_t sig_up = 0, sig_down = 0;
      x = saved + h;
      const double up = eval(sig_up);
      x = saved - h;
      const double down = eval(sig_down);
      x = saved;
      if (sig_up == signature && sig_down == signature) numeric = (up - down) / (2.0 * h);
    }
    if (!numeric) {
      ++result.skipped;
      continue;
    }
    const double a = analytic[k][i];
    const double denom = std::max({std::abs(a), std::abs(*numeric), options.floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(a - *numeric) / denom);
    ++result.coords;
  }
  return result;
}

}  // namespace cdinn::ag
