#include "cdinn/fields.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cdinn/error.hpp"
#include "cdinn/fft.hpp"

namespace cdinn::fields {
namespace {

std::int64_t cross(const Point& o, const Point& a, const Point& b) {
  return static_cast<std::int64_t>(a.col - o.col) * (b.row - o.row) -
         static_cast<std::int64_t>(a.row - o.row) * (b.col - o.col);
}

void validate(const ObjectParams& p) {
  if (p.grid_n < 8) throw InvalidArgument("random_convex_object: grid_n must be >= 8");
  if (p.min_points < 3)
    throw InvalidArgument("random_convex_object: point count range must start at >= 3");
  if (p.max_points < p.min_points || p.max_points > p.grid_n * p.grid_n)
    throw InvalidArgument("random_convex_object: invalid point count range");
  if (p.window < 2 || p.window > p.grid_n)
    throw InvalidArgument("random_convex_object: window must lie in [2, grid_n]");
  if (p.max_retries < 1) throw InvalidArgument("random_convex_object: max_retries must be >= 1");
}

}  // namespace

std::vector<Point> convex_hull(std::vector<Point> points) {
  std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;

  std::vector<Point> hull(2 * points.size());
  std::size_t k = 0;
  for (const auto& p : points) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  return hull;
}

std::int64_t twice_area(const std::vector<Point>& polygon) {
  if (polygon.size() < 3) return 0;
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % polygon.size()];
    acc += static_cast<std::int64_t>(a.col) * b.row - static_cast<std::int64_t>(b.col) * a.row;
  }
  return acc < 0 ? -acc : acc;
}

bool hull_contains(const std::vector<Point>& hull, double row, double col) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point& a = hull[i];
    const Point& b = hull[(i + 1) % hull.size()];
    const double c = (b.col - a.col) * (row - a.row) - (b.row - a.row) * (col - a.col);
    if (c < 0.0) return false;
  }
  return true;
}

ConvexObject random_convex_object(Rng& rng, const ObjectParams& params) {
  validate(params);
  const int offset = (params.grid_n - params.window) / 2;
  for (int attempt = 1; attempt <= params.max_retries; ++attempt) {
    const auto count = static_cast<int>(rng.uniform_int(params.min_points, params.max_points));
    std::vector<Point> points(count);
    for (auto& p : points) {
      p.row = offset + static_cast<int>(rng.uniform_int(0, params.window - 1));
      p.col = offset + static_cast<int>(rng.uniform_int(0, params.window - 1));
    }
    auto hull = convex_hull(points);
    const std::int64_t area2 = twice_area(hull);
    if (static_cast<double>(area2) < 2.0 * params.min_area) continue;

    ConvexObject obj;
    obj.shape.grid = RealGrid(params.grid_n);
    obj.shape.support = Mask(params.grid_n);
    for (int r = 0; r < params.grid_n; ++r)
      for (int c = 0; c < params.grid_n; ++c)
        if (hull_contains(hull, r, c)) {
          obj.shape.grid(r, c) = 1.0;
          obj.shape.support(r, c) = 1;
        }
    obj.points = std::move(points);
    obj.hull = std::move(hull);
    obj.area = 0.5 * static_cast<double>(area2);
    obj.attempts = attempt;
    return obj;
  }
  throw std::runtime_error("random_convex_object: no hull above the area floor after " +
                           std::to_string(params.max_retries) + " attempts");
}

ConvexObject random_convex_object(std::uint64_t seed, const ObjectParams& params) {
  Rng rng(seed);
  return random_convex_object(rng, params);
}

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian_blur: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(radius + 1);
  double total = 0.0;
  for (int d = 0; d <= radius; ++d) {
    taps[d] = std::exp(-0.5 * d * d / (sigma * sigma));
    total += d == 0 ? taps[d] : 2.0 * taps[d];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

RealGrid gaussian_blur(const RealGrid& field, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size()) - 1;
  const int n = field.side();

  auto pass = [&](const RealGrid& in, bool along_rows) {
    RealGrid out(n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        double acc = 0.0, weight = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          const int rr = along_rows ? r : r + d;
          const int cc = along_rows ? c + d : c;
          if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
          const double w = taps[static_cast<std::size_t>(std::abs(d))];
          acc += w * in(rr, cc);
          weight += w;
        }
        out(r, c) = acc / weight;
      }
    return out;
  };
  return pass(pass(field, true), false);
}

Mask threshold_mask(const RealGrid& field, double threshold) {
  Mask m(field.side());
  for (std::size_t i = 0; i < field.size(); ++i) m[i] = field[i] > threshold ? 1 : 0;
  return m;
}

PhaseField random_phase_field(Rng& rng, const ShapeField& support, double phi_max,
                              double smooth_sigma) {
  if (!(phi_max > 0.0) || phi_max > std::numbers::pi)
    throw InvalidArgument("random_phase_field: phi_max must lie in (0, pi]");
  if (!(smooth_sigma >= 0.0)) throw InvalidArgument("random_phase_field: smooth_sigma must be >= 0");

  const int n = support.grid.side();
  RealGrid noise(n);
  for (auto& v : noise.values()) v = rng.normal();
  if (smooth_sigma > 0.0) noise = gaussian_blur(noise, smooth_sigma);

  const auto [lo, hi] = std::minmax_element(noise.values().begin(), noise.values().end());
  const double lo_v = *lo, span = *hi - *lo;
  PhaseField phase{RealGrid(n)};
  for (std::size_t i = 0; i < noise.size(); ++i) {
    if (!support.support[i] || span <= 0.0) continue;
    const double v = -phi_max + 2.0 * phi_max * (noise[i] - lo_v) / span;
    phase.grid[i] = std::clamp(v, -phi_max, phi_max);
  }
  return phase;
}

PhaseField random_phase_field(std::uint64_t seed, const ShapeField& support, double phi_max,
                              double smooth_sigma) {
  Rng rng(seed);
  return random_phase_field(rng, support, phi_max, smooth_sigma);
}

ComplexField assemble_object(const RealGrid& magnitude, const RealGrid& phase) {
  if (magnitude.side() != phase.side())
    throw InvalidArgument("assemble_object: shape and phase grids differ in size");
  ComplexField out(magnitude.side());
  for (std::size_t i = 0; i < magnitude.size(); ++i)
    out[i] = {magnitude[i] * std::cos(phase[i]), magnitude[i] * std::sin(phase[i])};
  return out;
}

ComplexField assemble_object(const ShapeField& shape, const PhaseField& phase) {
  return assemble_object(shape.grid, phase.grid);
}

DiffractionPattern diffraction_amplitudes(const ComplexField& object) {
  const ComplexField spectrum = fft2_centered(object, FftDirection::forward);
  DiffractionPattern out{RealGrid(object.side())};
  for (std::size_t i = 0; i < spectrum.size(); ++i) out.amplitudes[i] = std::abs(spectrum[i]);
  return out;
}

double energy(const RealGrid& grid) {
  double acc = 0.0;
  for (double v : grid.values()) acc += v * v;
  return acc;
}

double energy(const ComplexField& field) {
  double acc = 0.0;
  for (const auto& v : field.values()) acc += std::norm(v);
  return acc;
}

}  // namespace cdinn::fields
