#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "cdinn/grid.hpp"
#include "cdinn/rng.hpp"

namespace cdinn::fields {

/// Real-valued object magnitude in [0,1] with its thresholded support.
struct ShapeField {
  RealGrid grid;
  Mask support;  // grid > support threshold
};

/// Phase in radians; zero outside the associated support.
struct PhaseField {
  RealGrid grid;
};

/// |FT| of a ComplexField, DC at the grid center.
struct DiffractionPattern {
  RealGrid amplitudes;
};

struct Point {
  int row = 0;
  int col = 0;
  bool operator==(const Point&) const = default;
};

/// Parameters of the random convex object.
struct ObjectParams {
  int grid_n = 32;
  int min_points = 5;
  int max_points = 15;
  int window = 24;        // points scattered in a centered window x window square
  double min_area = 12.0; // shoelace area floor, pixel^2
  int max_retries = 64;
};

/// A rasterized convex hull together with the points that generated it.
struct ConvexObject {
  ShapeField shape;
  std::vector<Point> points;
  std::vector<Point> hull;  // counter-clockwise, no collinear vertices
  double area = 0.0;
  int attempts = 1;  // draws consumed by the area-floor rejection loop
};

/// Convex hull by monotone chain; collinear points are dropped.
std::vector<Point> convex_hull(std::vector<Point> points);

/// Twice the signed shoelace area of a closed polygon.
std::int64_t twice_area(const std::vector<Point>& polygon);

/// Inclusive containment of (row, col) in a counter-clockwise convex polygon.
bool hull_contains(const std::vector<Point>& hull, double row, double col);

ConvexObject random_convex_object(Rng& rng, const ObjectParams& params);
ConvexObject random_convex_object(std::uint64_t seed, const ObjectParams& params = {});

/// Normalized Gaussian taps for offsets 0..ceil(3 sigma), center tap first.
/// The full symmetric kernel (both sides) sums to one.
std::vector<double> gaussian_taps(double sigma);

/// Separable Gaussian blur. Out-of-grid samples are treated as absent and the
/// kernel is renormalized over the in-grid taps, so constants are preserved.
RealGrid gaussian_blur(const RealGrid& field, double sigma);

Mask threshold_mask(const RealGrid& field, double threshold);

/// White noise, smoothed, rescaled to [-phi_max, +phi_max], zeroed off support.
PhaseField random_phase_field(Rng& rng, const ShapeField& support, double phi_max,
                              double smooth_sigma);
PhaseField random_phase_field(std::uint64_t seed, const ShapeField& support, double phi_max,
                              double smooth_sigma);

/// shape * exp(i phase).
ComplexField assemble_object(const ShapeField& shape, const PhaseField& phase);
ComplexField assemble_object(const RealGrid& magnitude, const RealGrid& phase);

DiffractionPattern diffraction_amplitudes(const ComplexField& object);

/// Sum of squares of a real grid / squared moduli of a complex one.
double energy(const RealGrid& grid);
double energy(const ComplexField& field);

/// Radians in [-pi, pi] to sigmoid targets in [0, 1] and back.
constexpr double phase_to_target(double phase) noexcept {
  return (phase + std::numbers::pi) / (2.0 * std::numbers::pi);
}
constexpr double target_to_phase(double target) noexcept {
  return target * 2.0 * std::numbers::pi - std::numbers::pi;
}

}  // namespace cdinn::fields
