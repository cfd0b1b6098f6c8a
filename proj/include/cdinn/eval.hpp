#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdinn/fields.hpp"
#include "cdinn/model.hpp"

namespace cdinn::eval {

/// Normalized amplitude mismatch
///   chi2 = sum (sqrt(I_p) - sqrt(I_t))^2 / sum I_t
/// with I = |FT|^2, i.e. sqrt(I) is the amplitude itself.
/// Throws UndefinedMetric when the truth carries no intensity.
double chi_squared(const ComplexField& predicted, const fields::DiffractionPattern& truth);
double chi_squared(const fields::DiffractionPattern& predicted, const fields::DiffractionPattern& truth);

/// Centrosymmetric inversion plus complex conjugation: out(i,j) = conj(in(-i,-j)) mod N.
ComplexField twin(const ComplexField& object);

/// Real-grid inversion (i,j) -> (-i,-j) mod N.
RealGrid invert(const RealGrid& grid);

struct ShapeError {
  double error = 0.0;  // 1 - IoU of the thresholded supports
  bool twin_used = false;
};

/// min over {truth, inverted truth} of 1 - IoU; ties keep the direct orientation.
ShapeError twin_resolved_shape_error(const RealGrid& predicted, const RealGrid& truth, double threshold = 0.1);

struct EvalRecord {
  std::uint64_t seed = 0;
  double chi2 = 0.0;
  RealGrid true_intensity;
  RealGrid predicted_intensity;
  double shape_error = 0.0;
  bool twin_used = false;
};

EvalRecord evaluate(const model::Prediction& prediction, const fields::DiffractionPattern& truth,
                    const RealGrid& true_shape, std::uint64_t seed, double threshold = 0.1);

enum class Order { best, worst };

/// Sorted by chi2 (ties by seed); the k lowest for best, the k highest
/// (highest first) for worst. Throws InvalidArgument when k exceeds the list.
std::vector<EvalRecord> rank_cases(const std::vector<EvalRecord>& records, std::size_t k, Order order);

struct Histogram {
  std::vector<double> edges;  // bins + 1 values over [0, max chi2]
  std::vector<std::size_t> counts;
};

Histogram error_histogram(const std::vector<EvalRecord>& records, int bins);

/// Corner-aligned bilinear resize of a square grid.
RealGrid bilinear_resize(const RealGrid& grid, int side);

/// Mean over filters of conv layer `conv_index` (1-based among conv
/// layers) for one normalized input, resized to the input side when the
/// layer runs at lower resolution.
RealGrid activation_map(const model::Network<float>& net, std::span<const float> input, int conv_index);

/// One line of JSON per record (scalar fields only).
std::string to_json_line(const EvalRecord& record);

}  // namespace cdinn::eval
