#include "cdinn/eval.hpp"

#include <algorithm>
#include <cmath>

#include "cdinn/error.hpp"
#include "json.hpp"

namespace cdinn::eval {

double chi_squared(const fields::DiffractionPattern& predicted, const fields::DiffractionPattern& truth) {
  const auto& p = predicted.amplitudes;
  const auto& t = truth.amplitudes;
  if (p.side() != t.side()) throw InvalidArgument("chi_squared: grid sizes differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = p[i] - t[i];
    num += d * d;
    den += t[i] * t[i];
  }
  if (!(den > 0.0)) throw UndefinedMetric("chi_squared: true pattern has zero intensity");
  return num / den;
}

double chi_squared(const ComplexField& predicted, const fields::DiffractionPattern& truth) {
  if (predicted.side() != truth.amplitudes.side()) throw InvalidArgument("chi_squared: grid sizes differ");
  return chi_squared(fields::diffraction_amplitudes(predicted), truth);
}

ComplexField twin(const ComplexField& object) {
  const int n = object.side();
  ComplexField out(n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out(r, c) = std::conj(object((n - r) % n, (n - c) % n));
  return out;
}

RealGrid invert(const RealGrid& grid) {
  const int n = grid.side();
  RealGrid out(n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out(r, c) = grid((n - r) % n, (n - c) % n);
  return out;
}

namespace {

double iou_error(const RealGrid& a, const RealGrid& b, double threshold) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] > threshold, y = b[i] > threshold;
    inter += x && y;
    uni += x || y;
  }
  if (uni == 0) throw UndefinedMetric("shape error: both supports are empty");
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

ShapeError twin_resolved_shape_error(const RealGrid& predicted, const RealGrid& truth, double threshold) {
  if (predicted.side() != truth.side()) throw InvalidArgument("shape error: grid sizes differ");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("shape error: threshold must lie in (0, 1)");
  const double direct = iou_error(predicted, truth, threshold);
  const double flipped = iou_error(predicted, invert(truth), threshold);
  if (flipped < direct) return {flipped, true};
  return {direct, false};
}

EvalRecord evaluate(const model::Prediction& prediction, const fields::DiffractionPattern& truth,
                    const RealGrid& true_shape, std::uint64_t seed, double threshold) {
  EvalRecord rec;
  rec.seed = seed;
  const auto predicted = fields::diffraction_amplitudes(prediction.field);
  rec.chi2 = chi_squared(predicted, truth);
  const int n = truth.amplitudes.side();
  rec.true_intensity = RealGrid(n);
  rec.predicted_intensity = RealGrid(n);
  for (std::size_t i = 0; i < truth.amplitudes.size(); ++i) {
    rec.true_intensity[i] = truth.amplitudes[i] * truth.amplitudes[i];
    rec.predicted_intensity[i] = predicted.amplitudes[i] * predicted.amplitudes[i];
  }
  const auto err = twin_resolved_shape_error(prediction.shape, true_shape, threshold);
  rec.shape_error = err.error;
  rec.twin_used = err.twin_used;
  return rec;
}

std::vector<EvalRecord> rank_cases(const std::vector<EvalRecord>& records, std::size_t k, Order order) {
  if (k > records.size()) throw InvalidArgument("rank_cases: k exceeds the number of records");
  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = records[a];
    const auto& y = records[b];
    if (x.chi2 != y.chi2) return order == Order::best ? x.chi2 < y.chi2 : x.chi2 > y.chi2;
    return x.seed < y.seed;
  });
  std::vector<EvalRecord> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(records[idx[i]]);
  return out;
}

Histogram error_histogram(const std::vector<EvalRecord>& records, int bins) {
  if (bins < 1) throw InvalidArgument("error_histogram: bins must be >= 1");
  if (records.empty()) throw InvalidArgument("error_histogram: no records");
  double hi = 0.0;
  for (const auto& r : records) hi = std::max(hi, r.chi2);
  if (!(hi > 0.0)) hi = 1.0;
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (int i = 0; i <= bins; ++i) h.edges.push_back(hi * i / bins);
  for (const auto& r : records) {
    const auto b = static_cast<int>(std::floor(r.chi2 / hi * bins));
    ++h.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  return h;
}

RealGrid bilinear_resize(const RealGrid& grid, int side) {
  const int n = grid.side();
  if (n < 1 || side < 1) throw InvalidArgument("bilinear_resize: empty grid");
  if (n == side) return grid;
  RealGrid out(side);
  const double scale = side > 1 ? static_cast<double>(n - 1) / (side - 1) : 0.0;
  for (int r = 0; r < side; ++r) {
    const double y = r * scale;
    const int y0 = std::min(static_cast<int>(y), n - 1), y1 = std::min(y0 + 1, n - 1);
    const double fy = y - y0;
    for (int c = 0; c < side; ++c) {
      const double x = c * scale;
      const int x0 = std::min(static_cast<int>(x), n - 1), x1 = std::min(x0 + 1, n - 1);
      const double fx = x - x0;
      const double top = grid(y0, x0) * (1 - fx) + grid(y0, x1) * fx;
      const double bottom = grid(y1, x0) * (1 - fx) + grid(y1, x1) * fx;
      out(r, c) = top * (1 - fy) + bottom * fy;
    }
  }
  return out;
}

RealGrid activation_map(const model::Network<float>& net, std::span<const float> input, int conv_index) {
  const int side = net.spec().input_side;
  if (conv_index < 1 || conv_index > net.spec().conv_count())
    throw InvalidArgument("activation_map: conv layer " + std::to_string(conv_index) + " out of range 1.." +
                          std::to_string(net.spec().conv_count()));
  if (input.size() != static_cast<std::size_t>(side) * side)
    throw InvalidArgument("activation_map: input does not match the network side");
  std::vector<std::vector<float>> outs;
  net.infer(input, 1, &outs);
  const auto& act = outs[static_cast<std::size_t>(conv_index - 1)];
  int channels = 0, seen = 0;
  for (const auto& l : net.spec().layers)
    if (l.kind == model::LayerKind::conv && ++seen == conv_index) channels = l.out_channels;
  const std::size_t plane = act.size() / static_cast<std::size_t>(channels);
  const int h = static_cast<int>(std::lround(std::sqrt(static_cast<double>(plane))));
  RealGrid mean(h);
  for (int ch = 0; ch < channels; ++ch)
    for (std::size_t i = 0; i < plane; ++i) mean[i] += act[static_cast<std::size_t>(ch) * plane + i];
  for (std::size_t i = 0; i < plane; ++i) mean[i] /= channels;
  return bilinear_resize(mean, side);
}

std::string to_json_line(const EvalRecord& record) {
  nlohmann::json j{{"schema_version", 1},
                   {"seed", record.seed},
                   {"chi2", record.chi2},
                   {"shape_error", record.shape_error},
                   {"twin_used", record.twin_used}};
  return j.dump();
}

}  // namespace cdinn::eval
