#include "cdinn/baseline.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <thread>

#include "cdinn/error.hpp"
#include "cdinn/eval.hpp"
#include "cdinn/fft.hpp"
#include "cdinn/rng.hpp"
#include "json.hpp"

namespace cdinn::baseline {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

void check_grid(int side, const fields::DiffractionPattern& measured) {
  if (side != measured.amplitudes.side()) throw InvalidArgument("phase retrieval: grid sizes differ");
}

ComplexField masked(const ComplexField& field, const Mask& support) {
  ComplexField out(field.side());
  for (std::size_t i = 0; i < field.size(); ++i) out[i] = support[i] ? field[i] : Complex{};
  return out;
}

// Appends chi2 of the support-masked field and keeps the best one.
void record(RetrievalState& state, ComplexField masked_field, const fields::DiffractionPattern& measured) {
  const double chi2 = eval::chi_squared(masked_field, measured);
  state.chi2_trace.push_back(chi2);
  if (chi2 < state.best_chi2) {
    state.best_chi2 = chi2;
    state.best = std::move(masked_field);
  }
}

const char* name(Algorithm a) { return a == Algorithm::er ? "ER" : "HIO"; }

}  // namespace

Schedule Schedule::standard() {
  Schedule s;
  s.phases = {{Algorithm::hio, 560, 0.9}, {Algorithm::er, 60, 0.0}};
  return s;
}

int Schedule::total_iterations() const {
  int total = 0;
  for (const auto& p : phases) total += p.iterations;
  return total;
}

void Schedule::validate() const {
  for (const auto& p : phases)
    if (p.iterations < 0) throw InvalidArgument("schedule: negative iteration count");
  if (total_iterations() < 1) throw InvalidArgument("schedule: needs at least one iteration");
  if (shrinkwrap_every < 0) throw InvalidArgument("schedule: shrinkwrap cadence must be >= 0");
  if (shrinkwrap_every > 0 &&
      (!(shrinkwrap_sigma > 0.0) || !(shrinkwrap_threshold > 0.0 && shrinkwrap_threshold < 1.0)))
    throw InvalidArgument("schedule: shrinkwrap needs sigma > 0 and threshold in (0, 1)");
}

std::string Schedule::to_json() const {
  json phases_j = json::array();
  for (const auto& p : phases) phases_j.push_back({{"algorithm", name(p.algorithm)}, {"iterations", p.iterations}, {"beta", p.beta}});
  return json{{"phases", phases_j},
              {"shrinkwrap_every", shrinkwrap_every},
              {"shrinkwrap_sigma", shrinkwrap_sigma},
              {"shrinkwrap_threshold", shrinkwrap_threshold}}
      .dump();
}

ComplexField fourier_project(const ComplexField& estimate, const fields::DiffractionPattern& measured) {
  check_grid(estimate.side(), measured);
  const int n = estimate.side();
  ComplexField buf = estimate;
  fft2_centered_inplace(buf.values(), n, FftDirection::forward);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double a = std::abs(buf[i]);
    buf[i] = a > 0.0 ? buf[i] * (measured.amplitudes[i] / a) : Complex(measured.amplitudes[i], 0.0);
  }
  fft2_centered_inplace(buf.values(), n, FftDirection::inverse);
  return buf;
}

RetrievalState initial_state(const fields::DiffractionPattern& measured, Mask support, std::uint64_t seed) {
  const int n = measured.amplitudes.side();
  if (support.side() != n) throw InvalidArgument("phase retrieval: support size differs from the pattern");
  Rng rng(seed);
  ComplexField spectrum(n);
  for (std::size_t i = 0; i < spectrum.size(); ++i)
    spectrum[i] = std::polar(measured.amplitudes[i], rng.uniform(-std::numbers::pi, std::numbers::pi));
  fft2_centered_inplace(spectrum.values(), n, FftDirection::inverse);

  RetrievalState state;
  state.estimate = std::move(spectrum);
  state.support = std::move(support);
  state.initial_chi2 = eval::chi_squared(masked(state.estimate, state.support), measured);
  state.best = masked(state.estimate, state.support);
  state.best_chi2 = std::numeric_limits<double>::infinity();
  return state;
}

void er_iterate(RetrievalState& state, const fields::DiffractionPattern& measured) {
  state.estimate = masked(fourier_project(state.estimate, measured), state.support);
  ++state.iteration;
  record(state, state.estimate, measured);
}

void hio_iterate(RetrievalState& state, const fields::DiffractionPattern& measured) {
  const ComplexField projected = fourier_project(state.estimate, measured);
  for (std::size_t i = 0; i < projected.size(); ++i)
    state.estimate[i] = state.support[i] ? projected[i] : state.estimate[i] - state.beta * projected[i];
  ++state.iteration;
  record(state, masked(projected, state.support), measured);
}

void shrinkwrap(RetrievalState& state, double sigma, double threshold) {
  if (!(sigma > 0.0)) throw InvalidArgument("shrinkwrap: sigma must be > 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("shrinkwrap: threshold must lie in (0, 1)");
  const int n = state.estimate.side();
  RealGrid magnitude(n);
  for (std::size_t i = 0; i < magnitude.size(); ++i) magnitude[i] = std::abs(state.estimate[i]);
  const RealGrid blurred = fields::gaussian_blur(magnitude, sigma);
  const double peak = *std::max_element(blurred.raw().begin(), blurred.raw().end());
  Mask support(n);
  std::size_t count = 0;
  for (std::size_t i = 0; i < blurred.size(); ++i) {
    support[i] = blurred[i] > threshold * peak;
    count += support[i];
  }
  if (count == 0)
    throw EmptySupport(state.iteration, "shrinkwrap: empty support at iteration " + std::to_string(state.iteration));
  state.support = std::move(support);
}

Mask autocorrelation_support(const fields::DiffractionPattern& measured, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("autocorrelation support: threshold must lie in (0, 1)");
  const int n = measured.amplitudes.side();
  ComplexField intensity(n);
  for (std::size_t i = 0; i < intensity.size(); ++i)
    intensity[i] = measured.amplitudes[i] * measured.amplitudes[i];
  fft2_centered_inplace(intensity.values(), n, FftDirection::inverse);
  double peak = 0.0;
  for (const auto& v : intensity.values()) peak = std::max(peak, std::abs(v));
  Mask support(n);
  for (std::size_t i = 0; i < support.size(); ++i) support[i] = std::abs(intensity[i]) > threshold * peak;
  return support;
}

RetrievalResult run_phase_retrieval(const fields::DiffractionPattern& measured, const Schedule& schedule,
                                    std::uint64_t seed, std::optional<Mask> support) {
  schedule.validate();
  const auto t0 = Clock::now();
  Mask initial = support ? std::move(*support) : autocorrelation_support(measured);
  RetrievalState state = initial_state(measured, std::move(initial), seed);
  for (const auto& phase : schedule.phases) {
    state.beta = phase.beta;
    for (int i = 0; i < phase.iterations; ++i) {
      if (phase.algorithm == Algorithm::er)
        er_iterate(state, measured);
      else
        hio_iterate(state, measured);
      if (schedule.shrinkwrap_every > 0 && state.iteration % schedule.shrinkwrap_every == 0)
        shrinkwrap(state, schedule.shrinkwrap_sigma, schedule.shrinkwrap_threshold);
    }
  }
  RetrievalResult result;
  result.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  result.field = std::move(state.best);
  result.chi2 = state.best_chi2;
  result.trace = std::move(state.chi2_trace);
  result.support = std::move(state.support);
  return result;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median: no values");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

std::string hardware_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  return cpu + "; " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads; OpenMP max " +
         std::to_string(omp_get_max_threads());
}

BenchmarkReport benchmark(const model::Network<float>& shape_net, const model::Network<float>& phase_net,
                          const Schedule& schedule, const std::vector<data::Sample>& samples, double threshold,
                          std::uint64_t seed) {
  if (samples.empty()) throw InvalidArgument("benchmark: no samples");
  schedule.validate();
  BenchmarkReport report;
  report.hardware = hardware_descriptor();
  report.schedule = schedule;
  for (const auto& s : samples) {
    const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(s.pattern.size()))));
    fields::DiffractionPattern pattern{RealGrid(n, std::vector<double>(s.pattern.begin(), s.pattern.end()))};

    BenchmarkRow row;
    row.seed = s.seed;
    auto t0 = Clock::now();
    const auto prediction = model::predict_object(shape_net, phase_net, pattern, threshold);
    row.nn_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    row.nn_chi2 = eval::chi_squared(prediction.field, pattern);

    t0 = Clock::now();
    const auto retrieved = run_phase_retrieval(pattern, schedule, mix64(seed ^ s.seed));
    row.iter_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    row.iter_chi2 = retrieved.chi2;
    report.rows.push_back(row);
  }
  std::vector<double> nn, it, nc, ic;
  for (const auto& r : report.rows) {
    nn.push_back(r.nn_ms);
    it.push_back(r.iter_ms);
    nc.push_back(r.nn_chi2);
    ic.push_back(r.iter_chi2);
  }
  report.median_nn_ms = median(nn);
  report.median_iter_ms = median(it);
  report.median_nn_chi2 = median(nc);
  report.median_iter_chi2 = median(ic);
  report.speedup = report.median_iter_ms / report.median_nn_ms;
  return report;
}

std::string BenchmarkReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"seed", r.seed}, {"nn_ms", r.nn_ms}, {"iter_ms", r.iter_ms}, {"nn_chi2", r.nn_chi2}, {"iter_chi2", r.iter_chi2}});
  return json{{"schema_version", 1},
              {"hardware", hardware},
              {"schedule", json::parse(schedule.to_json())},
              {"rows", rows_j},
              {"medians",
               {{"nn_ms", median_nn_ms}, {"iter_ms", median_iter_ms}, {"nn_chi2", median_nn_chi2}, {"iter_chi2", median_iter_chi2}}},
              {"speedup", speedup}}
      .dump(2);
}

}  // namespace cdinn::baseline
