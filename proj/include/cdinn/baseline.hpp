#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdinn/dataset.hpp"
#include "cdinn/fields.hpp"
#include "cdinn/model.hpp"

namespace cdinn::baseline {

enum class Algorithm { er, hio };

struct SchedulePhase {
  Algorithm algorithm = Algorithm::hio;
  int iterations = 0;
  double beta = 0.9;
};

struct Schedule {
  std::vector<SchedulePhase> phases;
  int shrinkwrap_every = 20;  // 0 disables
  double shrinkwrap_sigma = 1.0;
  double shrinkwrap_threshold = 0.1;

  /// HIO (beta 0.9) x 560, then ER x 60, shrinkwrap every 20 iterations.
  static Schedule standard();
  int total_iterations() const;
  void validate() const;
  std::string to_json() const;
};

struct RetrievalState {
  ComplexField estimate;
  Mask support;
  std::int64_t iteration = 0;
  double beta = 0.9;
  std::vector<double> chi2_trace;  // one entry per iteration
  double initial_chi2 = 0.0;       // of the support-masked starting field
  ComplexField best;               // support-masked iterate with the lowest chi2
  double best_chi2 = 0.0;
};

/// Replace |FT| by the measured amplitudes keeping the phases; zero-amplitude
/// frequencies take phase 0.
ComplexField fourier_project(const ComplexField& estimate, const fields::DiffractionPattern& measured);

/// Measured amplitudes with uniform random phases, inverse transformed.
RetrievalState initial_state(const fields::DiffractionPattern& measured, Mask support, std::uint64_t seed);

void er_iterate(RetrievalState& state, const fields::DiffractionPattern& measured);
void hio_iterate(RetrievalState& state, const fields::DiffractionPattern& measured);

/// support = blur(|estimate|, sigma) > threshold * max; EmptySupport if nothing survives.
void shrinkwrap(RetrievalState& state, double sigma, double threshold);

/// Support from the thresholded autocorrelation |IFT(I)|.
Mask autocorrelation_support(const fields::DiffractionPattern& measured, double threshold = 0.04);

struct RetrievalResult {
  ComplexField field;  // best-chi2 iterate
  double chi2 = 0.0;
  std::vector<double> trace;
  double seconds = 0.0;
  Mask support;
};

/// Runs the schedule from a seeded random-phase start. Without an explicit
/// support the autocorrelation support is used.
RetrievalResult run_phase_retrieval(const fields::DiffractionPattern& measured, const Schedule& schedule,
                                    std::uint64_t seed, std::optional<Mask> support = std::nullopt);

struct BenchmarkRow {
  std::uint64_t seed = 0;
  double nn_ms = 0.0;
  double iter_ms = 0.0;
  double nn_chi2 = 0.0;
  double iter_chi2 = 0.0;
};

struct BenchmarkReport {
  std::string hardware;
  Schedule schedule;
  std::vector<BenchmarkRow> rows;
  double median_nn_ms = 0.0;
  double median_iter_ms = 0.0;
  double median_nn_chi2 = 0.0;
  double median_iter_chi2 = 0.0;
  double speedup = 0.0;  // median iterative / median network latency

  std::string to_json() const;
};

/// Per sample: single-pattern prediction latency and chi2 of both nets,
/// then one iterative retrieval from the same pattern.
BenchmarkReport benchmark(const model::Network<float>& shape_net, const model::Network<float>& phase_net,
                          const Schedule& schedule, const std::vector<data::Sample>& samples,
                          double threshold = 0.1, std::uint64_t seed = 0);

/// CPU model and thread count of this machine.
std::string hardware_descriptor();

double median(std::vector<double> values);

}  // namespace cdinn::baseline
