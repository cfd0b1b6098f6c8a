#include <cmath>

#include "cdinn/baseline.hpp"
#include "cdinn/error.hpp"
#include "cdinn/eval.hpp"
#include "cdinn/fft.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cdinn;
using namespace cdinn::baseline;

namespace {

data::SampleDetail detail(std::uint64_t seed) { return data::generate_detail(seed, data::GenerationConfig{}); }

Mask full_mask(int n) { return Mask(n, 1); }

double max_abs_diff(const ComplexField& a, const ComplexField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

ComplexField random_field(std::uint64_t seed) {
  Rng rng(seed);
  ComplexField f(32);
  for (auto& v : f.values()) v = Complex(rng.normal(), rng.normal());
  return f;
}

}  // namespace

TEST_CASE("fourier projection: consistent estimates stay, modulus enforced, idempotent") {
  const auto d = detail(1);
  CHECK(max_abs_diff(fourier_project(d.field, d.pattern), d.field) < 1e-12);

  const auto guess = random_field(2);
  const auto once = fourier_project(guess, d.pattern);
  const auto twice = fourier_project(once, d.pattern);
  CHECK(max_abs_diff(once, twice) < 1e-12);

  const auto ft = fft2_centered(once, FftDirection::forward);
  double worst = 0.0;
  for (std::size_t i = 0; i < ft.size(); ++i) worst = std::max(worst, std::abs(std::abs(ft[i]) - d.pattern.amplitudes[i]));
  CHECK(worst < 1e-10);
  CHECK(eval::chi_squared(once, d.pattern) < 1e-20);
}

TEST_CASE("fourier projection gives zero-amplitude frequencies phase zero") {
  fields::DiffractionPattern flat{RealGrid(8, 1.0)};
  const auto zero = fourier_project(ComplexField(8), flat);
  // Every frequency takes amplitude 1 at phase 0: a centered impulse of height 1.
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(std::abs(zero(r, c) - Complex(r == 4 && c == 4 ? 1.0 : 0.0)) < 1e-14);
}

TEST_CASE("ER with full support is the plain projection") {
  const auto d = detail(3);
  auto state = initial_state(d.pattern, full_mask(32), 4);
  const auto expected = fourier_project(state.estimate, d.pattern);
  er_iterate(state, d.pattern);
  CHECK(max_abs_diff(state.estimate, expected) < 1e-15);
  CHECK(state.iteration == 1);
  REQUIRE(state.chi2_trace.size() == 1);
  CHECK(state.chi2_trace[0] < 1e-20);
}

TEST_CASE("ER zeroes the exterior; HIO with beta 0 keeps it") {
  const auto d = detail(5);
  const Mask support = fields::threshold_mask(d.shape.grid, 0.0);
  auto er = initial_state(d.pattern, support, 6);
  er_iterate(er, d.pattern);
  for (std::size_t i = 0; i < support.size(); ++i)
    if (!support[i]) CHECK(er.estimate[i] == Complex{});

  auto hio = initial_state(d.pattern, support, 6);
  hio.beta = 0.0;
  const auto before = hio.estimate;
  const auto projected = fourier_project(before, d.pattern);
  hio_iterate(hio, d.pattern);
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (support[i])
      CHECK(hio.estimate[i] == projected[i]);
    else
      CHECK(hio.estimate[i] == before[i]);
  }

  auto hio9 = initial_state(d.pattern, support, 6);
  hio9.beta = 0.9;
  hio_iterate(hio9, d.pattern);
  for (std::size_t i = 0; i < support.size(); ++i)
    if (!support[i]) CHECK(std::abs(hio9.estimate[i] - (before[i] - 0.9 * projected[i])) < 1e-15);
}

TEST_CASE("200 ER iterations from a random start improve chi squared in at least 95 of 100 trials") {
  int improved = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const auto d = detail(1000 + t);
    auto state = initial_state(d.pattern, fields::threshold_mask(d.shape.grid, 0.0), 5000 + t);
    for (int i = 0; i < 200; ++i) er_iterate(state, d.pattern);
    improved += state.chi2_trace.back() < state.initial_chi2;
  }
  CHECK(improved >= 95);
}

TEST_CASE("shrinkwrap on a clean object covers its support and is deterministic") {
  const auto d = detail(7);
  RetrievalState state;
  state.estimate = d.field;
  shrinkwrap(state, 1.0, 0.1);
  const auto first = state.support;
  std::size_t count = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (d.shape.support[i]) CHECK(first[i]);
    count += first[i];
  }
  shrinkwrap(state, 1.0, 0.1);
  CHECK(state.support == first);

  // Raising the threshold only removes pixels and ends near the peak.
  RealGrid mag(32);
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(d.field[i]);
  const auto blurred = fields::gaussian_blur(mag, 1.0);
  const auto peak = static_cast<std::size_t>(std::max_element(blurred.raw().begin(), blurred.raw().end()) - blurred.raw().begin());
  std::size_t previous = count;
  for (double thr : {0.3, 0.6, 0.9, 0.999}) {
    shrinkwrap(state, 1.0, thr);
    std::size_t now = 0;
    for (auto v : state.support.values()) now += v;
    CHECK(now <= previous);
    CHECK(state.support[peak]);
    previous = now;
  }
  CHECK(previous * 10 < count);

  CHECK_THROWS_AS(shrinkwrap(state, 0.0, 0.1), InvalidArgument);
  CHECK_THROWS_AS(shrinkwrap(state, 1.0, 1.0), InvalidArgument);
}

TEST_CASE("shrinkwrap of an all-zero estimate reports the iteration") {
  RetrievalState state;
  state.estimate = ComplexField(32);
  state.iteration = 40;
  try {
    shrinkwrap(state, 1.0, 0.1);
    FAIL("expected EmptySupport");
  } catch (const EmptySupport& e) {
    CHECK(e.iteration() == 40);
  }
}

TEST_CASE("one-iteration ER schedule equals a single er_iterate from the seeded start") {
  const auto d = detail(8);
  Schedule s;
  s.phases = {{Algorithm::er, 1, 0.0}};
  s.shrinkwrap_every = 0;
  const Mask support = fields::threshold_mask(d.shape.grid, 0.0);
  const auto r = run_phase_retrieval(d.pattern, s, 9, support);
  auto state = initial_state(d.pattern, support, 9);
  er_iterate(state, d.pattern);
  CHECK(r.field == state.estimate);
  CHECK(r.trace == state.chi2_trace);
  CHECK(r.chi2 == state.chi2_trace[0]);
}

TEST_CASE("trace length, best iterate and reproducibility") {
  const auto d = detail(10);
  Schedule s;
  s.phases = {{Algorithm::hio, 30, 0.9}, {Algorithm::er, 10, 0.0}};
  s.shrinkwrap_every = 10;
  const auto a = run_phase_retrieval(d.pattern, s, 3);
  const auto b = run_phase_retrieval(d.pattern, s, 3);
  CHECK(a.trace.size() == 40);
  CHECK(a.trace == b.trace);
  CHECK(a.field == b.field);
  CHECK(a.chi2 == *std::min_element(a.trace.begin(), a.trace.end()));
  CHECK(eval::chi_squared(a.field, d.pattern) == doctest::Approx(a.chi2).epsilon(1e-9));
  CHECK(a.seconds >= 0.0);
}

TEST_CASE("standard schedule and validation") {
  const auto s = Schedule::standard();
  CHECK(s.total_iterations() == 620);
  REQUIRE(s.phases.size() == 2);
  CHECK(s.phases[0].algorithm == Algorithm::hio);
  CHECK(s.phases[0].beta == 0.9);
  CHECK(s.shrinkwrap_every == 20);
  const auto j = nlohmann::json::parse(s.to_json());
  CHECK(j.at("phases")[1].at("iterations") == 60);

  Schedule empty;
  CHECK_THROWS_AS(empty.validate(), InvalidArgument);
  Schedule neg = s;
  neg.shrinkwrap_threshold = 0.0;
  CHECK_THROWS_AS(neg.validate(), InvalidArgument);
}

TEST_CASE("autocorrelation support contains the centered object") {
  const auto d = detail(11);
  const auto support = autocorrelation_support(d.pattern);
  // The autocorrelation of a compact object spans its difference set, which
  // includes the origin and, for a centered object, the object itself.
  CHECK(support(16, 16));
  std::size_t count = 0, object = 0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    count += support[i];
    object += d.shape.support[i];
  }
  CHECK(count >= object);
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK_THROWS_AS(median({}), InvalidArgument);
}
