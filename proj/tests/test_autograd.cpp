#include <cmath>
#include <numbers>
#include <vector>

#include "cdinn/adam.hpp"
#include "cdinn/autograd.hpp"
#include "cdinn/error.hpp"
#include "cdinn/grad_check.hpp"
#include "cdinn/rng.hpp"
#include "doctest.h"

using namespace cdinn;
using namespace cdinn::ag;

namespace {

Parameter<double> random_param(const std::string& name, Shape shape, std::uint64_t seed, double scale = 1.0,
                               double offset = 0.0) {
  Parameter<double> p(name, std::move(shape));
  Rng rng(seed);
  for (auto& v : p.value) v = offset + scale * rng.normal();
  return p;
}

std::vector<double> uniform_values(std::size_t n, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Smooth random weighting so that sum-reductions do not hide errors.
Tensor<double> weighted_sum(Graph<double>& g, Tensor<double> x, std::uint64_t seed) {
  auto w = g.constant(x.shape(), uniform_values(x.size(), seed, 0.5, 1.5));
  return sum(mul(x, w));
}

}  // namespace

TEST_CASE("relu and sigmoid values") {
  Graph<double> g;
  auto x = g.constant({3}, {-1.0, 0.0, 2.0});
  auto r = relu(x);
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) == std::vector<double>{0, 0, 2});
  auto s = sigmoid(g.constant({3}, {0.0, 40.0, -40.0}));
  CHECK(s.values()[0] == 0.5);
  CHECK(std::abs(s.values()[1] - 1.0) <= 1e-15);
  CHECK(s.values()[2] >= 0.0);
  CHECK(s.values()[2] <= 1e-15);
  CHECK(std::isfinite(sigmoid_scalar(-1000.0)));
  CHECK(sigmoid_scalar(1000.0) == 1.0);
}

TEST_CASE("bce: ln 2 at one half, near zero on exact targets, never negative") {
  Graph<double> g;
  auto half = g.constant({4}, std::vector<double>(4, 0.5));
  auto t = g.constant({4}, {0.0, 1.0, 0.3, 0.9});
  CHECK(bce_loss(half, t).item() == doctest::Approx(std::numbers::ln2).epsilon(1e-15));

  auto exact = g.constant({4}, {0.0, 1.0, 1.0, 0.0});
  CHECK(bce_loss(exact, exact).item() <= -std::log(1.0 - kBceClamp) * (1 + 1e-9));

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(16), q(16);
    for (auto& v : p) v = rng.uniform();
    for (auto& v : q) v = rng.uniform();
    CHECK(bce_loss(g.constant({16}, p), g.constant({16}, q)).item() >= 0.0);
  }
}

TEST_CASE("sum gives ones, fan-out accumulates") {
  Graph<double> g;
  auto x = g.variable({2, 3}, std::vector<double>(6, 1.5));
  g.backward(sum(x));
  for (double v : x.grad()) CHECK(v == 1.0);

  Graph<double> h;
  auto y = h.variable({5}, std::vector<double>(5, -2.0));
  h.backward(add(sum(y), sum(y)));
  for (double v : y.grad()) CHECK(v == 2.0);
}

TEST_CASE("backward needs a scalar loss") {
  Graph<double> g;
  auto x = g.variable({3}, {1, 2, 3});
  CHECK_THROWS_AS(g.backward(relu(x)), InvalidArgument);
  CHECK_THROWS_AS(relu(x).item(), InvalidArgument);
}

TEST_CASE("parameters unused by the loss get zero gradients") {
  Parameter<double> used("u", {3}), unused("n", {2});
  used.value = {1, 2, 3};
  unused.grad = {7, 7};
  Graph<double> g;
  auto a = g.parameter(used);
  g.parameter(unused);
  g.backward(sum(a));
  CHECK(used.grad == std::vector<double>{1, 1, 1});
  CHECK(unused.grad == std::vector<double>{0, 0});
}

TEST_CASE("grad check: linear map is exact to rounding") {
  auto x = random_param("x", {20}, 1);
  const auto w = uniform_values(20, 2, -2.0, 2.0);
  auto r = grad_check(
      [&](Graph<double>& g) { return sum(mul(g.parameter(x), g.constant({20}, w))); }, {&x},
      {.h = 1e-4, .min_coords = 20});
  CHECK(r.coords == 20);
  CHECK(r.max_rel_error < 1e-10);
}

TEST_CASE("grad check: conv2d layer") {
  auto x = random_param("x", {1, 1, 6, 6}, 3);
  auto w = random_param("w", {2, 1, 3, 3}, 4, 0.5);
  auto b = random_param("b", {2}, 5, 0.1);
  auto r = grad_check(
      [&](Graph<double>& g) {
        return weighted_sum(g, conv2d(g.parameter(x), g.parameter(w), g.parameter(b)), 6);
      },
      {&x, &w, &b}, {.h = 1e-5, .min_coords = 64});
  CHECK(r.coords == 56);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("grad check: maxpool away from ties, upsample, relu, sigmoid, bce") {
  auto x = random_param("x", {2, 2, 4, 4}, 7);
  auto pool = grad_check([&](Graph<double>& g) { return weighted_sum(g, maxpool2(g.parameter(x)), 8); }, {&x},
                         {.h = 1e-5});
  CHECK(pool.max_rel_error < 1e-6);

  auto up = grad_check([&](Graph<double>& g) { return weighted_sum(g, upsample2(g.parameter(x)), 9); }, {&x},
                       {.h = 1e-5});
  CHECK(up.max_rel_error < 1e-8);

  auto rl = grad_check([&](Graph<double>& g) { return weighted_sum(g, relu(g.parameter(x)), 10); }, {&x},
                       {.h = 1e-5});
  CHECK(rl.max_rel_error < 1e-6);

  auto sg = grad_check([&](Graph<double>& g) { return weighted_sum(g, sigmoid(g.parameter(x)), 11); }, {&x},
                       {.h = 1e-5});
  CHECK(sg.max_rel_error < 1e-6);

  Parameter<double> p("p", {32});
  p.value = uniform_values(32, 12, 0.05, 0.95);
  const auto t = uniform_values(32, 13, 0.0, 1.0);
  auto bce = grad_check([&](Graph<double>& g) { return bce_loss(g.parameter(p), g.constant({32}, t)); }, {&p},
                        {.h = 1e-5});
  CHECK(bce.max_rel_error < 1e-6);
}

TEST_CASE("grad check: composed conv + pool + sigmoid + bce") {
  auto x = random_param("x", {2, 1, 8, 8}, 21);
  auto w = random_param("w", {3, 1, 3, 3}, 22, 0.4);
  auto b = random_param("b", {3}, 23, 0.1);
  const auto t = uniform_values(2 * 3 * 16, 24, 0.0, 1.0);
  auto r = grad_check(
      [&](Graph<double>& g) {
        auto y = sigmoid(maxpool2(conv2d(g.parameter(x), g.parameter(w), g.parameter(b))));
        return bce_loss(y, g.constant(y.shape(), t));
      },
      {&x, &w, &b}, {.h = 1e-5, .min_coords = 64, .seed = 5});
  CHECK(r.coords == 64);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("grad check rejects steps outside [1e-6, 1e-4]") {
  Parameter<double> p("p", {1});
  auto build = [&](Graph<double>& g) { return sum(g.parameter(p)); };
  CHECK_THROWS_AS(grad_check(build, {&p}, {.h = 1e-3}), InvalidArgument);
  CHECK_THROWS_AS(grad_check(build, {&p}, {.h = 1e-7}), InvalidArgument);
}

TEST_CASE("maxpool2 of upsample2 is the identity") {
  Rng rng(31);
  std::vector<double> v(3 * 2 * 5 * 5);
  for (auto& x : v) x = rng.normal();
  Graph<double> g;
  auto x = g.constant({3, 2, 5, 5}, v);
  auto y = maxpool2(upsample2(x));
  CHECK(y.shape() == x.shape());
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) == v);
}

TEST_CASE("forward is bit-deterministic") {
  auto x = random_param("x", {2, 3, 8, 8}, 41);
  auto w = random_param("w", {4, 3, 3, 3}, 42);
  auto b = random_param("b", {4}, 43);
  auto run = [&] {
    Graph<float> g;
    std::vector<float> xf(x.value.begin(), x.value.end());
    Parameter<float> wf("w", w.shape), bf("b", b.shape);
    wf.value.assign(w.value.begin(), w.value.end());
    bf.value.assign(b.value.begin(), b.value.end());
    auto y = sigmoid(conv2d(g.constant(x.shape, xf), g.parameter(wf), g.parameter(bf)));
    return std::vector<float>(y.values().begin(), y.values().end());
  };
  CHECK(run() == run());
}

TEST_CASE("reference and parallel backends give the same network gradients") {
  auto x = random_param("x", {3, 2, 8, 8}, 51);
  auto w = random_param("w", {4, 2, 3, 3}, 52);
  auto b = random_param("b", {4}, 53);
  auto run = [&](Backend be) {
    set_backend(be);
    Graph<double> g;
    auto y = maxpool2(relu(conv2d(g.parameter(x), g.parameter(w), g.parameter(b))));
    g.backward(weighted_sum(g, y, 54));
    set_backend(Backend::parallel);
    return std::pair{w.grad, b.grad};
  };
  const auto [wr, br] = run(Backend::reference);
  const auto [wp, bp] = run(Backend::parallel);
  for (std::size_t i = 0; i < wr.size(); ++i) CHECK(wr[i] == doctest::Approx(wp[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < br.size(); ++i) CHECK(br[i] == doctest::Approx(bp[i]).epsilon(1e-12));
}

// ADAM

namespace {

void one_adam_step(Parameter<double>& p, AdamState<double>& s) {
  Parameter<double>* list[] = {&p};
  adam_step<double>(list, s);
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Parameter<double> p("p", {4});
  p.value = {1, -2, 3, 0.5};
  const auto before = p.value;
  AdamState<double> s;
  for (int i = 0; i < 5; ++i) one_adam_step(p, s);
  CHECK(p.value == before);
}

TEST_CASE("adam: first step moves each coordinate by about -lr sign(g)") {
  Parameter<double> p("p", {3});
  p.value = {0, 0, 0};
  p.grad = {3.0, -0.2, 1e-3};
  AdamState<double> s;
  s.config.lr = 0.01;
  one_adam_step(p, s);
  CHECK(p.value[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p.value[2] == doctest::Approx(-0.01).epsilon(1e-4));
}

TEST_CASE("adam: minimizing theta^2 matches a scalar reference trace") {
  Parameter<double> p("theta", {1});
  p.value = {1.0};
  AdamState<double> s;
  s.config.lr = 0.1;

  // Scalar reference written out directly from the update rule.
  double theta = 1.0, m = 0.0, v = 0.0;
  int first_small = -1;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * theta;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    theta -= 0.1 * mh / (std::sqrt(vh) + 1e-8);

    p.grad = {2.0 * p.value[0]};
    one_adam_step(p, s);
    CHECK(p.value[0] == doctest::Approx(theta).epsilon(1e-12));
    if (first_small < 0 && std::abs(p.value[0]) < 0.05) first_small = t;
  }
  CHECK(first_small > 0);
  CHECK(first_small <= 100);
}

TEST_CASE("adam: lr = 0 is the identity") {
  Parameter<double> p("p", {3});
  p.value = {0.3, -0.7, 2.0};
  const auto before = p.value;
  AdamState<double> s;
  s.config.lr = 0.0;
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    for (auto& g : p.grad) g = rng.normal();
    one_adam_step(p, s);
  }
  CHECK(p.value == before);
}

TEST_CASE("adam: parameter list must not change between steps") {
  Parameter<double> a("a", {1}), b("b", {1});
  AdamState<double> s;
  one_adam_step(a, s);
  Parameter<double>* two[] = {&a, &b};
  CHECK_THROWS_AS(adam_step<double>(two, s), InvalidArgument);
}
