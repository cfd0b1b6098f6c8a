#include <cmath>
#include <fstream>
#include <numbers>

#include "cdinn/dataset.hpp"
#include "cdinn/error.hpp"
#include "cdinn/model.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cdinn;
using namespace cdinn::model;

namespace {

std::vector<float> sample_input(std::uint64_t seed) {
  const auto s = data::generate_sample(seed, data::GenerationConfig{});
  return data::normalize_pattern(s.pattern);
}

fields::DiffractionPattern sample_pattern(std::uint64_t seed) {
  return data::generate_detail(seed, data::GenerationConfig{}).pattern;
}

int format_kind(const std::filesystem::path& p, std::optional<Head> expected = std::nullopt) {
  try {
    load_weights(p, expected);
  } catch (const FormatError& e) {
    return static_cast<int>(e.kind());
  }
  return -1;
}

}  // namespace

TEST_CASE("the standard spec satisfies the network invariants") {
  const auto spec = NetworkSpec::cdinn(Head::shape);
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.conv_count() == 7);

  const auto trace = spec.shape_trace();
  std::vector<int> sides;
  for (const auto& t : trace) sides.push_back(t[1]);
  CHECK(sides.front() == 32);
  CHECK(*std::min_element(sides.begin(), sides.end()) == 8);
  CHECK(trace.back() == std::array<int, 3>{1, 32, 32});

  int conv = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.kind != LayerKind::conv) continue;
    ++conv;
    if (conv == 2) CHECK(l.out_channels == 32);
    if (conv == 4) CHECK(l.out_channels == 64);
    CHECK(l.activation == (conv == 7 ? Activation::sigmoid : Activation::relu));
  }
}

TEST_CASE("spec validation rejects broken layouts") {
  auto spec = NetworkSpec::cdinn(Head::phase);
  auto bad = spec;
  bad.layers.back().activation = Activation::relu;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  bad = spec;
  bad.layers[0].activation = Activation::sigmoid;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  bad = spec;
  bad.layers[1].out_channels = 16;
  bad.layers[3].in_channels = 16;  // keep channel chaining consistent
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  bad = spec;
  bad.input_side = 30;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("spec json round trip") {
  const auto spec = NetworkSpec::cdinn(Head::phase);
  CHECK(NetworkSpec::from_json(spec.to_json()) == spec);
  CHECK(head_from_string(to_string(Head::phase)) == Head::phase);
  CHECK_THROWS_AS(head_from_string("amplitude"), InvalidArgument);
}

TEST_CASE("shape and phase networks share structure and parameter count") {
  const auto s = build_cdinn<float>(Head::shape, 1);
  const auto p = build_cdinn<float>(Head::phase, 2);
  CHECK(s.spec().layers == p.spec().layers);
  CHECK(s.spec().parameter_sizes() == p.spec().parameter_sizes());
  CHECK(s.parameter_count() == p.parameter_count());

  std::size_t expected = 0;
  for (const auto& l : s.spec().layers)
    if (l.kind == LayerKind::conv)
      expected += static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel + l.out_channels;
  CHECK(s.parameter_count() == expected);
}

TEST_CASE("glorot init stays inside its bound, biases start at zero") {
  const auto net = build_cdinn<double>(Head::shape, 9);
  for (const auto& c : net.convs()) {
    const auto& sh = c.weight.shape;
    const double bound = std::sqrt(6.0 / (double(sh[1]) * sh[2] * sh[3] + double(sh[0]) * sh[2] * sh[3]));
    for (double w : c.weight.value) CHECK(std::abs(w) <= bound);
    for (double b : c.bias.value) CHECK(b == 0.0);
  }
  CHECK(build_cdinn<double>(Head::shape, 9).convs()[0].weight.value == net.convs()[0].weight.value);
  CHECK(build_cdinn<double>(Head::shape, 10).convs()[0].weight.value != net.convs()[0].weight.value);
}

TEST_CASE("outputs lie in (0,1) and zero input stays finite") {
  const auto net = build_cdinn<float>(Head::shape, 3);
  const auto x = sample_input(5);
  const auto y = net.infer(x, 1);
  REQUIRE(y.size() == 32 * 32);
  for (float v : y) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  const std::vector<float> zero(32 * 32, 0.0f);
  for (float v : net.infer(zero, 1)) CHECK(std::isfinite(v));
}

TEST_CASE("infer is deterministic, batch-independent and agrees with the graph forward") {
  const auto net = build_cdinn<float>(Head::phase, 4);
  auto a = sample_input(1), b = sample_input(2);
  std::vector<float> both(a);
  both.insert(both.end(), b.begin(), b.end());
  const auto single = net.infer(a, 1);
  CHECK(single == net.infer(a, 1));
  const auto pair = net.infer(both, 2);
  CHECK(std::vector<float>(pair.begin(), pair.begin() + 1024) == single);

  auto copy = net;
  ag::Graph<float> g;
  auto out = copy.forward(g, g.constant({1, 1, 32, 32}, a));
  CHECK(std::vector<float>(out.values().begin(), out.values().end()) == single);
  CHECK_THROWS_AS(net.infer(std::vector<float>(100), 1), InvalidArgument);
}

TEST_CASE("prediction is invariant to pattern scale") {
  const auto s = build_cdinn<float>(Head::shape, 5);
  const auto p = build_cdinn<float>(Head::phase, 6);
  const auto pattern = sample_pattern(7);
  auto scaled = pattern;
  for (auto& v : scaled.amplitudes.values()) v *= 7.3;
  const auto a = predict_object(s, p, pattern);
  const auto b = predict_object(s, p, scaled);
  for (std::size_t i = 0; i < a.shape.size(); ++i) CHECK(std::abs(a.shape[i] - b.shape[i]) < 1e-5);
}

TEST_CASE("predicted phase is zero outside the thresholded shape and in range inside") {
  const auto s = build_cdinn<float>(Head::shape, 11);
  const auto p = build_cdinn<float>(Head::phase, 12);
  const auto pattern = sample_pattern(13);
  for (double thr : {0.1, 0.5, 0.6}) {
    const auto pred = predict_object(s, p, pattern, thr);
    for (std::size_t i = 0; i < pred.shape.size(); ++i) {
      if (pred.shape[i] < thr) {
        CHECK(pred.phase[i] == 0.0);
      } else {
        CHECK(std::abs(pred.phase[i]) <= std::numbers::pi);
      }
      CHECK(std::abs(pred.field[i]) == doctest::Approx(pred.shape[i]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(predict_object(s, p, pattern, 0.0), InvalidArgument);
  CHECK_THROWS_AS(predict_object(p, s, pattern), InvalidArgument);
}

TEST_CASE("batched prediction equals single prediction") {
  const auto s = build_cdinn<float>(Head::shape, 21);
  const auto p = build_cdinn<float>(Head::phase, 22);
  std::vector<fields::DiffractionPattern> pats{sample_pattern(1), sample_pattern(2), sample_pattern(3)};
  const auto many = predict_objects(s, p, pats);
  for (std::size_t k = 0; k < pats.size(); ++k) {
    const auto one = predict_object(s, p, pats[k]);
    CHECK(one.shape == many[k].shape);
    CHECK(one.phase == many[k].phase);
  }
}

TEST_CASE("weights round trip bit for bit and keep provenance") {
  test_support::TempDir dir;
  const auto net = build_cdinn<float>(Head::phase, 31);
  Provenance prov{.seed = 31, .epochs = 3, .final_train_loss = 0.25, .final_val_loss = 0.5, .note = "unit"};
  save_weights(net.to_bundle(prov), dir / "p.cdiw");
  const auto back = load_weights(dir / "p.cdiw", Head::phase);
  CHECK(back.spec == net.spec());
  CHECK(back.provenance.seed == 31);
  CHECK(back.provenance.epochs == 3);
  CHECK(back.provenance.final_val_loss == 0.5);
  CHECK(back.provenance.note == "unit");
  const auto net2 = Network<float>::from_bundle(back);
  const auto x = sample_input(4);
  CHECK(net.infer(x, 1) == net2.infer(x, 1));

  save_weights(net2.to_bundle(prov), dir / "q.cdiw");
  CHECK(test_support::file_bytes(dir / "p.cdiw") == test_support::file_bytes(dir / "q.cdiw"));
}

TEST_CASE("weight loading rejects wrong heads and corrupt files") {
  test_support::TempDir dir;
  save_weights(build_cdinn<float>(Head::shape, 1).to_bundle(), dir / "s.cdiw");
  CHECK(format_kind(dir / "s.cdiw", Head::phase) == static_cast<int>(FormatError::Kind::head));
  CHECK(format_kind(dir / "s.cdiw", Head::shape) == -1);

  auto bytes = test_support::file_bytes(dir / "s.cdiw");
  auto write = [&](const std::string& name, const std::vector<char>& b) {
    std::ofstream out(dir / name, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
    return dir / name;
  };
  auto magic = bytes;
  magic[1] = 'X';
  CHECK(format_kind(write("m.cdiw", magic)) == static_cast<int>(FormatError::Kind::magic));
  auto cut = bytes;
  cut.resize(cut.size() - 7);
  CHECK(format_kind(write("t.cdiw", cut)) == static_cast<int>(FormatError::Kind::truncated));
  auto extra = bytes;
  extra.push_back('z');
  CHECK(format_kind(write("x.cdiw", extra)) == static_cast<int>(FormatError::Kind::payload));
  CHECK_THROWS_AS(load_weights(dir / "none.cdiw"), IoError);
}

TEST_CASE("float/double casts preserve the network") {
  const auto f = build_cdinn<float>(Head::shape, 41);
  const auto d = f.cast<double>();
  const auto x = sample_input(6);
  const std::vector<double> xd(x.begin(), x.end());
  const auto yf = f.infer(x, 1);
  const auto yd = d.infer(xd, 1);
  for (std::size_t i = 0; i < yf.size(); ++i) CHECK(std::abs(yf[i] - yd[i]) < 1e-5);
}
