#include "cli.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "cdinn/baseline.hpp"
#include "cdinn/binary_io.hpp"
#include "cdinn/dataset.hpp"
#include "cdinn/error.hpp"
#include "cdinn/eval.hpp"
#include "cdinn/image.hpp"
#include "cdinn/model.hpp"
#include "cdinn/train.hpp"
#include "cdinn/version.hpp"

namespace cdinn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr char kFieldMagic[4] = {'C', 'D', 'I', 'F'};

struct GenerateArgs {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string out;
  data::GenerationConfig config;
};

struct TrainArgs {
  std::string data;
  std::string head = "shape";
  int epochs = 10;
  int batch = 256;
  std::optional<std::size_t> val_count;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::string out;
  std::string history;
};

struct PredictArgs {
  std::string snet, pnet, in, out;
  double threshold = 0.1;
};

struct EvalArgs {
  std::string snet, pnet, data, out;
  std::size_t k = 5;
  int bins = 20;
  double threshold = 0.1;
};

struct BenchArgs {
  std::string snet, pnet, data, out;
  std::size_t count = 20;
  std::uint64_t seed = 0;
  double threshold = 0.1;
  int hio = 560, er = 60;
  double beta = 0.9;
  int shrinkwrap_every = 20;
};

struct ActivationArgs {
  std::string net, data, out;
  std::size_t index = 0;
  int layer = 1;
};

void finish_manifest(Manifest& m, const fs::path& artifact) {
  m.finished_utc = utc_now();
  write_text_atomic(manifest_path(artifact), m.to_json().dump(2) + "\n");
}

Manifest start_manifest(const std::string& subcommand) {
  Manifest m;
  m.subcommand = subcommand;
  m.started_utc = utc_now();
  return m;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

data::Dataset load_nonempty(const std::string& path) {
  auto ds = data::load_dataset(path);
  if (ds.samples.empty()) throw InvalidArgument(path + " holds no samples");
  return ds;
}

fields::DiffractionPattern pattern_of(const data::Sample& s) {
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(s.pattern.size()))));
  return {RealGrid(n, std::vector<double>(s.pattern.begin(), s.pattern.end()))};
}

RealGrid grid_of(std::span<const float> v) {
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(v.size()))));
  return RealGrid(n, std::vector<double>(v.begin(), v.end()));
}

RealGrid phase_of(const data::Sample& s) {
  RealGrid g = grid_of(s.phase_target);
  for (auto& v : g.values()) v = fields::target_to_phase(v);
  return g;
}

// Log-scaled view so the weak outer fringes stay visible.
image::Gray log_view(const RealGrid& g) {
  RealGrid out(g.side());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::log10(1.0 + std::max(0.0, g[i]));
  return image::to_gray(out);
}

image::Gray phase_view(const RealGrid& g) { return image::to_gray(g, -std::numbers::pi, std::numbers::pi); }

std::pair<model::Network<float>, model::Network<float>> load_pair(const std::string& snet, const std::string& pnet) {
  auto s = model::load_weights(snet, model::Head::shape);
  auto p = model::load_weights(pnet, model::Head::phase);
  return {model::Network<float>::from_bundle(s), model::Network<float>::from_bundle(p)};
}

// ---------------------------------------------------------------- generate

int cmd_generate(const GenerateArgs& a) {
  if (a.count == 0) throw InvalidArgument("--count must be >= 1");
  a.config.validate();
  auto m = start_manifest("generate");
  data::write_dataset(a.out, a.count, a.seed, a.config);
  m.config = json::parse(a.config.to_json());
  m.config["count"] = a.count;
  m.seeds["master"] = a.seed;
  m.outputs = {a.out};
  finish_manifest(m, a.out);
  return ok;
}

// ---------------------------------------------------------------- train

int cmd_train(const TrainArgs& a) {
  train::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.head = model::head_from_string(a.head);
  cfg.seed = a.seed;
  cfg.adam.lr = a.lr;
  cfg.validation_count = a.val_count;
  auto m = start_manifest("train");
  const auto ds = load_nonempty(a.data);
  cfg.validate(ds.size());

  auto result = train::train(cfg, ds, [](const train::EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " (" << e.seconds
              << " s)\n";
  });
  model::save_weights(result.bundle, a.out);
  const std::string history = a.history.empty() ? a.out + ".history.json" : a.history;
  write_text_atomic(history, result.history.to_json() + "\n");

  m.config = json::parse(cfg.to_json());
  m.seeds["train"] = a.seed;
  m.inputs = {a.data};
  m.outputs = {a.out, history};
  finish_manifest(m, a.out);
  return ok;
}

// ---------------------------------------------------------------- predict

void write_fields(const fs::path& path, const std::vector<model::Prediction>& preds) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(kFieldMagic, 4);
    io::put_uint<std::uint16_t>(out, 1);
    io::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(preds.front().field.side()));
    io::put_uint<std::uint64_t>(out, preds.size());
    for (const auto& p : preds)
      for (const auto& v : p.field.values()) {
        io::put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v.real()));
        io::put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v.imag()));
      }
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

int cmd_predict(const PredictArgs& a) {
  if (!(a.threshold > 0.0 && a.threshold < 1.0)) throw InvalidArgument("--threshold must lie in (0, 1)");
  auto m = start_manifest("predict");
  const auto [snet, pnet] = load_pair(a.snet, a.pnet);
  const auto ds = load_nonempty(a.in);
  const fs::path dir(a.out);
  ensure_dir(dir);

  std::vector<model::Prediction> preds;
  std::vector<double> latency;
  preds.reserve(ds.size());
  for (const auto& s : ds.samples) {
    const auto pattern = pattern_of(s);
    const auto t0 = Clock::now();
    preds.push_back(model::predict_object(snet, pnet, pattern, a.threshold));
    latency.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "sample_%06zu", i);
    image::write_pgm(dir / (std::string(stem) + "_shape.pgm"), image::to_gray(preds[i].shape, 0.0, 1.0));
    image::write_pgm(dir / (std::string(stem) + "_phase.pgm"), phase_view(preds[i].phase));
  }
  write_fields(dir / "fields.cdif", preds);

  m.config = {{"threshold", a.threshold}, {"count", ds.size()}};
  m.inputs = {a.snet, a.pnet, a.in};
  m.outputs = {(dir / "fields.cdif").string(), dir.string()};
  m.extra["latency_ms"] = latency;
  m.extra["median_latency_ms"] = baseline::median(latency);
  finish_manifest(m, dir);
  return ok;
}

// ---------------------------------------------------------------- eval

std::vector<image::Gray> case_row(const data::Sample& s, const model::Prediction& p, const eval::EvalRecord& r) {
  return {log_view(grid_of(s.pattern)),
          log_view(r.predicted_intensity),
          image::to_gray(grid_of(s.shape_target), 0.0, 1.0),
          image::to_gray(p.shape, 0.0, 1.0),
          phase_view(phase_of(s)),
          phase_view(p.phase)};
}

int cmd_eval(const EvalArgs& a) {
  if (a.k == 0) throw InvalidArgument("--k must be >= 1");
  if (a.bins < 1) throw InvalidArgument("--bins must be >= 1");
  auto m = start_manifest("eval");
  const auto [snet, pnet] = load_pair(a.snet, a.pnet);
  const auto ds = load_nonempty(a.data);
  if (a.k > ds.size()) throw InvalidArgument("--k exceeds the number of samples");
  const fs::path dir(a.out);
  ensure_dir(dir);

  std::vector<fields::DiffractionPattern> patterns;
  for (const auto& s : ds.samples) patterns.push_back(pattern_of(s));
  const auto preds = model::predict_objects(snet, pnet, patterns, a.threshold);

  std::vector<eval::EvalRecord> records;
  std::ofstream lines(dir / "records.jsonl.tmp");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    records.push_back(eval::evaluate(preds[i], patterns[i], grid_of(ds.samples[i].shape_target), ds.samples[i].seed,
                                     a.threshold));
    lines << eval::to_json_line(records.back()) << '\n';
  }
  lines.close();
  if (!lines) throw IoError("write failed: records.jsonl");
  fs::rename(dir / "records.jsonl.tmp", dir / "records.jsonl");

  const auto hist = eval::error_histogram(records, a.bins);
  std::ostringstream csv;
  csv << "lower,upper,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b)
    csv << hist.edges[b] << ',' << hist.edges[b + 1] << ',' << hist.counts[b] << '\n';
  write_text_atomic(dir / "histogram.csv", csv.str());

  std::vector<std::size_t> by_seed(ds.size());
  std::iota(by_seed.begin(), by_seed.end(), std::size_t{0});
  auto index_of = [&](std::uint64_t seed) {
    return *std::find_if(by_seed.begin(), by_seed.end(), [&](std::size_t i) { return ds.samples[i].seed == seed; });
  };
  for (auto [order, name] : {std::pair{eval::Order::best, "best"}, std::pair{eval::Order::worst, "worst"}}) {
    std::vector<std::vector<image::Gray>> rows;
    for (const auto& r : eval::rank_cases(records, a.k, order)) {
      const auto i = index_of(r.seed);
      rows.push_back(case_row(ds.samples[i], preds[i], records[i]));
    }
    image::write_pgm(dir / (std::string(name) + ".pgm"), image::compose(rows));
  }

  double sum = 0.0, shape_sum = 0.0;
  std::size_t below = 0;
  for (const auto& r : records) {
    sum += r.chi2;
    shape_sum += r.shape_error;
    below += r.chi2 < 0.5;
  }
  const double n = static_cast<double>(records.size());
  json summary{{"schema_version", 1},
               {"count", records.size()},
               {"mean_chi2", sum / n},
               {"fraction_chi2_below_0_5", below / n},
               {"mean_shape_error", shape_sum / n}};
  write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");

  m.config = {{"k", a.k}, {"bins", a.bins}, {"threshold", a.threshold}};
  m.inputs = {a.snet, a.pnet, a.data};
  m.outputs = {(dir / "records.jsonl").string(), (dir / "histogram.csv").string(), (dir / "best.pgm").string(),
               (dir / "worst.pgm").string(), (dir / "summary.json").string()};
  finish_manifest(m, dir);
  std::cout << summary.dump() << '\n';
  return ok;
}

// ---------------------------------------------------------------- bench

int cmd_bench(const BenchArgs& a) {
  if (a.count == 0) throw InvalidArgument("--count must be >= 1");
  auto m = start_manifest("bench");
  const auto [snet, pnet] = load_pair(a.snet, a.pnet);
  const auto ds = load_nonempty(a.data);
  baseline::Schedule schedule;
  schedule.phases = {{baseline::Algorithm::hio, a.hio, a.beta}, {baseline::Algorithm::er, a.er, 0.0}};
  schedule.shrinkwrap_every = a.shrinkwrap_every;
  schedule.validate();
  const std::vector<data::Sample> samples(ds.samples.begin(),
                                          ds.samples.begin() + static_cast<std::ptrdiff_t>(std::min(a.count, ds.size())));
  const auto report = baseline::benchmark(snet, pnet, schedule, samples, a.threshold, a.seed);
  write_text_atomic(a.out, report.to_json() + "\n");

  m.config = json::parse(schedule.to_json());
  m.config["count"] = samples.size();
  m.config["threshold"] = a.threshold;
  m.seeds["retrieval"] = a.seed;
  m.inputs = {a.snet, a.pnet, a.data};
  m.outputs = {a.out};
  m.extra["hardware"] = report.hardware;
  finish_manifest(m, a.out);
  std::cout << "median nn " << report.median_nn_ms << " ms, iterative " << report.median_iter_ms << " ms, speedup "
            << report.speedup << "x\n";
  return ok;
}

// ---------------------------------------------------------------- activations

int cmd_activations(const ActivationArgs& a) {
  auto m = start_manifest("activations");
  const auto net = model::Network<float>::from_bundle(model::load_weights(a.net));
  const auto ds = load_nonempty(a.data);
  if (a.index >= ds.size()) throw InvalidArgument("--index is past the end of the data file");
  const auto input = data::normalize_pattern(ds.samples[a.index].pattern);
  const auto map = eval::activation_map(net, input, a.layer);
  image::write_pgm(a.out, image::to_gray(map));

  m.config = {{"layer", a.layer}, {"index", a.index}, {"head", model::to_string(net.head())}};
  m.inputs = {a.net, a.data};
  m.outputs = {a.out};
  finish_manifest(m, a.out);
  return ok;
}

}  // namespace

json Manifest::to_json() const {
  return {{"schema_version", 1}, {"subcommand", subcommand}, {"config", config},     {"inputs", inputs},
          {"outputs", outputs},  {"seeds", seeds},           {"extra", extra},       {"tool_version", kVersion},
          {"started_utc", started_utc}, {"finished_utc", finished_utc}};
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path manifest_path(const fs::path& artifact) {
  if (fs::is_directory(artifact)) return artifact / "manifest.json";
  auto p = artifact;
  p += ".manifest.json";
  return p;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Coherent diffraction imaging with convolutional networks"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Synthesize a CDIN dataset");
  g->add_option("--count", gen.count, "number of samples")->required();
  g->add_option("--seed", gen.seed, "master seed")->required();
  g->add_option("--out", gen.out, "output .cdin file")->required();
  g->add_option("--min-points", gen.config.object.min_points, "fewest random hull points");
  g->add_option("--max-points", gen.config.object.max_points, "most random hull points");
  g->add_option("--blur-sigma", gen.config.blur_sigma, "shape blur sigma (pixels)");
  g->add_option("--phase-sigma", gen.config.phase_sigma, "phase smoothing sigma (pixels)");
  g->add_option("--phi-max-lo", gen.config.phi_max_lo, "lower bound of the phase amplitude");
  g->add_option("--phi-max-hi", gen.config.phi_max_hi, "upper bound of the phase amplitude");
  g->add_flag("--constant-phase", gen.config.constant_phase, "zero phase everywhere");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one head");
  t->add_option("--data", tr.data, "training .cdin file")->required();
  t->add_option("--head", tr.head, "shape or phase")->check(CLI::IsMember({"shape", "phase"}));
  t->add_option("--epochs", tr.epochs, "epochs")->check(CLI::PositiveNumber);
  t->add_option("--batch", tr.batch, "mini-batch size")->check(CLI::PositiveNumber);
  t->add_option("--val-count", tr.val_count, "validation samples (default: size / 9)");
  t->add_option("--seed", tr.seed, "initialization and shuffling seed");
  t->add_option("--lr", tr.lr, "ADAM learning rate");
  t->add_option("--out", tr.out, "output .cdim file")->required();
  t->add_option("--history", tr.history, "history JSON (default: <out>.history.json)");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Invert diffraction patterns");
  p->add_option("--snet", pr.snet, "shape network .cdim")->required();
  p->add_option("--pnet", pr.pnet, "phase network .cdim")->required();
  p->add_option("--in", pr.in, ".cdin file with patterns")->required();
  p->add_option("--threshold", pr.threshold, "support threshold");
  p->add_option("--out", pr.out, "output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a trained pair on a dataset");
  e->add_option("--snet", ev.snet, "shape network .cdim")->required();
  e->add_option("--pnet", ev.pnet, "phase network .cdim")->required();
  e->add_option("--data", ev.data, ".cdin test file")->required();
  e->add_option("--k", ev.k, "cases in the best/worst panels");
  e->add_option("--bins", ev.bins, "histogram bins");
  e->add_option("--threshold", ev.threshold, "support threshold");
  e->add_option("--out", ev.out, "output directory")->required();

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Network vs iterative retrieval timing");
  b->add_option("--snet", be.snet, "shape network .cdim")->required();
  b->add_option("--pnet", be.pnet, "phase network .cdim")->required();
  b->add_option("--data", be.data, ".cdin file")->required();
  b->add_option("--count", be.count, "samples to benchmark");
  b->add_option("--seed", be.seed, "retrieval seed");
  b->add_option("--threshold", be.threshold, "support threshold");
  b->add_option("--hio", be.hio, "HIO iterations");
  b->add_option("--er", be.er, "ER iterations");
  b->add_option("--beta", be.beta, "HIO feedback");
  b->add_option("--shrinkwrap-every", be.shrinkwrap_every, "shrinkwrap cadence (0 disables)");
  b->add_option("--out", be.out, "report JSON")->required();

  ActivationArgs ac;
  auto* a = app.add_subcommand("activations", "Mean activation map of one conv layer");
  a->add_option("--net", ac.net, "network .cdim")->required();
  a->add_option("--data", ac.data, ".cdin file")->required();
  a->add_option("--index", ac.index, "sample index");
  a->add_option("--layer", ac.layer, "conv layer, 1-based")->required();
  a->add_option("--out", ac.out, "output PGM")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? ok : usage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*p) return cmd_predict(pr);
    if (*e) return cmd_eval(ev);
    if (*b) return cmd_bench(be);
    if (*a) return cmd_activations(ac);
  } catch (const InvalidArgument& err) {
    std::cerr << "error: " << err.what() << '\n';
    return usage;
  } catch (const FormatError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return err.kind() == FormatError::Kind::head ? model_mismatch : io;
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return io;
  } catch (const NumericAbort& err) {
    std::cerr << "error: " << err.what() << '\n';
    return numeric_abort;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return failure;
  }
  return usage;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("cdinn");
  for (const auto& s : args) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cdinn::cli
