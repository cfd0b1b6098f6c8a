#include "cdinn/dataset.hpp"

#include <algorithm>
#include <exception>
#include <mutex>

#include "cdinn/binary_io.hpp"
#include "cdinn/error.hpp"
#include "json.hpp"

namespace cdinn::data {
namespace {

constexpr char kMagic[] = "CDIN";
constexpr std::size_t kChunk = 512;

std::vector<float> to_f32(std::span<const double> v) {
  return {v.begin(), v.end()};
}

}  // namespace

void GenerationConfig::validate() const {
  if (object.grid_n < 8 || (object.grid_n & (object.grid_n - 1)) != 0)
    throw InvalidArgument("generation: grid side must be a power of two >= 8");
  if (object.min_points < 3) throw InvalidArgument("generation: point count range must start at >= 3");
  if (object.max_points < object.min_points) throw InvalidArgument("generation: empty point count range");
  if (blur_sigma < 0.0) throw InvalidArgument("generation: blur sigma must be >= 0");
  if (phase_sigma < 0.0) throw InvalidArgument("generation: phase sigma must be >= 0");
  if (!constant_phase && !(phi_max_lo > 0.0 && phi_max_lo <= phi_max_hi && phi_max_hi <= std::numbers::pi))
    throw InvalidArgument("generation: phase range must satisfy 0 < lo <= hi <= pi");
  if (!(support_threshold > 0.0 && support_threshold < 1.0))
    throw InvalidArgument("generation: support threshold must lie in (0,1)");
}

std::string GenerationConfig::to_json() const {
  nlohmann::json j{
      {"grid_n", object.grid_n},
      {"min_points", object.min_points},
      {"max_points", object.max_points},
      {"window", object.window},
      {"min_area", object.min_area},
      {"max_retries", object.max_retries},
      {"blur_sigma", blur_sigma},
      {"phase_sigma", phase_sigma},
      {"phi_max_lo", phi_max_lo},
      {"phi_max_hi", phi_max_hi},
      {"constant_phase", constant_phase},
      {"support_threshold", support_threshold},
  };
  return j.dump();
}

GenerationConfig GenerationConfig::from_json(const std::string& text) {
  GenerationConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.object.grid_n = j.at("grid_n");
    c.object.min_points = j.at("min_points");
    c.object.max_points = j.at("max_points");
    c.object.window = j.at("window");
    c.object.min_area = j.at("min_area");
    c.object.max_retries = j.at("max_retries");
    c.blur_sigma = j.at("blur_sigma");
    c.phase_sigma = j.at("phase_sigma");
    c.phi_max_lo = j.at("phi_max_lo");
    c.phi_max_hi = j.at("phi_max_hi");
    c.constant_phase = j.at("constant_phase");
    c.support_threshold = j.at("support_threshold");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::payload, std::string("generation config: ") + e.what());
  }
  return c;
}

SampleDetail generate_detail(std::uint64_t seed, const GenerationConfig& config) {
  Rng rng(seed);
  SampleDetail d;
  d.object = fields::random_convex_object(rng, config.object);
  d.shape.grid = config.blur_sigma > 0.0 ? fields::gaussian_blur(d.object.shape.grid, config.blur_sigma)
                                         : d.object.shape.grid;
  for (auto& v : d.shape.grid.values()) v = std::clamp(v, 0.0, 1.0);
  d.shape.support = fields::threshold_mask(d.shape.grid, config.support_threshold);

  if (config.constant_phase) {
    d.phase.grid = RealGrid(config.grid_n());
  } else {
    d.phi_max = rng.uniform(config.phi_max_lo, config.phi_max_hi);
    d.phase = fields::random_phase_field(rng, d.shape, d.phi_max, config.phase_sigma);
  }
  d.field = fields::assemble_object(d.shape, d.phase);
  d.pattern = fields::diffraction_amplitudes(d.field);
  return d;
}

Sample to_sample(const SampleDetail& d, std::uint64_t seed) {
  Sample s;
  s.pattern = to_f32(d.pattern.amplitudes.values());
  s.shape_target = to_f32(d.shape.grid.values());
  s.phase_target.resize(d.phase.grid.size());
  for (std::size_t i = 0; i < d.phase.grid.size(); ++i)
    s.phase_target[i] = static_cast<float>(fields::phase_to_target(d.phase.grid[i]));
  s.seed = seed;
  return s;
}

Sample generate_sample(std::uint64_t seed, const GenerationConfig& config) {
  return to_sample(generate_detail(seed, config), seed);
}

void generate_dataset(std::size_t count, std::uint64_t master_seed, const GenerationConfig& config,
                      const SampleSink& sink, const Progress& progress) {
  if (count < 1) throw InvalidArgument("generate_dataset: count must be >= 1");
  config.validate();

  std::vector<Sample> chunk;
  for (std::size_t base = 0; base < count; base += kChunk) {
    const std::size_t n = std::min(kChunk, count - base);
    chunk.assign(n, Sample{});
    std::exception_ptr failure;
    std::mutex failure_mutex;
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      try {
        chunk[i] = generate_sample(sample_seed(master_seed, base + i), config);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t i = 0; i < n; ++i) {
      try {
        sink(base + i, chunk[i]);
      } catch (const IoError& e) {
        throw IoError("sample " + std::to_string(base + i) + ": " + e.what());
      } catch (const std::ios_base::failure& e) {
        throw IoError("sample " + std::to_string(base + i) + ": " + e.what());
      }
    }
    if (progress) progress(base + n, count);
  }
}

Dataset generate_dataset(std::size_t count, std::uint64_t master_seed, const GenerationConfig& config) {
  Dataset ds;
  ds.header.grid_n = static_cast<std::uint16_t>(config.grid_n());
  ds.header.count = count;
  ds.header.master_seed = master_seed;
  ds.header.config_json = config.to_json();
  ds.samples.reserve(count);
  generate_dataset(count, master_seed, config,
                   [&](std::size_t, const Sample& s) { ds.samples.push_back(s); });
  return ds;
}

DatasetWriter::DatasetWriter(const std::filesystem::path& path, const DatasetHeader& header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), header_(header) {
  if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  out_.write(kMagic, 4);
  io::put_uint<std::uint16_t>(out_, header_.version);
  io::put_uint<std::uint16_t>(out_, header_.grid_n);
  io::put_uint<std::uint64_t>(out_, header_.count);
  io::put_uint<std::uint64_t>(out_, header_.master_seed);
  io::put_blob(out_, header_.config_json);
  if (!out_) throw IoError("write failed on " + path_.string());
}

void DatasetWriter::append(const Sample& s) {
  const std::size_t cells = static_cast<std::size_t>(header_.grid_n) * header_.grid_n;
  if (s.pattern.size() != cells || s.shape_target.size() != cells || s.phase_target.size() != cells)
    throw InvalidArgument("DatasetWriter: sample grid does not match header");
  io::put_f32_array<float>(out_, s.pattern);
  io::put_f32_array<float>(out_, s.shape_target);
  io::put_f32_array<float>(out_, s.phase_target);
  io::put_uint<std::uint64_t>(out_, s.seed);
  if (!out_) throw IoError("write failed on " + path_.string());
  ++written_;
}

void DatasetWriter::finish() {
  if (written_ != header_.count)
    throw InvalidArgument("DatasetWriter: header promises " + std::to_string(header_.count) +
                          " samples, wrote " + std::to_string(written_));
  out_.flush();
  out_.close();
  if (out_.fail()) throw IoError("closing " + path_.string() + " failed");
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open " + path.string());
  io::expect_magic(in_, kMagic, "dataset header");
  header_.version = io::get_uint<std::uint16_t>(in_, "dataset version");
  if (header_.version != kDatasetVersion)
    throw FormatError(FormatError::Kind::version,
                      "dataset version " + std::to_string(header_.version) + " is not supported");
  header_.grid_n = io::get_uint<std::uint16_t>(in_, "grid side");
  header_.count = io::get_uint<std::uint64_t>(in_, "sample count");
  header_.master_seed = io::get_uint<std::uint64_t>(in_, "master seed");
  header_.config_json = io::get_blob(in_, "generation config");
  if (header_.grid_n < 2) throw FormatError(FormatError::Kind::shape, "dataset grid side is invalid");
}

std::optional<Sample> DatasetReader::next() {
  if (read_ >= header_.count) return std::nullopt;
  const std::size_t cells = static_cast<std::size_t>(header_.grid_n) * header_.grid_n;
  Sample s;
  s.pattern.resize(cells);
  s.shape_target.resize(cells);
  s.phase_target.resize(cells);
  const std::string where = "sample " + std::to_string(read_);
  io::get_f32_array<float>(in_, s.pattern, where);
  io::get_f32_array<float>(in_, s.shape_target, where);
  io::get_f32_array<float>(in_, s.phase_target, where);
  s.seed = io::get_uint<std::uint64_t>(in_, where);
  ++read_;
  return s;
}

void write_dataset(const std::filesystem::path& path, std::size_t count, std::uint64_t master_seed,
                   const GenerationConfig& config, const Progress& progress) {
  if (count < 1) throw InvalidArgument("generate_dataset: count must be >= 1");
  config.validate();
  DatasetHeader header;
  header.grid_n = static_cast<std::uint16_t>(config.grid_n());
  header.count = count;
  header.master_seed = master_seed;
  header.config_json = config.to_json();
  DatasetWriter writer(path, header);
  generate_dataset(count, master_seed, config,
                   [&](std::size_t, const Sample& s) { writer.append(s); }, progress);
  writer.finish();
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  DatasetHeader header = dataset.header;
  header.count = dataset.samples.size();
  DatasetWriter writer(path, header);
  for (const auto& s : dataset.samples) writer.append(s);
  writer.finish();
}

Dataset load_dataset(const std::filesystem::path& path) {
  DatasetReader reader(path);
  Dataset ds;
  ds.header = reader.header();
  ds.samples.reserve(ds.header.count);
  while (auto s = reader.next()) ds.samples.push_back(std::move(*s));
  return ds;
}

std::vector<float> normalize_pattern(std::span<const float> pattern) {
  // Divide in double so the result matches model::network_input bit for bit.
  std::vector<float> out(pattern.size(), 0.0f);
  const double peak = pattern.empty() ? 0.0 : *std::max_element(pattern.begin(), pattern.end());
  if (peak > 0.0)
    for (std::size_t i = 0; i < pattern.size(); ++i) out[i] = static_cast<float>(pattern[i] / peak);
  return out;
}

}  // namespace cdinn::data
