#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cdinn/fields.hpp"

namespace cdinn::data {

inline constexpr std::uint16_t kDatasetVersion = 1;

/// Everything that shapes one synthetic sample. Echoed into the file header.
struct GenerationConfig {
  fields::ObjectParams object{};
  double blur_sigma = 1.0;
  double phase_sigma = 2.0;
  double phi_max_lo = 0.1;
  double phi_max_hi = std::numbers::pi;
  bool constant_phase = false;  // zero phase everywhere, skips the phase draw
  double support_threshold = 0.1;

  int grid_n() const noexcept { return object.grid_n; }
  void validate() const;
  std::string to_json() const;
  static GenerationConfig from_json(const std::string& text);
};

/// Stored sample: raw amplitudes plus the two network targets (float32).
struct Sample {
  std::vector<float> pattern;       // |FT|, unnormalized
  std::vector<float> shape_target;  // [0,1]
  std::vector<float> phase_target;  // (phi + pi) / (2 pi)
  std::uint64_t seed = 0;
};

/// Double-precision intermediates of one sample, for tests and evaluation.
struct SampleDetail {
  fields::ConvexObject object;  // pre-blur hull raster
  fields::ShapeField shape;     // blurred
  fields::PhaseField phase;
  double phi_max = 0.0;
  ComplexField field;
  fields::DiffractionPattern pattern;
};

SampleDetail generate_detail(std::uint64_t seed, const GenerationConfig& config);
Sample to_sample(const SampleDetail& detail, std::uint64_t seed);
Sample generate_sample(std::uint64_t seed, const GenerationConfig& config);

struct DatasetHeader {
  std::uint16_t version = kDatasetVersion;
  std::uint16_t grid_n = 32;
  std::uint64_t count = 0;
  std::uint64_t master_seed = 0;
  std::string config_json;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Sample> samples;
  std::size_t size() const noexcept { return samples.size(); }
};

using SampleSink = std::function<void(std::size_t index, const Sample&)>;
using Progress = std::function<void(std::size_t done, std::size_t total)>;

/// Generates samples 0..count-1 and hands them to `sink` in index order.
/// Samples are produced in parallel chunks; the output does not depend on
/// the number of threads. Sink failures are rethrown as IoError carrying the
/// sample index.
void generate_dataset(std::size_t count, std::uint64_t master_seed, const GenerationConfig& config,
                      const SampleSink& sink, const Progress& progress = {});

/// In-memory convenience over generate_dataset.
Dataset generate_dataset(std::size_t count, std::uint64_t master_seed, const GenerationConfig& config);

/// Streaming CDIN writer. `finish` checks that exactly header.count samples
/// were appended.
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& path, const DatasetHeader& header);
  void append(const Sample& sample);
  void finish();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  DatasetHeader header_;
  std::uint64_t written_ = 0;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);
  const DatasetHeader& header() const noexcept { return header_; }
  /// Next record, or nullopt after the last one.
  std::optional<Sample> next();

 private:
  std::ifstream in_;
  DatasetHeader header_;
  std::uint64_t read_ = 0;
};

void write_dataset(const std::filesystem::path& path, std::size_t count, std::uint64_t master_seed,
                   const GenerationConfig& config, const Progress& progress = {});
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

/// Pattern divided by its own maximum (all-zero patterns stay zero).
std::vector<float> normalize_pattern(std::span<const float> pattern);

}  // namespace cdinn::data
