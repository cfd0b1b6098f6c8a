#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdinn/adam.hpp"
#include "cdinn/dataset.hpp"
#include "cdinn/model.hpp"

namespace cdinn::train {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 256;
  ag::AdamConfig adam{};
  model::Head head = model::Head::shape;
  std::uint64_t seed = 0;
  /// Defaults to dataset size / 9 (20,000 of 180,000).
  std::optional<std::size_t> validation_count;

  std::size_t resolved_validation_count(std::size_t dataset_size) const;
  void validate(std::size_t dataset_size) const;
  std::string to_json() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// [{epoch, train_loss, val_loss, seconds}, ...]
  std::string to_json() const;
  static TrainHistory from_json(const std::string& text);
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle of 0..size-1, the first `validation_count` going to validation.
Split split_dataset(std::size_t size, std::size_t validation_count, std::uint64_t seed);

/// Network input and target for one sample under `head`.
std::span<const float> target_of(const data::Sample& sample, model::Head head);

/// Mean BCE of `net` over `indices`; no weight mutation.
double validate(const model::Network<float>& net, const data::Dataset& dataset,
                std::span<const std::size_t> indices, int batch_size = 256);

struct TrainResult {
  model::WeightBundle bundle;
  TrainHistory history;
  model::Network<float> network;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded shuffles, mini-batch BCE + backward + ADAM, validation at the end
/// of every epoch. Starts from build_cdinn(head, seed) unless `initial` is
/// given. Throws NumericAbort on a non-finite batch loss.
TrainResult train(const TrainConfig& config, const data::Dataset& dataset, const EpochCallback& on_epoch = {},
                  const model::Network<float>* initial = nullptr);

/// Training on explicit index sets (validation may be empty only when
/// epochs are run purely for probing; then val_loss is NaN).
TrainResult train_on(const TrainConfig& config, const data::Dataset& dataset, std::span<const std::size_t> train_idx,
                     std::span<const std::size_t> val_idx, const EpochCallback& on_epoch = {},
                     const model::Network<float>* initial = nullptr);

}  // namespace cdinn::train
