#include "cdinn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "cdinn/error.hpp"
#include "cdinn/rng.hpp"
#include "json.hpp"

namespace cdinn::train {
namespace {

using nlohmann::json;

// Packs normalized inputs and targets of `indices` into NCHW buffers.
void gather(const data::Dataset& ds, std::span<const std::size_t> indices, model::Head head,
            std::vector<float>& input, std::vector<float>* target) {
  const std::size_t cells = ds.samples.front().pattern.size();
  input.resize(indices.size() * cells);
  if (target) target->resize(indices.size() * cells);
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const auto& s = ds.samples[indices[n]];
    const auto x = data::normalize_pattern(s.pattern);
    std::copy(x.begin(), x.end(), input.begin() + n * cells);
    if (target) {
      const auto t = target_of(s, head);
      std::copy(t.begin(), t.end(), target->begin() + n * cells);
    }
  }
}

double bce_sum(std::span<const float> pred, std::span<const float> target) {
  const double lo = ag::kBceClamp, hi = 1.0 - ag::kBceClamp;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred[i]), lo, hi);
    const double t = target[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log1p(-p);
  }
  return acc;
}

}  // namespace

std::size_t TrainConfig::resolved_validation_count(std::size_t dataset_size) const {
  return validation_count.value_or(dataset_size / 9);
}

void TrainConfig::validate(std::size_t dataset_size) const {
  if (dataset_size == 0) throw InvalidArgument("train: dataset is empty");
  if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("train: batch size must be >= 1");
  if (resolved_validation_count(dataset_size) >= dataset_size)
    throw InvalidArgument("train: validation count must be smaller than the dataset");
  if (!(adam.lr >= 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0))
    throw InvalidArgument("train: invalid ADAM hyperparameters");
}

std::string TrainConfig::to_json() const {
  json j{{"epochs", epochs},
         {"batch_size", batch_size},
         {"lr", adam.lr},
         {"beta1", adam.beta1},
         {"beta2", adam.beta2},
         {"eps", adam.eps},
         {"head", model::to_string(head)},
         {"seed", seed}};
  j["validation_count"] = validation_count ? json(*validation_count) : json(nullptr);
  return j.dump();
}

std::string TrainHistory::to_json() const {
  json rows = json::array();
  for (const auto& e : epochs) {
    json r{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"seconds", e.seconds}};
    r["val_loss"] = std::isfinite(e.val_loss) ? json(e.val_loss) : json(nullptr);
    rows.push_back(std::move(r));
  }
  return json{{"schema_version", 1}, {"epochs", std::move(rows)}}.dump(2);
}

TrainHistory TrainHistory::from_json(const std::string& text) {
  TrainHistory h;
  try {
    const json doc = json::parse(text);
    for (const auto& r : doc.at("epochs")) {
      EpochRecord e;
      e.epoch = r.at("epoch");
      e.train_loss = r.at("train_loss");
      e.val_loss = r.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN() : r.at("val_loss").get<double>();
      e.seconds = r.at("seconds");
      h.epochs.push_back(e);
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::payload, std::string("train history: ") + e.what());
  }
  return h;
}

Split split_dataset(std::size_t size, std::size_t validation_count, std::uint64_t seed) {
  if (validation_count < 1) throw InvalidArgument("split_dataset: validation count must be >= 1");
  if (validation_count >= size) throw InvalidArgument("split_dataset: validation count must be below the dataset size");
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix64(seed ^ 0x5eed5011751ULL));
  rng.shuffle(std::span(order));
  Split s;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(validation_count));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(validation_count), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::span<const float> target_of(const data::Sample& sample, model::Head head) {
  return head == model::Head::shape ? std::span<const float>(sample.shape_target)
                                    : std::span<const float>(sample.phase_target);
}

double validate(const model::Network<float>& net, const data::Dataset& dataset, std::span<const std::size_t> indices,
                int batch_size) {
  if (indices.empty()) throw InvalidArgument("validate: empty validation set");
  if (batch_size < 1) throw InvalidArgument("validate: batch size must be >= 1");
  std::vector<float> input, target;
  double total = 0.0;
  std::size_t cells = 0;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto batch = indices.subspan(start, std::min<std::size_t>(batch_size, indices.size() - start));
    gather(dataset, batch, net.head(), input, &target);
    const auto out = net.infer(input, static_cast<int>(batch.size()));
    total += bce_sum(out, target);
    cells += out.size();
  }
  return total / static_cast<double>(cells);
}

TrainResult train_on(const TrainConfig& config, const data::Dataset& dataset, std::span<const std::size_t> train_idx,
                     std::span<const std::size_t> val_idx, const EpochCallback& on_epoch,
                     const model::Network<float>* initial) {
  if (train_idx.empty()) throw InvalidArgument("train: no training samples");
  model::Network<float> net = initial ? *initial : model::build_cdinn<float>(config.head, config.seed);
  if (net.head() != config.head) throw InvalidArgument("train: initial network serves the other head");
  const int side = net.spec().input_side;
  for (auto i : train_idx)
    if (dataset.samples.at(i).pattern.size() != static_cast<std::size_t>(side) * side)
      throw InvalidArgument("train: sample grid does not match the network input");

  ag::AdamState<float> adam{config.adam, {}, {}, 0};
  const auto params = net.parameters();
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  std::vector<float> input, target;

  TrainResult result;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(mix64(config.seed) ^ mix64(static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span(order));

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto batch = std::span(order).subspan(start, std::min<std::size_t>(config.batch_size, order.size() - start));
      gather(dataset, batch, config.head, input, &target);
      const int n = static_cast<int>(batch.size());

      ag::Graph<float> graph;
      auto x = graph.constant({n, 1, side, side}, input);
      auto y = net.forward(graph, x);
      auto loss = ag::bce_loss(y, graph.constant(y.shape(), target));
      const double value = loss.item();
      if (!std::isfinite(value))
        throw NumericAbort(epoch, batches + 1,
                           "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches + 1));
      graph.backward(loss);
      ag::adam_step<float>(params, adam);
      loss_sum += value;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / batches;
    rec.val_loss = val_idx.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : validate(net, dataset, val_idx, config.batch_size);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  model::Provenance prov;
  prov.seed = config.seed;
  prov.epochs = config.epochs;
  prov.final_train_loss = result.history.epochs.back().train_loss;
  prov.final_val_loss = result.history.epochs.back().val_loss;
  if (!std::isfinite(prov.final_val_loss)) prov.final_val_loss = -1.0;
  result.bundle = net.to_bundle(prov);
  result.network = std::move(net);
  return result;
}

TrainResult train(const TrainConfig& config, const data::Dataset& dataset, const EpochCallback& on_epoch,
                  const model::Network<float>* initial) {
  config.validate(dataset.size());
  const std::size_t val_count = config.resolved_validation_count(dataset.size());
  if (val_count == 0) {
    std::vector<std::size_t> all(dataset.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return train_on(config, dataset, all, {}, on_epoch, initial);
  }
  const Split split = split_dataset(dataset.size(), val_count, config.seed);
  return train_on(config, dataset, split.train, split.validation, on_epoch, initial);
}

}  // namespace cdinn::train
