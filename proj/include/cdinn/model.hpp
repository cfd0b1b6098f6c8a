#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdinn/autograd.hpp"
#include "cdinn/fields.hpp"

namespace cdinn::model {

using ag::Activation;

/// Which target a network is trained against.
enum class Head : std::uint8_t { shape = 0, phase = 1 };

std::string to_string(Head head);
Head head_from_string(const std::string& name);

enum class LayerKind : std::uint8_t { conv, maxpool, upsample };

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  Activation activation = Activation::none;

  bool operator==(const LayerSpec&) const = default;
};

/// Ordered layers plus the head they serve. Shape traces are [C, H, W].
struct NetworkSpec {
  Head head = Head::shape;
  int input_side = 32;
  std::vector<LayerSpec> layers;

  /// conv(32) conv(32) pool conv(64) conv(64) pool | up conv(64) up conv(32) conv(1, sigmoid)
  static NetworkSpec cdinn(Head head);

  /// Throws InvalidArgument if the spec breaks the CDI network invariants:
  /// relu on every hidden conv, sigmoid on the last, 32 filters on the 2nd
  /// conv, 64 on the 4th, and a 32-16-8-16-32 spatial trace.
  void validate() const;

  std::vector<std::array<int, 3>> shape_trace() const;
  /// Sizes of the parameter arrays in storage order (w, b per conv layer).
  std::vector<std::size_t> parameter_sizes() const;
  int conv_count() const;

  std::string to_json() const;
  static NetworkSpec from_json(const std::string& text);

  bool operator==(const NetworkSpec&) const = default;
};

/// Provenance carried by weight files.
struct Provenance {
  std::uint64_t seed = 0;
  int epochs = 0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  std::string note;
};

/// Trained parameters detached from any network instance (float32, storage order).
struct WeightBundle {
  NetworkSpec spec;
  std::vector<std::vector<float>> params;
  Provenance provenance;
};

inline constexpr std::uint16_t kWeightsVersion = 1;

void save_weights(const WeightBundle& bundle, const std::filesystem::path& path);
/// Throws FormatError (magic, version, shape, truncated, head, payload) or
/// IoError; nothing is returned unless the whole file decoded. With
/// `expected` set, a bundle for the other head is rejected as Kind::head.
WeightBundle load_weights(const std::filesystem::path& path, std::optional<Head> expected = std::nullopt);

template <typename T>
struct ConvParams {
  ag::Parameter<T> weight;
  ag::Parameter<T> bias;
};

/// A CDI network instance. Immutable during inference; `infer` keeps no
/// state between calls and may be called concurrently.
template <typename T>
class Network {
 public:
  Network() = default;
  /// Glorot-uniform weights, zero biases, drawn layer by layer from `seed`.
  Network(NetworkSpec spec, std::uint64_t seed);

  static Network from_bundle(const WeightBundle& bundle);
  WeightBundle to_bundle(const Provenance& provenance = {}) const;

  template <typename U>
  Network<U> cast() const;

  const NetworkSpec& spec() const noexcept { return spec_; }
  Head head() const noexcept { return spec_.head; }
  std::size_t parameter_count() const;
  std::vector<ag::Parameter<T>*> parameters();
  const std::vector<ConvParams<T>>& convs() const noexcept { return convs_; }
  std::vector<ConvParams<T>>& convs() noexcept { return convs_; }

  /// Graph forward for x of shape [N, 1, S, S]. When `conv_outputs` is given
  /// it receives every conv layer's post-activation tensor.
  ag::Tensor<T> forward(ag::Graph<T>& graph, ag::Tensor<T> x,
                        std::vector<ag::Tensor<T>>* conv_outputs = nullptr);

  /// Graph-free forward for `batch` inputs of S*S values. Uses the same
  /// kernels as `forward`, so results agree bit for bit.
  std::vector<T> infer(std::span<const T> input, int batch,
                       std::vector<std::vector<T>>* conv_outputs = nullptr) const;

 private:
  NetworkSpec spec_;
  std::vector<ConvParams<T>> convs_;
};

/// The sCDI/pCDI pair. Same spec apart from the head, independent seeds.
template <typename T>
Network<T> build_cdinn(Head head, std::uint64_t seed) {
  return Network<T>(NetworkSpec::cdinn(head), seed);
}

/// Output of the paired networks for one pattern.
struct Prediction {
  RealGrid shape;      // sigmoid output of the shape net
  RealGrid phase;      // radians, zero where shape < threshold
  ComplexField field;  // shape * exp(i phase)
};

/// Max-normalizes the pattern, runs both nets, maps the phase output from
/// [0,1] back to [-pi, pi] and zeroes it outside the thresholded shape.
Prediction predict_object(const Network<float>& shape_net, const Network<float>& phase_net,
                          const fields::DiffractionPattern& pattern, double threshold = 0.1);

/// Same, for many patterns at once (one batched pass per net).
std::vector<Prediction> predict_objects(const Network<float>& shape_net, const Network<float>& phase_net,
                                        std::span<const fields::DiffractionPattern> patterns,
                                        double threshold = 0.1);

/// Max-normalized float input for the networks.
std::vector<float> network_input(const fields::DiffractionPattern& pattern);

}  // namespace cdinn::model
