#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cdinn::ag {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Trainable array living outside any graph.
template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, Shape s) : name(std::move(n)), shape(std::move(s)) {
    value.assign(numel(shape), T{0});
    grad.assign(value.size(), T{0});
  }
};

enum class Backend { parallel, reference };

/// Kernel family used by ops created on this thread.
void set_backend(Backend backend);
Backend backend();

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Graph<T>* graph, int id) : graph_(graph), id_(id) {}

  int id() const noexcept { return id_; }
  Graph<T>& graph() const noexcept { return *graph_; }
  const Shape& shape() const;
  std::size_t size() const;
  std::span<const T> values() const;
  /// Empty until backward reached this node.
  std::span<const T> grad() const;
  T item() const;

 private:
  Graph<T>* graph_ = nullptr;
  int id_ = -1;
};

/// Append-only tape. Nodes are stored in creation order, which is a
/// topological order, so backward is a single reverse sweep. One graph is
/// used by one thread at a time.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // lazily materialized
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor<T> constant(Shape shape, std::vector<T> value);
  /// Leaf that receives a gradient (readable through Tensor::grad).
  Tensor<T> variable(Shape shape, std::vector<T> value);
  /// Leaf bound to `param`; backward overwrites param.grad.
  Tensor<T> parameter(Parameter<T>& param);

  /// Internal: appends an op result.
  Tensor<T> emit(Shape shape, std::vector<T> value, bool requires_grad, BackwardFn backward);

  /// Reverse sweep from a scalar. Gradients add across fan-out. Every
  /// parameter bound to this graph ends with its gradient (zero when the
  /// loss does not depend on it).
  void backward(Tensor<T> loss);

  Node& node(int id) { return *nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return *nodes_[static_cast<std::size_t>(id)]; }
  /// Gradient buffer of `id`, zero-filled on first access.
  std::vector<T>& grad(int id);
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Fingerprint of the discrete choices made so far (ReLU signs, pooling
  /// winners, BCE clamping). Two evaluations with equal fingerprints lie on
  /// the same smooth piece of the loss.
  std::uint64_t branch_signature() const noexcept { return branches_; }
  void note_branches(std::uint64_t word) noexcept;

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  std::uint64_t branches_ = 0;
};

// Ops. Image tensors are [C, H, W] or [N, C, H, W]; results keep the rank.

/// 'Same' zero-padded stride-1 convolution; w is [C_out, C_in, k, k], k odd.
template <typename T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> b);

template <typename T>
Tensor<T> maxpool2(Tensor<T> x);

template <typename T>
Tensor<T> upsample2(Tensor<T> x);

enum class Activation : std::uint8_t { none = 0, relu = 1, sigmoid = 2 };

template <typename T>
Tensor<T> relu(Tensor<T> x);

template <typename T>
Tensor<T> sigmoid(Tensor<T> x);

template <typename T>
Tensor<T> activation(Tensor<T> x, Activation kind);

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
template <typename T>
Tensor<T> bce_loss(Tensor<T> pred, Tensor<T> target);

template <typename T>
Tensor<T> sum(Tensor<T> x);

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b);

/// Element-wise product.
template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b);

/// Scalar helpers shared by the graph ops and the inference path.
template <typename T>
inline T sigmoid_scalar(T x) {
  if (x >= T{0}) {
    const T z = std::exp(-x);
    return T{1} / (T{1} + z);
  }
  const T z = std::exp(x);
  return z / (T{1} + z);
}

}  // namespace cdinn::ag
