#include "cdinn/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "cdinn/error.hpp"
#include "cdinn/kernels/parallel.hpp"
#include "cdinn/kernels/reference.hpp"
#include "cdinn/rng.hpp"

namespace cdinn::ag {
namespace {

thread_local Backend current_backend = Backend::parallel;

struct ImageDims {
  int batch, channels, height, width;
};

ImageDims image_dims(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw InvalidArgument(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + to_string(s));
}

Shape with_spatial(const Shape& s, int height, int width, int channels) {
  Shape out = s;
  out[out.size() - 3] = channels;
  out[out.size() - 2] = height;
  out[out.size() - 1] = width;
  return out;
}

template <typename T>
void require_same_graph(Tensor<T> a, Tensor<T> b, const char* op) {
  if (&a.graph() != &b.graph()) throw InvalidArgument(std::string(op) + ": tensors belong to different graphs");
}

// Packs pred(i) for i < n into 64-bit words fed to the graph fingerprint.
template <typename T, typename Pred>
void note_bits(Graph<T>& g, std::size_t n, Pred pred) {
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    word = (word << 1) | static_cast<std::uint64_t>(pred(i));
    if (i % 64 == 63) {
      g.note_branches(word);
      word = 0;
    }
  }
  g.note_branches(word ^ n);
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidArgument("negative dimension in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

void set_backend(Backend b) { current_backend = b; }
Backend backend() { return current_backend; }

// ---- Tensor ---------------------------------------------------------------

template <typename T>
const Shape& Tensor<T>::shape() const {
  return graph_->node(id_).shape;
}

template <typename T>
std::size_t Tensor<T>::size() const {
  return graph_->node(id_).value.size();
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  return graph_->node(id_).value;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return graph_->node(id_).grad;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw InvalidArgument("item() on a tensor of shape " + to_string(shape()));
  return values()[0];
}

// ---- Graph ----------------------------------------------------------------

template <typename T>
void Graph<T>::note_branches(std::uint64_t word) noexcept {
  branches_ = mix64(branches_ ^ word) + 0x9e3779b97f4a7c15ULL;
}

template <typename T>
Tensor<T> Graph<T>::emit(Shape shape, std::vector<T> value, bool requires_grad, BackwardFn backward) {
  if (value.size() != numel(shape))
    throw InvalidArgument("tensor value size does not match shape " + to_string(shape));
  auto node = std::make_unique<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Tensor<T> Graph<T>::constant(Shape shape, std::vector<T> value) {
  return emit(std::move(shape), std::move(value), false, {});
}

template <typename T>
Tensor<T> Graph<T>::variable(Shape shape, std::vector<T> value) {
  return emit(std::move(shape), std::move(value), true, {});
}

template <typename T>
Tensor<T> Graph<T>::parameter(Parameter<T>& param) {
  auto t = emit(param.shape, param.value, true, {});
  node(t.id()).param = &param;
  return t;
}

template <typename T>
std::vector<T>& Graph<T>::grad(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Tensor<T> loss) {
  if (&loss.graph() != this) throw InvalidArgument("backward: loss belongs to another graph");
  if (loss.size() != 1) throw InvalidArgument("backward: loss must be a scalar, got " + to_string(loss.shape()));

  for (auto& n : nodes_) {
    n->grad.clear();
    if (n->param) std::fill(n->param->grad.begin(), n->param->grad.end(), T{0});
  }
  grad(loss.id())[0] = T{1};
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (!n->param || n->grad.empty()) continue;
    auto& pg = n->param->grad;
    pg.resize(n->grad.size(), T{0});
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n->grad[i];
  }
}

// ---- ops ------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> b) {
  require_same_graph(x, w, "conv2d");
  require_same_graph(x, b, "conv2d");
  const ImageDims in = image_dims(x.shape(), "conv2d");
  const Shape& ws = w.shape();
  if (ws.size() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0)
    throw InvalidArgument("conv2d: weights must be [C_out, C_in, k, k] with odd k, got " + to_string(ws));
  if (ws[1] != in.channels)
    throw InvalidArgument("conv2d: input has " + std::to_string(in.channels) + " channels, weights expect " +
                          std::to_string(ws[1]));
  if (b.shape() != Shape{ws[0]}) throw InvalidArgument("conv2d: bias must be [C_out]");

  const kernels::ConvDims d{in.batch, in.channels, ws[0], in.height, in.width, ws[2]};
  std::vector<T> out(d.output_size());
  if (backend() == Backend::reference)
    kernels::reference::conv2d_forward(d, x.values().data(), w.values().data(), b.values().data(), out.data());
  else
    kernels::parallel::conv2d_forward(d, x.values().data(), w.values().data(), b.values().data(), out.data());

  Graph<T>& g = x.graph();
  const bool rg = g.node(x.id()).requires_grad || g.node(w.id()).requires_grad || g.node(b.id()).requires_grad;
  const int xi = x.id(), wi = w.id(), bi = b.id();
  const Backend be = backend();
  return g.emit(with_spatial(x.shape(), in.height, in.width, ws[0]), std::move(out), rg,
                [d, xi, wi, bi, be](Graph<T>& g, int self) {
                  T* dx = g.node(xi).requires_grad ? g.grad(xi).data() : nullptr;
                  T* dw = g.node(wi).requires_grad ? g.grad(wi).data() : nullptr;
                  T* db = g.node(bi).requires_grad ? g.grad(bi).data() : nullptr;
                  const T* dy = g.node(self).grad.data();
                  const T* xv = g.node(xi).value.data();
                  const T* wv = g.node(wi).value.data();
                  if (be == Backend::reference)
                    kernels::reference::conv2d_backward(d, xv, wv, dy, dx, dw, db);
                  else
                    kernels::parallel::conv2d_backward(d, xv, wv, dy, dx, dw, db);
                });
}

template <typename T>
Tensor<T> maxpool2(Tensor<T> x) {
  const ImageDims in = image_dims(x.shape(), "maxpool2");
  if (in.height % 2 || in.width % 2) throw InvalidArgument("maxpool2: spatial dims must be even, got " + to_string(x.shape()));
  const kernels::PlaneDims d{in.batch * in.channels, in.height, in.width};
  std::vector<T> out(x.size() / 4);
  std::vector<std::uint8_t> argmax(out.size());
  if (backend() == Backend::reference)
    kernels::reference::maxpool2_forward(d, x.values().data(), out.data(), argmax.data());
  else
    kernels::parallel::maxpool2_forward(d, x.values().data(), out.data(), argmax.data());

  Graph<T>& g = x.graph();
  note_bits(g, argmax.size(), [&](std::size_t i) { return argmax[i] & 1; });
  note_bits(g, argmax.size(), [&](std::size_t i) { return argmax[i] >> 1; });
  const int xi = x.id();
  return g.emit(with_spatial(x.shape(), in.height / 2, in.width / 2, in.channels), std::move(out),
                g.node(xi).requires_grad, [d, xi, argmax = std::move(argmax)](Graph<T>& g, int self) {
                  kernels::parallel::maxpool2_backward(d, g.node(self).grad.data(), argmax.data(),
                                                       g.grad(xi).data());
                });
}

template <typename T>
Tensor<T> upsample2(Tensor<T> x) {
  const ImageDims in = image_dims(x.shape(), "upsample2");
  const kernels::PlaneDims d{in.batch * in.channels, in.height, in.width};
  std::vector<T> out(x.size() * 4);
  if (backend() == Backend::reference)
    kernels::reference::upsample2_forward(d, x.values().data(), out.data());
  else
    kernels::parallel::upsample2_forward(d, x.values().data(), out.data());

  Graph<T>& g = x.graph();
  const int xi = x.id();
  return g.emit(with_spatial(x.shape(), in.height * 2, in.width * 2, in.channels), std::move(out),
                g.node(xi).requires_grad, [d, xi](Graph<T>& g, int self) {
                  kernels::parallel::upsample2_backward(d, g.node(self).grad.data(), g.grad(xi).data());
                });
}

template <typename T>
Tensor<T> relu(Tensor<T> x) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = v > T{0} ? v : T{0};
  Graph<T>& g = x.graph();
  note_bits(g, out.size(), [&](std::size_t i) { return out[i] > T{0}; });
  const int xi = x.id();
  return g.emit(x.shape(), std::move(out), g.node(xi).requires_grad, [xi](Graph<T>& g, int self) {
    const auto& dy = g.node(self).grad;
    const auto& xv = g.node(xi).value;
    auto& dx = g.grad(xi);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xv[i] > T{0}) dx[i] += dy[i];
  });
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> x) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = sigmoid_scalar(v);
  Graph<T>& g = x.graph();
  const int xi = x.id();
  return g.emit(x.shape(), std::move(out), g.node(xi).requires_grad, [xi](Graph<T>& g, int self) {
    const auto& dy = g.node(self).grad;
    const auto& y = g.node(self).value;
    auto& dx = g.grad(xi);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * y[i] * (T{1} - y[i]);
  });
}

template <typename T>
Tensor<T> activation(Tensor<T> x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return relu(x);
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::none:
      break;
  }
  return x;
}

template <typename T>
Tensor<T> bce_loss(Tensor<T> pred, Tensor<T> target) {
  require_same_graph(pred, target, "bce_loss");
  if (pred.shape() != target.shape())
    throw InvalidArgument("bce_loss: prediction " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
  const auto p = pred.values();
  const auto t = target.values();
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  // Neumaier summation keeps the loss smooth to rounding level, which the
  // finite-difference checks rely on.
  double acc = 0.0, carry = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(static_cast<double>(p[i]), lo, hi);
    const double ti = t[i];
    const double term = -(ti * std::log(pc) + (1.0 - ti) * std::log1p(-pc));
    const double next = acc + term;
    carry += std::abs(acc) >= std::abs(term) ? (acc - next) + term : (term - next) + acc;
    acc = next;
  }
  const double mean = (acc + carry) / static_cast<double>(p.size());

  Graph<T>& g = pred.graph();
  note_bits(g, p.size(), [&](std::size_t i) { return p[i] <= lo || p[i] >= hi; });
  const int pi = pred.id(), ti = target.id();
  return g.emit(Shape{}, {static_cast<T>(mean)}, g.node(pi).requires_grad, [pi, ti, lo, hi](Graph<T>& g, int self) {
    const double upstream = g.node(self).grad[0];
    const auto& p = g.node(pi).value;
    const auto& t = g.node(ti).value;
    auto& dp = g.grad(pi);
    const double scale = upstream / static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double pv = p[i];
      if (pv <= lo || pv >= hi) continue;  // clamp kills the gradient
      dp[i] += static_cast<T>(scale * (pv - t[i]) / (pv * (1.0 - pv)));
    }
  });
}

template <typename T>
Tensor<T> sum(Tensor<T> x) {
  double acc = 0.0;
  for (T v : x.values()) acc += v;
  Graph<T>& g = x.graph();
  const int xi = x.id();
  return g.emit(Shape{}, {static_cast<T>(acc)}, g.node(xi).requires_grad, [xi](Graph<T>& g, int self) {
    const T up = g.node(self).grad[0];
    for (auto& v : g.grad(xi)) v += up;
  });
}

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
  require_same_graph(a, b, "add");
  if (a.shape() != b.shape()) throw InvalidArgument("add: shape mismatch");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  Graph<T>& g = a.graph();
  const int ai = a.id(), bi = b.id();
  const bool rg = g.node(ai).requires_grad || g.node(bi).requires_grad;
  return g.emit(a.shape(), std::move(out), rg, [ai, bi](Graph<T>& g, int self) {
    for (int src : {ai, bi}) {
      if (!g.node(src).requires_grad) continue;
      const auto& dy = g.node(self).grad;
      auto& d = g.grad(src);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
}

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
  require_same_graph(a, b, "mul");
  if (a.shape() != b.shape()) throw InvalidArgument("mul: shape mismatch");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  Graph<T>& g = a.graph();
  const int ai = a.id(), bi = b.id();
  const bool rg = g.node(ai).requires_grad || g.node(bi).requires_grad;
  return g.emit(a.shape(), std::move(out), rg, [ai, bi](Graph<T>& g, int self) {
    const auto& dy = g.node(self).grad;
    if (g.node(ai).requires_grad) {
      auto& d = g.grad(ai);
      const auto& other = g.node(bi).value;
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] * other[i];
    }
    if (g.node(bi).requires_grad) {
      auto& d = g.grad(bi);
      const auto& other = g.node(ai).value;
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] * other[i];
    }
  });
}

#define CDINN_INSTANTIATE(T)                                 \
  template class Tensor<T>;                                  \
  template class Graph<T>;                                   \
  template Tensor<T> conv2d(Tensor<T>, Tensor<T>, Tensor<T>); \
  template Tensor<T> maxpool2(Tensor<T>);                    \
  template Tensor<T> upsample2(Tensor<T>);                   \
  template Tensor<T> relu(Tensor<T>);                        \
  template Tensor<T> sigmoid(Tensor<T>);                     \
  template Tensor<T> activation(Tensor<T>, Activation);      \
  template Tensor<T> bce_loss(Tensor<T>, Tensor<T>);         \
  template Tensor<T> sum(Tensor<T>);                         \
  template Tensor<T> add(Tensor<T>, Tensor<T>);              \
  template Tensor<T> mul(Tensor<T>, Tensor<T>);

CDINN_INSTANTIATE(float)
CDINN_INSTANTIATE(double)
#undef CDINN_INSTANTIATE

}  // namespace cdinn::ag
