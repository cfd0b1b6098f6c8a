#include "cdinn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cdinn/binary_io.hpp"
#include "cdinn/error.hpp"
#include "cdinn/kernels/parallel.hpp"
#include "cdinn/kernels/reference.hpp"
#include "cdinn/rng.hpp"
#include "json.hpp"

namespace cdinn::model {
namespace {

using nlohmann::json;

constexpr char kMagic[] = "CDIM";

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::upsample: return "upsample";
  }
  return "?";
}

LayerKind kind_from(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "maxpool") return LayerKind::maxpool;
  if (s == "upsample") return LayerKind::upsample;
  throw InvalidArgument("unknown layer kind '" + s + "'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Activation activation_from(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw InvalidArgument("unknown activation '" + s + "'");
}

LayerSpec conv(int in, int out, Activation act = Activation::relu) {
  return {LayerKind::conv, in, out, 3, act};
}

json spec_json(const NetworkSpec& s) {
  json layers = json::array();
  for (const auto& l : s.layers) {
    json j{{"kind", kind_name(l.kind)}};
    if (l.kind == LayerKind::conv) {
      j["in"] = l.in_channels;
      j["out"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["activation"] = activation_name(l.activation);
    }
    layers.push_back(std::move(j));
  }
  return {{"head", to_string(s.head)}, {"input_side", s.input_side}, {"layers", std::move(layers)}};
}

NetworkSpec spec_from(const json& j) {
  NetworkSpec s;
  s.head = head_from_string(j.at("head").get<std::string>());
  s.input_side = j.at("input_side");
  for (const auto& l : j.at("layers")) {
    LayerSpec ls;
    ls.kind = kind_from(l.at("kind").get<std::string>());
    if (ls.kind == LayerKind::conv) {
      ls.in_channels = l.at("in");
      ls.out_channels = l.at("out");
      ls.kernel = l.at("kernel");
      ls.activation = activation_from(l.at("activation").get<std::string>());
    }
    s.layers.push_back(ls);
  }
  return s;
}

template <typename T>
void apply_activation(std::vector<T>& v, Activation a) {
  if (a == Activation::relu)
    for (auto& x : v) x = x > T{0} ? x : T{0};
  else if (a == Activation::sigmoid)
    for (auto& x : v) x = ag::sigmoid_scalar(x);
}

}  // namespace

std::string to_string(Head head) { return head == Head::shape ? "shape" : "phase"; }

Head head_from_string(const std::string& name) {
  if (name == "shape") return Head::shape;
  if (name == "phase") return Head::phase;
  throw InvalidArgument("head must be 'shape' or 'phase', got '" + name + "'");
}

// ---- NetworkSpec -----------------------------------------------------------

NetworkSpec NetworkSpec::cdinn(Head head) {
  NetworkSpec s;
  s.head = head;
  s.input_side = 32;
  s.layers = {
      conv(1, 32),  conv(32, 32), {LayerKind::maxpool}, conv(32, 64), conv(64, 64), {LayerKind::maxpool},
      {LayerKind::upsample}, conv(64, 64), {LayerKind::upsample}, conv(64, 32), conv(32, 1, Activation::sigmoid),
  };
  return s;
}

std::vector<std::array<int, 3>> NetworkSpec::shape_trace() const {
  std::vector<std::array<int, 3>> trace;
  int c = 1, side = input_side;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::conv:
        if (l.in_channels != c)
          throw InvalidArgument("network spec: conv expects " + std::to_string(l.in_channels) +
                                " channels but receives " + std::to_string(c));
        c = l.out_channels;
        break;
      case LayerKind::maxpool:
        if (side % 2) throw InvalidArgument("network spec: maxpool on odd spatial size");
        side /= 2;
        break;
      case LayerKind::upsample:
        side *= 2;
        break;
    }
    trace.push_back({c, side, side});
  }
  return trace;
}

int NetworkSpec::conv_count() const {
  return static_cast<int>(std::count_if(layers.begin(), layers.end(),
                                        [](const LayerSpec& l) { return l.kind == LayerKind::conv; }));
}

std::vector<std::size_t> NetworkSpec::parameter_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& l : layers) {
    if (l.kind != LayerKind::conv) continue;
    sizes.push_back(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel);
    sizes.push_back(static_cast<std::size_t>(l.out_channels));
  }
  return sizes;
}

void NetworkSpec::validate() const {
  if (input_side < 4 || input_side % 4) throw InvalidArgument("network spec: input side must be a positive multiple of 4");
  if (layers.empty() || layers.back().kind != LayerKind::conv)
    throw InvalidArgument("network spec: the last layer must be a convolution");

  const auto trace = shape_trace();
  int conv_seen = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind != LayerKind::conv) continue;
    ++conv_seen;
    if (l.kernel < 1 || l.kernel % 2 == 0 || l.out_channels < 1)
      throw InvalidArgument("network spec: conv layers need an odd kernel and >= 1 filter");
    const bool last = i + 1 == layers.size();
    if (last && l.activation != Activation::sigmoid)
      throw InvalidArgument("network spec: the final convolution must use a sigmoid");
    if (!last && l.activation != Activation::relu)
      throw InvalidArgument("network spec: hidden convolutions must use relu");
    if (conv_seen == 2 && (l.out_channels != 32 || trace[i][1] != input_side))
      throw InvalidArgument("network spec: the 2nd convolution must have 32 filters at full resolution");
    if (conv_seen == 4 && (l.out_channels != 64 || trace[i][1] != input_side / 2))
      throw InvalidArgument("network spec: the 4th convolution must have 64 filters at half resolution");
  }
  if (conv_seen < 4) throw InvalidArgument("network spec: at least four convolutions are required");

  std::vector<int> sides{input_side};
  for (const auto& t : trace)
    if (t[1] != sides.back()) sides.push_back(t[1]);
  const std::vector<int> expected{input_side, input_side / 2, input_side / 4, input_side / 2, input_side};
  if (sides != expected) throw InvalidArgument("network spec: spatial trace must be S, S/2, S/4, S/2, S");
  if (trace.back()[0] != 1) throw InvalidArgument("network spec: output must have one channel");
}

std::string NetworkSpec::to_json() const { return spec_json(*this).dump(); }

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("network spec: ") + e.what());
  }
}

// ---- Network ----------------------------------------------------------------

template <typename T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  int index = 0;
  for (const auto& l : spec_.layers) {
    if (l.kind != LayerKind::conv) continue;
    ++index;
    ConvParams<T> p{
        ag::Parameter<T>("conv" + std::to_string(index) + ".weight", {l.out_channels, l.in_channels, l.kernel, l.kernel}),
        ag::Parameter<T>("conv" + std::to_string(index) + ".bias", {l.out_channels}),
    };
    const double area = static_cast<double>(l.kernel) * l.kernel;
    const double limit = std::sqrt(6.0 / (area * l.in_channels + area * l.out_channels));
    for (auto& w : p.weight.value) w = static_cast<T>(rng.uniform(-limit, limit));
    convs_.push_back(std::move(p));
  }
}

template <typename T>
Network<T> Network<T>::from_bundle(const WeightBundle& bundle) {
  Network<T> net(bundle.spec, 0);
  const auto sizes = bundle.spec.parameter_sizes();
  if (bundle.params.size() != sizes.size()) throw InvalidArgument("weight bundle: wrong number of parameter arrays");
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (bundle.params[k].size() != sizes[k]) throw InvalidArgument("weight bundle: parameter array size mismatch");
    auto& dst = (k % 2 == 0 ? net.convs_[k / 2].weight : net.convs_[k / 2].bias).value;
    std::transform(bundle.params[k].begin(), bundle.params[k].end(), dst.begin(),
                   [](float v) { return static_cast<T>(v); });
  }
  return net;
}

template <typename T>
WeightBundle Network<T>::to_bundle(const Provenance& provenance) const {
  WeightBundle b{spec_, {}, provenance};
  for (const auto& c : convs_) {
    b.params.emplace_back(c.weight.value.begin(), c.weight.value.end());
    b.params.emplace_back(c.bias.value.begin(), c.bias.value.end());
  }
  return b;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out(spec_, 0);
  for (std::size_t k = 0; k < convs_.size(); ++k) {
    std::transform(convs_[k].weight.value.begin(), convs_[k].weight.value.end(), out.convs()[k].weight.value.begin(),
                   [](T v) { return static_cast<U>(v); });
    std::transform(convs_[k].bias.value.begin(), convs_[k].bias.value.end(), out.convs()[k].bias.value.begin(),
                   [](T v) { return static_cast<U>(v); });
  }
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& c : convs_) n += c.weight.value.size() + c.bias.value.size();
  return n;
}

template <typename T>
std::vector<ag::Parameter<T>*> Network<T>::parameters() {
  std::vector<ag::Parameter<T>*> out;
  for (auto& c : convs_) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  return out;
}

template <typename T>
ag::Tensor<T> Network<T>::forward(ag::Graph<T>& graph, ag::Tensor<T> x, std::vector<ag::Tensor<T>>* conv_outputs) {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != spec_.input_side || s[3] != spec_.input_side)
    throw InvalidArgument("network forward: expected [N,1," + std::to_string(spec_.input_side) + "," +
                          std::to_string(spec_.input_side) + "], got " + ag::to_string(s));
  std::size_t k = 0;
  for (const auto& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::conv: {
        auto& p = convs_[k++];
        x = ag::activation(ag::conv2d(x, graph.parameter(p.weight), graph.parameter(p.bias)), l.activation);
        if (conv_outputs) conv_outputs->push_back(x);
        break;
      }
      case LayerKind::maxpool:
        x = ag::maxpool2(x);
        break;
      case LayerKind::upsample:
        x = ag::upsample2(x);
        break;
    }
  }
  return x;
}

template <typename T>
std::vector<T> Network<T>::infer(std::span<const T> input, int batch, std::vector<std::vector<T>>* conv_outputs) const {
  const int side0 = spec_.input_side;
  if (batch < 1 || input.size() != static_cast<std::size_t>(batch) * side0 * side0)
    throw InvalidArgument("network infer: input must hold batch x " + std::to_string(side0) + "x" +
                          std::to_string(side0) + " values");
  const bool reference = ag::backend() == ag::Backend::reference;
  std::vector<T> cur(input.begin(), input.end()), next;
  int channels = 1, side = side0;
  std::size_t k = 0;
  for (const auto& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::conv: {
        const auto& p = convs_[k++];
        const kernels::ConvDims d{batch, channels, l.out_channels, side, side, l.kernel};
        next.assign(d.output_size(), T{0});
        if (reference)
          kernels::reference::conv2d_forward(d, cur.data(), p.weight.value.data(), p.bias.value.data(), next.data());
        else
          kernels::parallel::conv2d_forward(d, cur.data(), p.weight.value.data(), p.bias.value.data(), next.data());
        apply_activation(next, l.activation);
        channels = l.out_channels;
        if (conv_outputs) conv_outputs->push_back(next);
        break;
      }
      case LayerKind::maxpool: {
        const kernels::PlaneDims d{batch * channels, side, side};
        next.assign(cur.size() / 4, T{0});
        if (reference)
          kernels::reference::maxpool2_forward<T>(d, cur.data(), next.data(), nullptr);
        else
          kernels::parallel::maxpool2_forward<T>(d, cur.data(), next.data(), nullptr);
        side /= 2;
        break;
      }
      case LayerKind::upsample: {
        const kernels::PlaneDims d{batch * channels, side, side};
        next.assign(cur.size() * 4, T{0});
        if (reference)
          kernels::reference::upsample2_forward(d, cur.data(), next.data());
        else
          kernels::parallel::upsample2_forward(d, cur.data(), next.data());
        side *= 2;
        break;
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

// ---- weight files -------------------------------------------------------------

void save_weights(const WeightBundle& bundle, const std::filesystem::path& path) {
  bundle.spec.validate();
  const auto sizes = bundle.spec.parameter_sizes();
  if (bundle.params.size() != sizes.size()) throw InvalidArgument("save_weights: parameter count does not match spec");
  for (std::size_t k = 0; k < sizes.size(); ++k)
    if (bundle.params[k].size() != sizes[k]) throw InvalidArgument("save_weights: parameter array size mismatch");

  const json meta{
      {"schema_version", 1},
      {"spec", spec_json(bundle.spec)},
      {"parameter_sizes", sizes},
      {"provenance",
       {{"seed", bundle.provenance.seed},
        {"epochs", bundle.provenance.epochs},
        {"final_train_loss", bundle.provenance.final_train_loss},
        {"final_val_loss", bundle.provenance.final_val_loss},
        {"note", bundle.provenance.note}}},
  };

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(kMagic, 4);
    io::put_uint<std::uint16_t>(out, kWeightsVersion);
    io::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(bundle.spec.head));
    io::put_blob(out, meta.dump());
    for (const auto& p : bundle.params) io::put_f32_array<float>(out, p);
    out.flush();
    if (!out) throw IoError("write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move weights into place at " + path.string() + ": " + ec.message());
}

WeightBundle load_weights(const std::filesystem::path& path, std::optional<Head> expected) {
  using Kind = FormatError::Kind;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  io::expect_magic(in, kMagic, "weight file");
  const auto version = io::get_uint<std::uint16_t>(in, "weights version");
  if (version != kWeightsVersion)
    throw FormatError(Kind::version, "weight file version " + std::to_string(version) + " is not supported");
  const auto tag = io::get_uint<std::uint8_t>(in, "head tag");
  if (tag > 1) throw FormatError(Kind::head, "weight file has unknown head tag " + std::to_string(tag));
  const Head head = static_cast<Head>(tag);
  if (expected && *expected != head)
    throw FormatError(Kind::head, "weight file holds a " + to_string(head) + " network, expected " + to_string(*expected));

  WeightBundle bundle;
  std::vector<std::size_t> stored_sizes;
  try {
    const json meta = json::parse(io::get_blob(in, "weight metadata"));
    bundle.spec = spec_from(meta.at("spec"));
    stored_sizes = meta.at("parameter_sizes").get<std::vector<std::size_t>>();
    const auto& p = meta.at("provenance");
    bundle.provenance.seed = p.at("seed");
    bundle.provenance.epochs = p.at("epochs");
    bundle.provenance.final_train_loss = p.at("final_train_loss");
    bundle.provenance.final_val_loss = p.at("final_val_loss");
    bundle.provenance.note = p.value("note", "");
  } catch (const json::exception& e) {
    throw FormatError(Kind::payload, std::string("weight metadata: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(Kind::payload, std::string("weight metadata: ") + e.what());
  }
  if (bundle.spec.head != head) throw FormatError(Kind::head, "head tag disagrees with the embedded spec");
  try {
    bundle.spec.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(Kind::shape, std::string("weight file spec: ") + e.what());
  }
  const auto sizes = bundle.spec.parameter_sizes();
  if (stored_sizes != sizes) throw FormatError(Kind::shape, "stored parameter shapes do not match the spec");

  bundle.params.resize(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    bundle.params[k].resize(sizes[k]);
    io::get_f32_array<float>(in, bundle.params[k], "parameter array " + std::to_string(k));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(Kind::payload, "trailing bytes after parameters");
  return bundle;
}

// ---- prediction ------------------------------------------------------------------

std::vector<float> network_input(const fields::DiffractionPattern& pattern) {
  const auto& a = pattern.amplitudes;
  const double peak = a.size() ? *std::max_element(a.values().begin(), a.values().end()) : 0.0;
  std::vector<float> out(a.size(), 0.0f);
  if (peak > 0.0)
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<float>(a[i] / peak);
  return out;
}

std::vector<Prediction> predict_objects(const Network<float>& shape_net, const Network<float>& phase_net,
                                        std::span<const fields::DiffractionPattern> patterns, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("predict_object: threshold must lie in (0,1)");
  if (shape_net.head() != Head::shape || phase_net.head() != Head::phase)
    throw InvalidArgument("predict_object: networks are not a (shape, phase) pair");
  const int side = shape_net.spec().input_side;
  const std::size_t cells = static_cast<std::size_t>(side) * side;
  std::vector<float> input;
  input.reserve(patterns.size() * cells);
  for (const auto& p : patterns) {
    if (p.amplitudes.side() != side) throw InvalidArgument("predict_object: pattern size does not match the network");
    const auto x = network_input(p);
    input.insert(input.end(), x.begin(), x.end());
  }
  const int batch = static_cast<int>(patterns.size());
  const auto shape_out = shape_net.infer(input, batch);
  const auto phase_out = phase_net.infer(input, batch);

  std::vector<Prediction> out(patterns.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    Prediction& pr = out[n];
    pr.shape = RealGrid(side);
    pr.phase = RealGrid(side);
    for (std::size_t i = 0; i < cells; ++i) {
      const double s = shape_out[n * cells + i];
      pr.shape[i] = s;
      pr.phase[i] = s < threshold ? 0.0 : fields::target_to_phase(phase_out[n * cells + i]);
    }
    pr.field = fields::assemble_object(pr.shape, pr.phase);
  }
  return out;
}

Prediction predict_object(const Network<float>& shape_net, const Network<float>& phase_net,
                          const fields::DiffractionPattern& pattern, double threshold) {
  return std::move(predict_objects(shape_net, phase_net, std::span(&pattern, 1), threshold).front());
}

}  // namespace cdinn::model
