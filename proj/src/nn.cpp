#include "uvforge/nn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "uvforge/common.hpp"
#include "uvforge/rng.hpp"

namespace uvforge::nn {

namespace {

template <typename T>
void append_tensors(Mlp<T>& mlp, std::vector<Tensor<T>*>& out) {
  for (auto& l : mlp.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
}

template <typename T>
void append_tensors(const Mlp<T>& mlp, std::vector<const Tensor<T>*>& out) {
  for (const auto& l : mlp.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
}

enum class Init { he, lecun, zero };

Layer<float> make_layer(int in, int out, Init init, Rng& rng) {
  Layer<float> l;
  l.weight = Tensor<float>::Zero(in, out);
  l.bias = Tensor<float>::Zero(1, out);
  if (init == Init::zero) return l;
  const double gain = init == Init::he ? 6.0 : 3.0;
  const double bound = std::sqrt(gain / static_cast<double>(in));
  for (Eigen::Index i = 0; i < l.weight.size(); ++i) {
    l.weight.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  }
  return l;
}

// channels = {in, h1, ..., out}; hidden layers He, final layer per `head`.
Mlp<float> make_mlp(const std::vector<int>& channels, Init head, Rng& rng) {
  Mlp<float> mlp;
  for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
    const bool last = i + 2 == channels.size();
    mlp.layers.push_back(make_layer(channels[i], channels[i + 1], last ? head : Init::he, rng));
  }
  return mlp;
}

template <typename T, typename U>
Mlp<U> cast_mlp(const Mlp<T>& m) {
  Mlp<U> out;
  for (const auto& l : m.layers) out.layers.push_back({l.weight.template cast<U>(), l.bias.template cast<U>()});
  return out;
}

template <typename T>
BoundMlp<T> bind_mlp(Tape<T>& tape, const Mlp<T>& mlp, bool trainable, std::vector<Var<T>>& all) {
  BoundMlp<T> b;
  for (const auto& l : mlp.layers) {
    Var<T> w = trainable ? tape.variable(l.weight) : tape.constant(l.weight);
    Var<T> bias = trainable ? tape.variable(l.bias) : tape.constant(l.bias);
    b.weights.push_back(w);
    b.biases.push_back(bias);
    all.push_back(w);
    all.push_back(bias);
  }
  return b;
}

}  // namespace

template <typename T>
std::vector<int> Mlp<T>::channels() const {
  std::vector<int> c;
  c.push_back(in_dim());
  for (const auto& l : layers) c.push_back(static_cast<int>(l.weight.cols()));
  return c;
}

template <typename T>
std::vector<Tensor<T>*> ParamNet<T>::tensors() {
  std::vector<Tensor<T>*> out;
  for (Mlp<T>* m : {&deform_enc, &deform_dec, &wrap_enc, &wrap_dec, &cut_enc, &cut_dec, &unwrap}) append_tensors(*m, out);
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> ParamNet<T>::tensors() const {
  std::vector<const Tensor<T>*> out;
  for (const Mlp<T>* m : {&deform_enc, &deform_dec, &wrap_enc, &wrap_dec, &cut_enc, &cut_dec, &unwrap}) {
    append_tensors(*m, out);
  }
  return out;
}

template <typename T>
std::vector<std::string> ParamNet<T>::tensor_names() const {
  std::vector<std::string> names;
  const std::pair<const char*, const Mlp<T>*> nets[] = {
      {"deform_enc", &deform_enc}, {"deform_dec", &deform_dec}, {"wrap_enc", &wrap_enc}, {"wrap_dec", &wrap_dec},
      {"cut_enc", &cut_enc},       {"cut_dec", &cut_dec},       {"unwrap", &unwrap}};
  for (const auto& [name, mlp] : nets) {
    for (std::size_t i = 0; i < mlp->layers.size(); ++i) {
      names.push_back(std::string(name) + "." + std::to_string(i) + ".weight");
      names.push_back(std::string(name) + "." + std::to_string(i) + ".bias");
    }
  }
  return names;
}

template <typename T>
std::size_t ParamNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

template <typename T>
template <typename U>
ParamNet<U> ParamNet<T>::cast() const {
  ParamNet<U> out;
  out.shape = shape;
  out.deform_enc = cast_mlp<T, U>(deform_enc);
  out.deform_dec = cast_mlp<T, U>(deform_dec);
  out.wrap_enc = cast_mlp<T, U>(wrap_enc);
  out.wrap_dec = cast_mlp<T, U>(wrap_dec);
  out.cut_enc = cast_mlp<T, U>(cut_enc);
  out.cut_dec = cast_mlp<T, U>(cut_dec);
  out.unwrap = cast_mlp<T, U>(unwrap);
  return out;
}

ParamNetF init_params(std::uint64_t seed, NetShape shape) {
  if (shape.hidden < 1 || shape.feature < 1) throw std::invalid_argument("init_params: widths must be positive");
  const int h = shape.hidden, f = shape.feature;
  ParamNetF net;
  net.shape = shape;
  // One stream per subnetwork so changing one width leaves the others intact.
  Rng r0(seed, 0), r1(seed, 1), r2(seed, 2), r3(seed, 3), r4(seed, 4), r5(seed, 5), r6(seed, 6);
  net.deform_enc = make_mlp({2, h, h, h, f}, Init::lecun, r0);
  net.deform_dec = make_mlp({f + 2, h, h, h, 2}, Init::zero, r1);
  net.wrap_enc = make_mlp({2, h, h, h, f}, Init::lecun, r2);
  net.wrap_dec = make_mlp({f + 2, h, h, h, 6}, Init::lecun, r3);
  net.cut_enc = make_mlp({3, h, h, f}, Init::lecun, r4);
  net.cut_dec = make_mlp({f + 3, h, h, 3}, Init::zero, r5);
  net.unwrap = make_mlp({3, h, h, 2}, Init::lecun, r6);
  return net;
}

Tensor<float> grid_lattice(std::size_t m) {
  if (m == 0) throw std::invalid_argument("grid_lattice: empty lattice");
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m)) - 1e-12));
  const std::size_t s = std::max<std::size_t>(side, 1);
  Tensor<float> g(static_cast<Eigen::Index>(s * s), 2);
  const double step = s > 1 ? 1.0 / static_cast<double>(s - 1) : 0.0;
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      const auto i = static_cast<Eigen::Index>(r * s + c);
      g(i, 0) = s > 1 ? static_cast<float>(static_cast<double>(c) * step) : 0.5F;
      g(i, 1) = s > 1 ? static_cast<float>(static_cast<double>(r) * step) : 0.5F;
    }
  }
  return g;
}

template <typename T>
BoundNet<T> bind(Tape<T>& tape, const ParamNet<T>& net, bool trainable) {
  BoundNet<T> b;
  b.deform_enc = bind_mlp(tape, net.deform_enc, trainable, b.params);
  b.deform_dec = bind_mlp(tape, net.deform_dec, trainable, b.params);
  b.wrap_enc = bind_mlp(tape, net.wrap_enc, trainable, b.params);
  b.wrap_dec = bind_mlp(tape, net.wrap_dec, trainable, b.params);
  b.cut_enc = bind_mlp(tape, net.cut_enc, trainable, b.params);
  b.cut_dec = bind_mlp(tape, net.cut_dec, trainable, b.params);
  b.unwrap = bind_mlp(tape, net.unwrap, trainable, b.params);
  return b;
}

template <typename T>
Var<T> mlp_forward(const BoundMlp<T>& mlp, Var<T> x, MlpTrace<T>* trace) {
  const std::size_t n = mlp.weights.size();
  for (std::size_t i = 0; i < n; ++i) {
    Var<T> a = ad::linear(x, mlp.weights[i], mlp.biases[i]);
    if (i + 1 < n) {
      if (trace) trace->pre.push_back(a);
      x = ad::leaky_relu(a, kLeakySlope);
    } else {
      x = a;
    }
  }
  return x;
}

template <typename T>
Var<T> mlp_tangent(const BoundMlp<T>& mlp, Var<T> dx, const MlpTrace<T>& trace) {
  const std::size_t n = mlp.weights.size();
  if (trace.pre.size() + 1 != n) throw std::invalid_argument("mlp_tangent: trace does not match network");
  for (std::size_t i = 0; i < n; ++i) {
    Var<T> da = ad::matmul(dx, mlp.weights[i]);
    dx = i + 1 < n ? ad::leaky_relu_tangent(trace.pre[i], da, kLeakySlope) : da;
  }
  return dx;
}

template <typename T>
Var<T> deform_forward(const BoundNet<T>& net, Var<T> grid) {
  Var<T> feat = mlp_forward(net.deform_enc, grid);
  Var<T> res = mlp_forward(net.deform_dec, ad::concat_cols(feat, grid));
  return ad::add(grid, res);
}

template <typename T>
Var<T> wrap_forward(const BoundNet<T>& net, Var<T> uv, WrapTrace<T>* trace) {
  if (trace) trace->input = uv;
  Var<T> feat = mlp_forward(net.wrap_enc, uv, trace ? &trace->enc : nullptr);
  return mlp_forward(net.wrap_dec, ad::concat_cols(feat, uv), trace ? &trace->dec : nullptr);
}

template <typename T>
Var<T> cut_forward(const BoundNet<T>& net, Var<T> points) {
  Var<T> feat = mlp_forward(net.cut_enc, points);
  Var<T> res = mlp_forward(net.cut_dec, ad::concat_cols(feat, points));
  return ad::add(points, res);
}

template <typename T>
Var<T> unwrap_forward(const BoundNet<T>& net, Var<T> points) {
  return mlp_forward(net.unwrap, points);
}

template <typename T>
Cycle2d<T> forward_cycle_2d(const BoundNet<T>& net, Var<T> lattice) {
  if (lattice.cols() != 2) throw std::invalid_argument("forward_cycle_2d: lattice must be M x 2");
  Cycle2d<T> c;
  c.q_hat = deform_forward(net, lattice);
  Var<T> wrapped = wrap_forward(net, c.q_hat);
  c.p_hat = ad::slice_cols(wrapped, 0, 3);
  c.n_hat = ad::slice_cols(wrapped, 3, 3);
  c.p_hat_cut = cut_forward(net, c.p_hat);
  c.q_hat_cycle = unwrap_forward(net, c.p_hat_cut);
  return c;
}

template <typename T>
Cycle3d<T> forward_cycle_3d(const BoundNet<T>& net, Var<T> vertices) {
  if (vertices.cols() != 3) throw std::invalid_argument("forward_cycle_3d: vertices must be N x 3");
  Cycle3d<T> c;
  c.p_cut = cut_forward(net, vertices);
  c.q = unwrap_forward(net, c.p_cut);
  Var<T> wrapped = wrap_forward(net, c.q, &c.wrap);
  c.p_tilde = ad::slice_cols(wrapped, 0, 3);
  c.n_tilde = ad::slice_cols(wrapped, 3, 3);
  return c;
}

template <typename T>
Frame<T> differential_frame(const BoundNet<T>& net, const WrapTrace<T>& trace) {
  Tape<T>& tape = *trace.input.tape;
  const Eigen::Index n = trace.input.rows();
  Frame<T> f;
  for (int axis = 0; axis < 2; ++axis) {
    Tensor<T> dir = Tensor<T>::Zero(n, 2);
    dir.col(axis).setOnes();
    Var<T> duv = tape.constant(std::move(dir));
    Var<T> dfeat = mlp_tangent(net.wrap_enc, duv, trace.enc);
    Var<T> dout = mlp_tangent(net.wrap_dec, ad::concat_cols(dfeat, duv), trace.dec);
    (axis == 0 ? f.e1 : f.e2) = ad::slice_cols(dout, 0, 3);
  }
  return f;
}

template <typename T>
Frame<T> differential_frame(const BoundNet<T>& net, Var<T> q) {
  WrapTrace<T> trace;
  wrap_forward(net, q, &trace);
  return differential_frame(net, trace);
}

void adam_step(std::vector<Tensor<float>*> params, const std::vector<Tensor<float>>& grads, AdamState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw std::invalid_argument("adam_step: shape mismatch at tensor " + std::to_string(i));
    }
  }
  if (state.kind == OptimizerKind::sgd) {
    ++state.step;
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= static_cast<float>(state.lr) * grads[i];
    return;
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Tensor<float>::Zero(p->rows(), p->cols()));
      state.v.push_back(Tensor<float>::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: optimizer state shape mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const float b1 = static_cast<float>(state.beta1), b2 = static_cast<float>(state.beta2);
  const float c1 = static_cast<float>(1.0 - std::pow(state.beta1, t));
  const float c2 = static_cast<float>(1.0 - std::pow(state.beta2, t));
  const float lr = static_cast<float>(state.lr), eps = static_cast<float>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    m = b1 * m + (1.0F - b1) * g;
    v = b2 * v + (1.0F - b2) * g.cwiseProduct(g);
    params[i]->array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

void save_checkpoint(const ParamNetF& net, const std::filesystem::path& stem) {
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw InputError("cannot write checkpoint " + bin_path.string());
  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["dtype"] = "float32";
  manifest["shape"] = {{"hidden", net.shape.hidden}, {"feature", net.shape.feature}};
  manifest["tensors"] = nlohmann::json::array();
  const auto names = net.tensor_names();
  const auto tensors = net.tensors();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = *tensors[i];
    manifest["tensors"].push_back({{"name", names[i]}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
    bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    offset += static_cast<std::size_t>(t.size());
  }
  if (!bin) throw InputError("failed writing checkpoint " + bin_path.string());
  std::ofstream js(json_path);
  js << manifest.dump(2) << '\n';
  if (!js) throw InputError("failed writing checkpoint manifest " + json_path.string());
}

ParamNetF load_checkpoint(const std::filesystem::path& stem) {
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw InputError("cannot read checkpoint manifest " + json_path.string());
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint manifest " + json_path.string() + ": " + e.what());
  }
  if (!manifest.contains("version") || manifest["version"].get<int>() != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version in " + json_path.string());
  }
  NetShape shape{manifest["shape"]["hidden"].get<int>(), manifest["shape"]["feature"].get<int>()};
  ParamNetF net = init_params(0, shape);
  auto tensors = net.tensors();
  const auto& entries = manifest["tensors"];
  if (entries.size() != tensors.size()) throw InputError("checkpoint tensor count mismatch");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw InputError("cannot read checkpoint " + bin_path.string());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& t = *tensors[i];
    if (entries[i]["rows"].get<Eigen::Index>() != t.rows() || entries[i]["cols"].get<Eigen::Index>() != t.cols()) {
      throw InputError("checkpoint tensor shape mismatch at " + entries[i]["name"].get<std::string>());
    }
    bin.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!bin) throw InputError("truncated checkpoint " + bin_path.string());
  return net;
}

#define UVFORGE_NN_INSTANTIATE(T)                                                          \
  template struct Mlp<T>;                                                                  \
  template struct ParamNet<T>;                                                             \
  template BoundNet<T> bind(Tape<T>&, const ParamNet<T>&, bool);                           \
  template Var<T> mlp_forward(const BoundMlp<T>&, Var<T>, MlpTrace<T>*);                   \
  template Var<T> mlp_tangent(const BoundMlp<T>&, Var<T>, const MlpTrace<T>&);             \
  template Var<T> deform_forward(const BoundNet<T>&, Var<T>);                              \
  template Var<T> wrap_forward(const BoundNet<T>&, Var<T>, WrapTrace<T>*);                 \
  template Var<T> cut_forward(const BoundNet<T>&, Var<T>);                                 \
  template Var<T> unwrap_forward(const BoundNet<T>&, Var<T>);                              \
  template Cycle2d<T> forward_cycle_2d(const BoundNet<T>&, Var<T>);                        \
  template Cycle3d<T> forward_cycle_3d(const BoundNet<T>&, Var<T>);                        \
  template Frame<T> differential_frame(const BoundNet<T>&, const WrapTrace<T>&);           \
  template Frame<T> differential_frame(const BoundNet<T>&, Var<T>);

UVFORGE_NN_INSTANTIATE(float)
UVFORGE_NN_INSTANTIATE(double)

template ParamNet<double> ParamNet<float>::cast<double>() const;
template ParamNet<float> ParamNet<double>::cast<float>() const;
template ParamNet<float> ParamNet<float>::cast<float>() const;

#undef UVFORGE_NN_INSTANTIATE

}  // namespace uvforge::nn
