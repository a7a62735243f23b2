#pragma once

// The four pointwise MLP subnetworks of the cycle-mapping backbone
// (deform, wrap, cut, unwrap), their forward passes over both cycles, the
// Jacobian frame of the wrap map and the Adam optimizer.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uvforge/autodiff.hpp"

namespace uvforge::nn {

using ad::Tape;
using ad::Tensor;
using ad::Var;

inline constexpr double kLeakySlope = 0.01;

/// Channel widths. The defaults reproduce the reference layer table; smaller
/// widths keep exhaustive gradient checks tractable.
struct NetShape {
  int hidden = 512;
  int feature = 64;
  friend bool operator==(const NetShape&, const NetShape&) = default;
};

template <typename T>
struct Layer {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // 1 x out
};

/// Pointwise MLP: LeakyReLU on every hidden layer, final layer linear.
template <typename T>
struct Mlp {
  std::vector<Layer<T>> layers;

  [[nodiscard]] int in_dim() const { return static_cast<int>(layers.front().weight.rows()); }
  [[nodiscard]] int out_dim() const { return static_cast<int>(layers.back().weight.cols()); }
  [[nodiscard]] std::vector<int> channels() const;
};

template <typename T>
struct ParamNet {
  NetShape shape;
  Mlp<T> deform_enc;  // 2 -> h -> h -> h -> f
  Mlp<T> deform_dec;  // f+2 -> h -> h -> h -> 2   (residual)
  Mlp<T> wrap_enc;    // 2 -> h -> h -> h -> f
  Mlp<T> wrap_dec;    // f+2 -> h -> h -> h -> 6   (3 position + 3 normal)
  Mlp<T> cut_enc;     // 3 -> h -> h -> f
  Mlp<T> cut_dec;     // f+3 -> h -> h -> 3        (residual)
  Mlp<T> unwrap;      // 3 -> h -> h -> 2

  /// Every parameter tensor in a fixed order (weights then bias per layer,
  /// subnetworks in declaration order).
  [[nodiscard]] std::vector<Tensor<T>*> tensors();
  [[nodiscard]] std::vector<const Tensor<T>*> tensors() const;
  [[nodiscard]] std::vector<std::string> tensor_names() const;
  [[nodiscard]] std::size_t parameter_count() const;

  template <typename U>
  [[nodiscard]] ParamNet<U> cast() const;
};

using ParamNetF = ParamNet<float>;

/// Uniform-He hidden layers, LeCun-uniform linear heads, zero biases, and
/// zero final layers in the residual decoders (deform, cut) so the initial
/// maps are identity-like. Deterministic in `seed`.
[[nodiscard]] ParamNetF init_params(std::uint64_t seed, NetShape shape = {});

/// Regular ceil(sqrt(m))-per-side lattice over [0,1]^2 (side^2 >= m points).
[[nodiscard]] Tensor<float> grid_lattice(std::size_t m);

// -- tape-bound forward passes --------------------------------------------------

template <typename T>
struct BoundMlp {
  std::vector<Var<T>> weights;
  std::vector<Var<T>> biases;
};

template <typename T>
struct BoundNet {
  BoundMlp<T> deform_enc, deform_dec, wrap_enc, wrap_dec, cut_enc, cut_dec, unwrap;
  std::vector<Var<T>> params;  // same order as ParamNet::tensors()
};

/// Registers every tensor as a differentiable leaf (or constant when
/// `trainable` is false).
template <typename T>
[[nodiscard]] BoundNet<T> bind(Tape<T>& tape, const ParamNet<T>& net, bool trainable = true);

/// Hidden pre-activations recorded during a forward pass.
template <typename T>
struct MlpTrace {
  std::vector<Var<T>> pre;
};

template <typename T>
Var<T> mlp_forward(const BoundMlp<T>& mlp, Var<T> x, MlpTrace<T>* trace = nullptr);

/// Directional derivative of the MLP at the traced point along dx.
template <typename T>
Var<T> mlp_tangent(const BoundMlp<T>& mlp, Var<T> dx, const MlpTrace<T>& trace);

template <typename T>
struct WrapTrace {
  Var<T> input;
  MlpTrace<T> enc;
  MlpTrace<T> dec;
};

template <typename T>
struct Cycle2d {
  Var<T> q_hat;        // deformed lattice
  Var<T> p_hat;        // wrapped positions
  Var<T> n_hat;        // wrapped normals
  Var<T> p_hat_cut;    // cut positions
  Var<T> q_hat_cycle;  // re-flattened lattice
};

template <typename T>
struct Cycle3d {
  Var<T> p_cut;    // cut mesh vertices
  Var<T> q;        // learned UV per vertex
  Var<T> p_tilde;  // re-wrapped positions
  Var<T> n_tilde;  // re-wrapped normals
  WrapTrace<T> wrap;
};

template <typename T>
Var<T> deform_forward(const BoundNet<T>& net, Var<T> grid);
/// Returns the 6-channel wrap output; fills `trace` when given.
template <typename T>
Var<T> wrap_forward(const BoundNet<T>& net, Var<T> uv, WrapTrace<T>* trace = nullptr);
template <typename T>
Var<T> cut_forward(const BoundNet<T>& net, Var<T> points);
template <typename T>
Var<T> unwrap_forward(const BoundNet<T>& net, Var<T> points);

/// 2D-3D-2D branch: lattice -> deform -> wrap -> cut -> unwrap.
template <typename T>
Cycle2d<T> forward_cycle_2d(const BoundNet<T>& net, Var<T> lattice);

/// 3D-2D-3D branch: vertices -> cut -> unwrap -> wrap.
template <typename T>
Cycle3d<T> forward_cycle_3d(const BoundNet<T>& net, Var<T> vertices);

template <typename T>
struct Frame {
  Var<T> e1;  // d(wrap position)/du
  Var<T> e2;  // d(wrap position)/dv
};

/// Jacobian columns of the wrap position map at `trace.input`, by forward
/// tangent propagation recorded on the tape (differentiable in the weights).
template <typename T>
Frame<T> differential_frame(const BoundNet<T>& net, const WrapTrace<T>& trace);

/// Convenience overload evaluating the wrap map at q first.
template <typename T>
Frame<T> differential_frame(const BoundNet<T>& net, Var<T> q);

// -- optimizer --------------------------------------------------------------------

enum class OptimizerKind { adam, sgd };

struct AdamState {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;
};

/// One bias-corrected Adam update (or plain gradient descent when
/// state.kind == sgd). Throws std::invalid_argument on shape mismatch.
void adam_step(std::vector<Tensor<float>*> params, const std::vector<Tensor<float>>& grads, AdamState& state);

// -- checkpoints -------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

/// Writes `<stem>.bin` (little-endian float32 blob) and `<stem>.json`
/// (version, net shape and per-tensor name/shape/offset manifest).
void save_checkpoint(const ParamNetF& net, const std::filesystem::path& stem);
[[nodiscard]] ParamNetF load_checkpoint(const std::filesystem::path& stem);

}  // namespace uvforge::nn
