#pragma once

// Minimal reverse-mode automatic differentiation over row-major dense
// matrices. Rows are points, columns are channels. A Tape records every
// operation; backward() walks the records in reverse creation order.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace uvforge::ad {

template <typename T>
using Tensor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::int32_t id = -1;

  [[nodiscard]] const Tensor<T>& value() const { return tape->value(*this); }
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] T scalar() const { return value()(0, 0); }
  [[nodiscard]] bool valid() const { return tape != nullptr && id >= 0; }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::int32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input.
  Var<T> constant(Tensor<T> value);
  /// Differentiable leaf (network parameters, probe inputs).
  Var<T> variable(Tensor<T> value);

  /// Records an op result. `backward` is invoked only when the result
  /// received gradient; it reads grad(self) and accumulates into parents.
  Var<T> record(Tensor<T> value, bool requires_grad, BackwardFn backward);

  [[nodiscard]] const Tensor<T>& value(Var<T> v) const { return nodes_[v.id].value; }
  [[nodiscard]] bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }
  [[nodiscard]] bool has_grad(Var<T> v) const { return nodes_[v.id].grad.size() > 0; }

  /// Gradient of the last backward() output with respect to v. Zero-filled
  /// when no gradient reached v.
  [[nodiscard]] Tensor<T> grad(Var<T> v) const;

  /// Grad buffer of node `id`, zero-allocated on first touch.
  Tensor<T>& grad_buffer(std::int32_t id);
  [[nodiscard]] const Tensor<T>& grad_of(std::int32_t id) const { return nodes_[id].grad; }
  [[nodiscard]] const Tensor<T>& value_of(std::int32_t id) const { return nodes_[id].value; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void backward(Var<T> out);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// -- elementwise / broadcasting ------------------------------------------------

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> div(Var<T> a, Var<T> b);
/// a (n x k) minus row vector r (1 x k) broadcast over rows.
template <typename T> Var<T> sub_row(Var<T> a, Var<T> r);
/// a (n x k) times column c (n x 1) broadcast over columns.
template <typename T> Var<T> mul_col(Var<T> a, Var<T> c);
/// a divided by a 1x1 variable.
template <typename T> Var<T> div_scalar(Var<T> a, Var<T> s);
/// a times a 1x1 variable.
template <typename T> Var<T> mul_scalar(Var<T> a, Var<T> s);
template <typename T> Var<T> scale(Var<T> a, double c);
template <typename T> Var<T> add_scalar(Var<T> a, double c);
/// Elementwise product with a constant mask of a's shape.
template <typename T> Var<T> mul_const(Var<T> a, const Tensor<T>& c);

template <typename T> Var<T> leaky_relu(Var<T> x, double slope);
/// Tangent of leaky_relu at pre-activation `pre` applied to `dx`. The
/// activation's derivative is piecewise constant, so only dx is differentiated.
template <typename T> Var<T> leaky_relu_tangent(Var<T> pre, Var<T> dx, double slope);
template <typename T> Var<T> sigmoid(Var<T> x);
template <typename T> Var<T> exp(Var<T> x);
template <typename T> Var<T> log(Var<T> x);
template <typename T> Var<T> sqrt(Var<T> x);
template <typename T> Var<T> square(Var<T> x);
/// Elementwise |x|; the subgradient at 0 is taken as 0.
template <typename T> Var<T> abs(Var<T> x);

// -- linear algebra --------------------------------------------------------------

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// x W + b with b a 1 x out row.
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> b);

// -- shape -----------------------------------------------------------------------

template <typename T> Var<T> concat_cols(Var<T> a, Var<T> b);
template <typename T> Var<T> slice_cols(Var<T> a, Eigen::Index start, Eigen::Index count);
template <typename T> Var<T> gather_rows(Var<T> a, std::span<const std::uint32_t> rows);

// -- reductions ------------------------------------------------------------------

template <typename T> Var<T> row_sum(Var<T> a);
template <typename T> Var<T> row_dot(Var<T> a, Var<T> b);
/// Euclidean norm per row; the subgradient at a zero row is taken as 0.
template <typename T> Var<T> row_norm(Var<T> a);
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
template <typename T> Var<T> col_min(Var<T> a);
template <typename T> Var<T> col_max(Var<T> a);
/// Maximum entry of a, gradient routed to the first arg-max.
template <typename T> Var<T> max_all(Var<T> a);
/// Log-sum-exp of a column vector over contiguous segments
/// [offsets[s], offsets[s+1]). Empty segments yield a large negative value
/// with zero gradient.
template <typename T>
Var<T> segment_logsumexp(Var<T> a, std::span<const std::uint32_t> offsets);

/// Very negative sentinel returned for empty segments.
inline constexpr double kEmptySegment = -1e30;

}  // namespace uvforge::ad
