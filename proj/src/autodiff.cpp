#include "uvforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace uvforge::ad {

namespace {

template <typename T>
void require_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw std::invalid_argument("autodiff: operands on different tapes");
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("autodiff: shape mismatch in ") + op);
  }
}

template <typename T>
bool any_grad(Var<T> a) {
  return a.tape->requires_grad(a);
}

template <typename T>
bool any_grad(Var<T> a, Var<T> b) {
  return a.tape->requires_grad(a) || b.tape->requires_grad(b);
}

// Accumulates `delta` into the gradient of `v` when it requires one.
template <typename T, typename Expr>
void accumulate(Tape<T>& tape, std::int32_t id, const Expr& delta) {
  Var<T> v{&tape, id};
  if (!tape.requires_grad(v)) return;
  tape.grad_buffer(id) += delta;
}

}  // namespace

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  return record(std::move(value), false, nullptr);
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  return record(std::move(value), true, nullptr);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, bool requires_grad, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backward = requires_grad ? std::move(backward) : nullptr;
  nodes_.push_back(std::move(node));
  return Var<T>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::int32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor<T>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Tensor<T>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> out) {
  if (out.tape != this) throw std::invalid_argument("autodiff: output from another tape");
  if (value(out).size() != 1) throw std::invalid_argument("autodiff: backward needs a 1x1 output");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[out.id].requires_grad) return;
  grad_buffer(out.id).setOnes();
  for (std::int32_t i = out.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() > 0) n.backward(*this, i);
  }
}

// -- elementwise -------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const std::int32_t ia = a.id, ib = b.id;
  return a.tape->record(a.value() + b.value(), any_grad(a, b), [ia, ib](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    accumulate(t, ia, g);
    accumulate(t, ib, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const std::int32_t ia = a.id, ib = b.id;
  return a.tape->record(a.value() - b.value(), any_grad(a, b), [ia, ib](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    accumulate(t, ia, g);
    accumulate(t, ib, -g);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const std::int32_t ia = a.id, ib = b.id;
  Tensor<T> out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    accumulate(t, ia, g.cwiseProduct(t.value_of(ib)));
    accumulate(t, ib, g.cwiseProduct(t.value_of(ia)));
  });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "div");
  const std::int32_t ia = a.id, ib = b.id;
  Tensor<T> out = a.value().cwiseQuotient(b.value());
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    const auto& bv = t.value_of(ib);
    accumulate(t, ia, g.cwiseQuotient(bv));
    Tensor<T> db = -(g.cwiseProduct(t.value_of(self))).cwiseQuotient(bv);
    accumulate(t, ib, db);
  });
}

template <typename T>
Var<T> sub_row(Var<T> a, Var<T> r) {
  require_same_tape(a, r);
  if (r.rows() != 1 || r.cols() != a.cols()) throw std::invalid_argument("autodiff: sub_row shape");
  const std::int32_t ia = a.id, ir = r.id;
  Tensor<T> out = a.value().rowwise() - r.value().row(0);
  return a.tape->record(std::move(out), any_grad(a, r), [ia, ir](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    accumulate(t, ia, g);
    Tensor<T> dr = -g.colwise().sum();
    accumulate(t, ir, dr);
  });
}

template <typename T>
Var<T> mul_col(Var<T> a, Var<T> c) {
  require_same_tape(a, c);
  if (c.cols() != 1 || c.rows() != a.rows()) throw std::invalid_argument("autodiff: mul_col shape");
  const std::int32_t ia = a.id, ic = c.id;
  Tensor<T> out = a.value().array().colwise() * c.value().col(0).array();
  return a.tape->record(std::move(out), any_grad(a, c), [ia, ic](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    Tensor<T> da = g.array().colwise() * t.value_of(ic).col(0).array();
    accumulate(t, ia, da);
    Tensor<T> dc = g.cwiseProduct(t.value_of(ia)).rowwise().sum();
    accumulate(t, ic, dc);
  });
}

template <typename T>
Var<T> div_scalar(Var<T> a, Var<T> s) {
  require_same_tape(a, s);
  if (s.value().size() != 1) throw std::invalid_argument("autodiff: div_scalar needs 1x1 divisor");
  const std::int32_t ia = a.id, is = s.id;
  Tensor<T> out = a.value() / s.scalar();
  return a.tape->record(std::move(out), any_grad(a, s), [ia, is](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    const T sv = t.value_of(is)(0, 0);
    accumulate(t, ia, g / sv);
    Tensor<T> ds(1, 1);
    ds(0, 0) = -(g.cwiseProduct(t.value_of(self))).sum() / sv;
    accumulate(t, is, ds);
  });
}

template <typename T>
Var<T> mul_scalar(Var<T> a, Var<T> s) {
  require_same_tape(a, s);
  if (s.value().size() != 1) throw std::invalid_argument("autodiff: mul_scalar needs 1x1 factor");
  const std::int32_t ia = a.id, is = s.id;
  Tensor<T> out = a.value() * s.scalar();
  return a.tape->record(std::move(out), any_grad(a, s), [ia, is](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    accumulate(t, ia, g * t.value_of(is)(0, 0));
    Tensor<T> ds(1, 1);
    ds(0, 0) = g.cwiseProduct(t.value_of(ia)).sum();
    accumulate(t, is, ds);
  });
}

template <typename T>
Var<T> scale(Var<T> a, double c) {
  const std::int32_t ia = a.id;
  const T k = static_cast<T>(c);
  return a.tape->record(a.value() * k, any_grad(a), [ia, k](Tape<T>& t, std::int32_t self) {
    accumulate(t, ia, t.grad_of(self) * k);
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, double c) {
  const std::int32_t ia = a.id;
  Tensor<T> out = a.value().array() + static_cast<T>(c);
  return a.tape->record(std::move(out), any_grad(a), [ia](Tape<T>& t, std::int32_t self) {
    accumulate(t, ia, t.grad_of(self));
  });
}

template <typename T>
Var<T> mul_const(Var<T> a, const Tensor<T>& c) {
  require_same_shape(a.value(), c, "mul_const");
  const std::int32_t ia = a.id;
  Tensor<T> out = a.value().cwiseProduct(c);
  return a.tape->record(std::move(out), any_grad(a), [ia, c](Tape<T>& t, std::int32_t self) {
    accumulate(t, ia, t.grad_of(self).cwiseProduct(c));
  });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, double slope) {
  const std::int32_t ix = x.id;
  const T s = static_cast<T>(slope);
  Tensor<T> out = x.value().unaryExpr([s](T v) { return v > T(0) ? v : s * v; });
  return x.tape->record(std::move(out), any_grad(x), [ix, s](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    const auto& xv = t.value_of(ix);
    Tensor<T> dx = g.binaryExpr(xv, [s](T gv, T v) { return v > T(0) ? gv : s * gv; });
    accumulate(t, ix, dx);
  });
}

template <typename T>
Var<T> leaky_relu_tangent(Var<T> pre, Var<T> dx, double slope) {
  require_same_tape(pre, dx);
  require_same_shape(pre.value(), dx.value(), "leaky_relu_tangent");
  const std::int32_t ip = pre.id, id = dx.id;
  const T s = static_cast<T>(slope);
  Tensor<T> out = dx.value().binaryExpr(pre.value(), [s](T d, T v) { return v > T(0) ? d : s * d; });
  return pre.tape->record(std::move(out), any_grad(dx), [ip, id, s](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    Tensor<T> dd = g.binaryExpr(t.value_of(ip), [s](T gv, T v) { return v > T(0) ? gv : s * gv; });
    accumulate(t, id, dd);
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  const std::int32_t ix = x.id;
  Tensor<T> out = x.value().unaryExpr([](T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
  });
  return x.tape->record(std::move(out), any_grad(x), [ix](Tape<T>& t, std::int32_t self) {
    const auto& y = t.value_of(self);
    Tensor<T> dx = t.grad_of(self).array() * y.array() * (T(1) - y.array());
    accumulate(t, ix, dx);
  });
}

template <typename T>
Var<T> exp(Var<T> x) {
  const std::int32_t ix = x.id;
  Tensor<T> out = x.value().array().exp();
  return x.tape->record(std::move(out), any_grad(x), [ix](Tape<T>& t, std::int32_t self) {
    accumulate(t, ix, t.grad_of(self).cwiseProduct(t.value_of(self)));
  });
}

template <typename T>
Var<T> log(Var<T> x) {
  const std::int32_t ix = x.id;
  Tensor<T> out = x.value().array().log();
  return x.tape->record(std::move(out), any_grad(x), [ix](Tape<T>& t, std::int32_t self) {
    accumulate(t, ix, t.grad_of(self).cwiseQuotient(t.value_of(ix)));
  });
}

template <typename T>
Var<T> sqrt(Var<T> x) {
  const std::int32_t ix = x.id;
  Tensor<T> out = x.value().array().sqrt();
  return x.tape->record(std::move(out), any_grad(x), [ix](Tape<T>& t, std::int32_t self) {
    const auto& y = t.value_of(self);
    Tensor<T> dx = t.grad_of(self).binaryExpr(y, [](T g, T v) { return v > T(0) ? g / (T(2) * v) : T(0); });
    accumulate(t, ix, dx);
  });
}

template <typename T>
Var<T> square(Var<T> x) {
  const std::int32_t ix = x.id;
  Tensor<T> out = x.value().array().square();
  return x.tape->record(std::move(out), any_grad(x), [ix](Tape<T>& t, std::int32_t self) {
    Tensor<T> dx = T(2) * t.grad_of(self).cwiseProduct(t.value_of(ix));
    accumulate(t, ix, dx);
  });
}

template <typename T>
Var<T> abs(Var<T> x) {
  const std::int32_t ix = x.id;
  Tensor<T> out = x.value().cwiseAbs();
  return x.tape->record(std::move(out), any_grad(x), [ix](Tape<T>& t, std::int32_t self) {
    Tensor<T> dx = t.grad_of(self).cwiseProduct(t.value_of(ix).unaryExpr([](T v) {
      return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
    }));
    accumulate(t, ix, dx);
  });
}

// -- linear algebra ------------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("autodiff: matmul inner dimension");
  const std::int32_t ia = a.id, ib = b.id;
  Tensor<T> out = a.value() * b.value();
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    if (t.requires_grad(Var<T>{&t, ia})) t.grad_buffer(ia).noalias() += g * t.value_of(ib).transpose();
    if (t.requires_grad(Var<T>{&t, ib})) t.grad_buffer(ib).noalias() += t.value_of(ia).transpose() * g;
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw std::invalid_argument("autodiff: linear shape mismatch");
  }
  const std::int32_t ix = x.id, iw = w.id, ib = b.id;
  Tensor<T> out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  const bool rg = any_grad(x) || any_grad(w, b);
  return x.tape->record(std::move(out), rg, [ix, iw, ib](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    if (t.requires_grad(Var<T>{&t, ix})) t.grad_buffer(ix).noalias() += g * t.value_of(iw).transpose();
    if (t.requires_grad(Var<T>{&t, iw})) t.grad_buffer(iw).noalias() += t.value_of(ix).transpose() * g;
    if (t.requires_grad(Var<T>{&t, ib})) t.grad_buffer(ib) += g.colwise().sum();
  });
}

// -- shape -------------------------------------------------------------------------

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) throw std::invalid_argument("autodiff: concat_cols rows differ");
  const std::int32_t ia = a.id, ib = b.id;
  const Eigen::Index ca = a.cols(), cb = b.cols();
  Tensor<T> out(a.rows(), ca + cb);
  out.leftCols(ca) = a.value();
  out.rightCols(cb) = b.value();
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib, ca, cb](Tape<T>& t, std::int32_t self) {
    const auto& g = t.grad_of(self);
    accumulate(t, ia, g.leftCols(ca));
    accumulate(t, ib, g.rightCols(cb));
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::invalid_argument("autodiff: slice_cols out of range");
  }
  const std::int32_t ia = a.id;
  Tensor<T> out = a.value().middleCols(start, count);
  return a.tape->record(std::move(out), any_grad(a), [ia, start, count](Tape<T>& t, std::int32_t self) {
    Var<T> av{&t, ia};
    if (!t.requires_grad(av)) return;
    t.grad_buffer(ia).middleCols(start, count) += t.grad_of(self);
  });
}

template <typename T>
Var<T> gather_rows(Var<T> a, std::span<const std::uint32_t> rows) {
  const std::int32_t ia = a.id;
  const auto& av = a.value();
  Tensor<T> out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= static_cast<std::uint32_t>(av.rows())) throw std::out_of_range("autodiff: gather_rows index");
    out.row(static_cast<Eigen::Index>(r)) = av.row(rows[r]);
  }
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return a.tape->record(std::move(out), any_grad(a), [ia, idx = std::move(idx)](Tape<T>& t, std::int32_t self) {
    Var<T> av2{&t, ia};
    if (!t.requires_grad(av2)) return;
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) ga.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
  });
}

// -- reductions ----------------------------------------------------------------------

template <typename T>
Var<T> row_sum(Var<T> a) {
  const std::int32_t ia = a.id;
  Tensor<T> out = a.value().rowwise().sum();
  const Eigen::Index cols = a.cols();
  return a.tape->record(std::move(out), any_grad(a), [ia, cols](Tape<T>& t, std::int32_t self) {
    Tensor<T> da = t.grad_of(self).col(0).replicate(1, cols);
    accumulate(t, ia, da);
  });
}

template <typename T>
Var<T> row_dot(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "row_dot");
  const std::int32_t ia = a.id, ib = b.id;
  Tensor<T> out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape->record(std::move(out), any_grad(a, b), [ia, ib](Tape<T>& t, std::int32_t self) {
    const auto g = t.grad_of(self).col(0).array();
    Tensor<T> da = t.value_of(ib).array().colwise() * g;
    Tensor<T> db = t.value_of(ia).array().colwise() * g;
    accumulate(t, ia, da);
    accumulate(t, ib, db);
  });
}

template <typename T>
Var<T> row_norm(Var<T> a) {
  const std::int32_t ia = a.id;
  Tensor<T> out = a.value().rowwise().norm();
  return a.tape->record(std::move(out), any_grad(a), [ia](Tape<T>& t, std::int32_t self) {
    const auto& n = t.value_of(self);
    const auto& g = t.grad_of(self);
    const auto& av = t.value_of(ia);
    Tensor<T> da(av.rows(), av.cols());
    for (Eigen::Index r = 0; r < av.rows(); ++r) {
      const T nr = n(r, 0);
      if (nr > T(0)) {
        da.row(r) = av.row(r) * (g(r, 0) / nr);
      } else {
        da.row(r).setZero();
      }
    }
    accumulate(t, ia, da);
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const std::int32_t ia = a.id;
  Tensor<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->record(std::move(out), any_grad(a), [ia](Tape<T>& t, std::int32_t self) {
    const T g = t.grad_of(self)(0, 0);
    Var<T> av{&t, ia};
    if (!t.requires_grad(av)) return;
    t.grad_buffer(ia).array() += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  if (a.value().size() == 0) throw std::invalid_argument("autodiff: mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

namespace {

template <typename T, bool kMax>
Var<T> col_extreme(Var<T> a) {
  const auto& av = a.value();
  if (av.rows() == 0) throw std::invalid_argument("autodiff: col_min/col_max of empty tensor");
  Tensor<T> out(1, av.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(av.cols()));
  for (Eigen::Index c = 0; c < av.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < av.rows(); ++r) {
      if (kMax ? av(r, c) > av(best, c) : av(r, c) < av(best, c)) best = r;
    }
    arg[static_cast<std::size_t>(c)] = best;
    out(0, c) = av(best, c);
  }
  const std::int32_t ia = a.id;
  return a.tape->record(std::move(out), any_grad(a), [ia, arg = std::move(arg)](Tape<T>& t, std::int32_t self) {
    Var<T> av2{&t, ia};
    if (!t.requires_grad(av2)) return;
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t c = 0; c < arg.size(); ++c) ga(arg[c], static_cast<Eigen::Index>(c)) += g(0, static_cast<Eigen::Index>(c));
  });
}

}  // namespace

template <typename T>
Var<T> col_min(Var<T> a) {
  return col_extreme<T, false>(a);
}

template <typename T>
Var<T> col_max(Var<T> a) {
  return col_extreme<T, true>(a);
}

template <typename T>
Var<T> max_all(Var<T> a) {
  const auto& av = a.value();
  if (av.size() == 0) throw std::invalid_argument("autodiff: max_all of empty tensor");
  Eigen::Index br = 0, bc = 0;
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    for (Eigen::Index c = 0; c < av.cols(); ++c) {
      if (av(r, c) > av(br, bc)) {
        br = r;
        bc = c;
      }
    }
  }
  Tensor<T> out(1, 1);
  out(0, 0) = av(br, bc);
  const std::int32_t ia = a.id;
  return a.tape->record(std::move(out), any_grad(a), [ia, br, bc](Tape<T>& t, std::int32_t self) {
    Var<T> av2{&t, ia};
    if (!t.requires_grad(av2)) return;
    t.grad_buffer(ia)(br, bc) += t.grad_of(self)(0, 0);
  });
}

template <typename T>
Var<T> segment_logsumexp(Var<T> a, std::span<const std::uint32_t> offsets) {
  const auto& av = a.value();
  if (av.cols() != 1) throw std::invalid_argument("autodiff: segment_logsumexp needs a column");
  if (offsets.empty() || offsets.back() != static_cast<std::uint32_t>(av.rows())) {
    throw std::invalid_argument("autodiff: segment offsets do not cover input");
  }
  const std::size_t segs = offsets.size() - 1;
  Tensor<T> out(static_cast<Eigen::Index>(segs), 1);
  for (std::size_t s = 0; s < segs; ++s) {
    const std::uint32_t b = offsets[s], e = offsets[s + 1];
    if (b == e) {
      out(static_cast<Eigen::Index>(s), 0) = static_cast<T>(kEmptySegment);
      continue;
    }
    T m = -std::numeric_limits<T>::infinity();
    for (std::uint32_t k = b; k < e; ++k) m = std::max(m, av(k, 0));
    T acc = 0;
    for (std::uint32_t k = b; k < e; ++k) acc += std::exp(av(k, 0) - m);
    out(static_cast<Eigen::Index>(s), 0) = m + std::log(acc);
  }
  const std::int32_t ia = a.id;
  std::vector<std::uint32_t> off(offsets.begin(), offsets.end());
  return a.tape->record(std::move(out), any_grad(a), [ia, off = std::move(off)](Tape<T>& t, std::int32_t self) {
    Var<T> av2{&t, ia};
    if (!t.requires_grad(av2)) return;
    const auto& g = t.grad_of(self);
    const auto& y = t.value_of(self);
    const auto& x = t.value_of(ia);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      for (std::uint32_t k = off[s]; k < off[s + 1]; ++k) {
        ga(k, 0) += g(static_cast<Eigen::Index>(s), 0) * std::exp(x(k, 0) - y(static_cast<Eigen::Index>(s), 0));
      }
    }
  });
}

#define UVFORGE_AD_INSTANTIATE(T)                                                         \
  template class Tape<T>;                                                                 \
  template Var<T> add(Var<T>, Var<T>);                                                    \
  template Var<T> sub(Var<T>, Var<T>);                                                    \
  template Var<T> mul(Var<T>, Var<T>);                                                    \
  template Var<T> div(Var<T>, Var<T>);                                                    \
  template Var<T> sub_row(Var<T>, Var<T>);                                                \
  template Var<T> mul_col(Var<T>, Var<T>);                                                \
  template Var<T> div_scalar(Var<T>, Var<T>);                                             \
  template Var<T> mul_scalar(Var<T>, Var<T>);                                             \
  template Var<T> scale(Var<T>, double);                                                  \
  template Var<T> add_scalar(Var<T>, double);                                             \
  template Var<T> mul_const(Var<T>, const Tensor<T>&);                                    \
  template Var<T> leaky_relu(Var<T>, double);                                             \
  template Var<T> leaky_relu_tangent(Var<T>, Var<T>, double);                             \
  template Var<T> sigmoid(Var<T>);                                                        \
  template Var<T> exp(Var<T>);                                                            \
  template Var<T> log(Var<T>);                                                            \
  template Var<T> sqrt(Var<T>);                                                           \
  template Var<T> square(Var<T>);                                                         \
  template Var<T> abs(Var<T>);                                                            \
  template Var<T> matmul(Var<T>, Var<T>);                                                 \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                         \
  template Var<T> concat_cols(Var<T>, Var<T>);                                            \
  template Var<T> slice_cols(Var<T>, Eigen::Index, Eigen::Index);                         \
  template Var<T> gather_rows(Var<T>, std::span<const std::uint32_t>);                    \
  template Var<T> row_sum(Var<T>);                                                        \
  template Var<T> row_dot(Var<T>, Var<T>);                                                \
  template Var<T> row_norm(Var<T>);                                                       \
  template Var<T> sum(Var<T>);                                                            \
  template Var<T> mean(Var<T>);                                                           \
  template Var<T> col_min(Var<T>);                                                        \
  template Var<T> col_max(Var<T>);                                                        \
  template Var<T> max_all(Var<T>);                                                        \
  template Var<T> segment_logsumexp(Var<T>, std::span<const std::uint32_t>);

UVFORGE_AD_INSTANTIATE(float)
UVFORGE_AD_INSTANTIATE(double)

#undef UVFORGE_AD_INSTANTIATE

}  // namespace uvforge::ad
