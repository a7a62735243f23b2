#pragma once

// Central finite-difference oracle for every loss term composed with both
// cycles. Shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uvforge/losses.hpp"
#include "uvforge/nn.hpp"
#include "uvforge/primitives.hpp"
#include "uvforge/rng.hpp"

namespace uvforge::testing {

enum class LossTerm { wrap, cycle_p, cycle_n, repulsion, ddl, tdl, ao_seam };

inline const std::vector<LossTerm>& all_loss_terms() {
  static const std::vector<LossTerm> terms{LossTerm::wrap, LossTerm::cycle_p, LossTerm::cycle_n, LossTerm::repulsion,
                                           LossTerm::ddl,  LossTerm::tdl,     LossTerm::ao_seam};
  return terms;
}

inline std::string term_name(LossTerm t) {
  switch (t) {
    case LossTerm::wrap: return "wrap";
    case LossTerm::cycle_p: return "cycle_p";
    case LossTerm::cycle_n: return "cycle_n";
    case LossTerm::repulsion: return "repulsion";
    case LossTerm::ddl: return "ddl";
    case LossTerm::tdl: return "tdl";
    case LossTerm::ao_seam: return "ao_seam";
  }
  return "?";
}

/// 50-vertex closed toy mesh (7 rings x 8 segments + 2 poles), normalized.
inline Mesh toy_mesh_50() { return normalize_mesh(make_uv_sphere(7, 8)); }

/// Deterministic exposure-like field in [0,1].
inline std::vector<double> toy_ao(const Mesh& m) {
  std::vector<double> ao;
  for (const auto& v : m.vertices()) ao.push_back(0.5 + 0.45 * std::sin(7.0 * v.x() + 3.0 * v.z()));
  return ao;
}

/// Small random network with every layer (including the zero-initialized
/// residual heads) perturbed so no gradient path is trivially zero.
inline nn::ParamNet<double> toy_net(std::uint64_t seed, nn::NetShape shape = {16, 8}) {
  auto net = nn::init_params(seed, shape).cast<double>();
  Rng rng(seed, 77);
  for (auto* t : net.tensors()) {
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] += rng.uniform(-0.1, 0.1);
  }
  return net;
}

struct ToyProblem {
  Mesh mesh;
  losses::LossContext<double> ctx;
  ad::Tensor<double> lattice;
  ad::Tensor<double> ao;

  explicit ToyProblem(const Mesh& m) : mesh(m), ctx(losses::LossContext<double>::from_mesh(m)) {
    lattice = nn::grid_lattice(m.num_vertices()).cast<double>();
    const auto field = toy_ao(m);
    ao.resize(static_cast<Eigen::Index>(field.size()), 1);
    for (std::size_t i = 0; i < field.size(); ++i) ao(static_cast<Eigen::Index>(i), 0) = field[i];
  }

  /// Records the whole forward pass and returns the requested term.
  ad::Var<double> build(ad::Tape<double>& tape, const nn::BoundNet<double>& net, LossTerm term) const {
    auto c2 = nn::forward_cycle_2d(net, tape.constant(lattice));
    auto c3 = nn::forward_cycle_3d(net, tape.constant(ctx.points));
    auto frame = nn::differential_frame(net, c3.wrap);
    losses::LossWeights w;
    auto obj = losses::base_objective(ctx, c2, c3, frame, w, 1234);
    switch (term) {
      case LossTerm::wrap: return obj.wrap;
      case LossTerm::cycle_p: return obj.cycle_p;
      case LossTerm::cycle_n: return obj.cycle_n;
      case LossTerm::repulsion: return obj.repel;
      case LossTerm::ddl: return obj.ddl;
      case LossTerm::tdl: return obj.tdl;
      case LossTerm::ao_seam: {
        losses::add_visibility(obj, ctx, c3, ao, w, losses::SeamConfig{});
        return obj.ao;
      }
    }
    return obj.total;
  }

  double value(const nn::ParamNet<double>& params, LossTerm term) const {
    ad::Tape<double> tape;
    const auto net = nn::bind(tape, params, false);
    return build(tape, net, term).scalar();
  }
};

struct GradCheckStats {
  std::size_t total = 0;
  std::size_t within_tight = 0;  // relative error <= 1e-4
  std::size_t within_loose = 0;  // relative error <= 1e-3
  double worst = 0;
  [[nodiscard]] double tight_fraction() const { return total ? double(within_tight) / double(total) : 0.0; }
};

/// Relative error |g - fd| / max(|g|, |fd|, floor) with floor = 1e-6 times
/// the largest analytic gradient entry, so entries that are zero up to
/// roundoff do not count as failures.
inline GradCheckStats gradient_check(const ToyProblem& problem, nn::ParamNet<double> params, LossTerm term,
                                     double h = 1e-6) {
  std::vector<ad::Tensor<double>> analytic;
  {
    ad::Tape<double> tape;
    const auto net = nn::bind(tape, params);
    auto loss = problem.build(tape, net, term);
    tape.backward(loss);
    for (const auto& p : net.params) analytic.push_back(tape.grad(p));
  }
  double scale = 0;
  for (const auto& g : analytic) scale = std::max(scale, g.cwiseAbs().maxCoeff());
  const double floor = std::max(1e-6 * scale, 1e-12);
  GradCheckStats stats;
  auto tensors = params.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& tensor = *tensors[t];
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      const double orig = tensor.data()[i];
      tensor.data()[i] = orig + h;
      const double up = problem.value(params, term);
      tensor.data()[i] = orig - h;
      const double down = problem.value(params, term);
      tensor.data()[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double g = analytic[t].data()[i];
      const double err = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), floor});
      ++stats.total;
      stats.within_tight += err <= 1e-4;
      stats.within_loose += err <= 1e-3;
      stats.worst = std::max(stats.worst, err);
    }
  }
  return stats;
}

}  // namespace uvforge::testing
