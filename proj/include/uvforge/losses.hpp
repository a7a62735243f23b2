#pragma once

// Differentiable objectives of the cycle-mapping parameterization: Chamfer
// and wrap terms, cycle consistency, UV repulsion, Jacobian and triangle
// distortion, soft seam membership and the AO-weighted seam term.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "uvforge/autodiff.hpp"
#include "uvforge/mesh.hpp"
#include "uvforge/nn.hpp"

namespace uvforge::losses {

using ad::Tensor;
using ad::Var;

struct LossWeights {
  double wrap = 1.0;
  double repulsion = 0.01;
  double cycle_p = 0.01;
  double cycle_n = 0.005;
  double ddl = 0.01;
  double tdl = 1e-5;
  double lambda_vis = 0.004;
  double kappa_norm = 0.1;
  double epsilon = 1e-8;

  void validate() const;
};

struct SeamConfig {
  int neighbor_count = 8;  // only used when a vertex has no mesh 1-ring
  double gamma = 100.0;
  double beta = 50.0;
  double tau_scale = 0.1;

  void validate() const;
};

inline constexpr std::size_t kRepulsionCandidates = 64;
inline constexpr double kDegenerateUvArea = 1e-12;

/// For every row of `a`, the index of the nearest row of `b` (squared
/// Euclidean, ties to the lowest index). Blocked brute force.
[[nodiscard]] std::vector<std::uint32_t> nearest_rows(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

template <typename T>
[[nodiscard]] Eigen::MatrixXd to_double(const Tensor<T>& t) {
  return t.template cast<double>();
}

/// Mean of squared nearest distances from A to B plus B to A.
template <typename T>
Var<T> chamfer(Var<T> a, Var<T> b);

/// chamfer(p_hat, P) + kappa * (1 - mean cos(n_hat, N[nn(p_hat)])).
template <typename T>
Var<T> wrap_loss(Var<T> p_hat, Var<T> n_hat, Var<T> points, Var<T> normals, double kappa_norm);

template <typename T>
struct CycleTerms {
  Var<T> position;
  Var<T> normal;
};

template <typename T>
CycleTerms<T> cycle_loss(Var<T> q_hat, Var<T> q_hat_cycle, Var<T> points, Var<T> p_tilde, Var<T> n_source,
                         Var<T> n_tilde);

/// Row-wise cosine similarity (column vector).
template <typename T>
Var<T> cosine(Var<T> a, Var<T> b);

/// (q - min) / max side: fits q into the unit square, aspect preserved.
template <typename T>
Var<T> normalize_uv(Var<T> q);

/// Side of the bounding square of q, L(Q) (1x1, differentiable).
template <typename T>
Var<T> uv_side(Var<T> q);

/// Default hinge margin 0.5 / sqrt(N_v).
[[nodiscard]] double default_margin(std::size_t num_vertices);

/// Per-vertex nearest UV neighbour among `budget` candidates drawn with the
/// seeded RNG; every other vertex is scanned when budget >= N - 1.
[[nodiscard]] std::vector<std::uint32_t> repulsion_pairs(const Eigen::MatrixXd& q, std::size_t budget,
                                                         std::uint64_t seed);

/// mean over vertices of max(0, m - |q_i - q_nn(i)|)^2.
template <typename T>
Var<T> repulsion_loss(Var<T> q_normalized, double margin, std::size_t pair_budget = kRepulsionCandidates,
                      std::uint64_t seed = 0);

/// mean[(e1.e2)^2 + (|e1| - |e2|)^2].
template <typename T>
Var<T> ddl(Var<T> e1, Var<T> e2);

/// Per-mesh constants for the triangle distortion loss.
struct TriangleData {
  std::vector<std::uint32_t> corner[3];  // vertex index per face corner
  Eigen::MatrixXd cos3d;                 // F x 3 corner cosines
  Eigen::VectorXd area3d;                // F, normalized to sum 1
  [[nodiscard]] static TriangleData from_mesh(const Mesh& mesh);
};

/// Mean over faces of sum_corners (cos_uv - cos_3d)^2 + (a_uv/sum a_uv -
/// a_3d/sum a_3d)^2; faces with UV area below kDegenerateUvArea score 1.
template <typename T>
Var<T> tdl(Var<T> q, const TriangleData& tri);

/// Directed 1-ring pairs in CSR form (sources sorted).
struct RingPairs {
  std::vector<std::uint32_t> offsets;  // size N_v + 1
  std::vector<std::uint32_t> source;
  std::vector<std::uint32_t> target;
  std::size_t isolated = 0;
  [[nodiscard]] static RingPairs from_adjacency(const Adjacency& adjacency);
};

template <typename T>
struct SeamScores {
  Var<T> eta;      // N_v x 1
  Var<T> s;        // N_v x 1
  Var<T> uv_side;  // 1 x 1
  std::vector<std::string> warnings;
};

/// eta_i = (1/gamma) logsumexp(gamma d_ij) over the 1-ring, s_i =
/// sigmoid(beta (eta_i - tau_scale L(Q))). Isolated vertices get s = 0.
template <typename T>
SeamScores<T> soft_seam_scores(const RingPairs& rings, Var<T> q, const SeamConfig& config);

/// sum s AO / (sum s + eps).
template <typename T>
Var<T> ao_seam_loss(Var<T> s, const Tensor<T>& ao, double epsilon = 1e-8);

struct LossBreakdown {
  double wrap = 0, repel = 0, cycle_p = 0, cycle_n = 0, ddl = 0, tdl = 0, ao = 0, total = 0;
  bool has_ao = false;  // serialized as "ao": null when false
};

void to_json(nlohmann::json& j, const LossBreakdown& b);
void from_json(const nlohmann::json& j, LossBreakdown& b);

/// Mesh-side constants shared by every step of a training run.
template <typename T>
struct LossContext {
  Tensor<T> points;   // normalized vertices
  Tensor<T> normals;
  TriangleData triangles;
  RingPairs rings;
  double margin = 0;
  [[nodiscard]] static LossContext from_mesh(const Mesh& mesh);
};

template <typename T>
struct Objective {
  Var<T> wrap, repel, cycle_p, cycle_n, ddl, tdl;
  Var<T> base;
  Var<T> ao;     // invalid unless a visibility objective was built
  Var<T> total;  // base, or base + lambda_vis ao
  std::vector<std::string> warnings;
  std::vector<double> seam_soft;  // filled for visibility objectives

  [[nodiscard]] LossBreakdown breakdown() const;
};

/// Weighted sum wrap + w_rep repel + w_cp cycle_p + w_cn cycle_n + w_ddl ddl +
/// w_tdl tdl. Throws TrainingError when any term is not finite.
template <typename T>
Objective<T> base_objective(const LossContext<T>& ctx, const nn::Cycle2d<T>& c2, const nn::Cycle3d<T>& c3,
                            const nn::Frame<T>& frame, const LossWeights& weights, std::uint64_t repulsion_seed);

/// Adds seam scores on the normalized UVs and total = base + lambda_vis ao.
template <typename T>
void add_visibility(Objective<T>& objective, const LossContext<T>& ctx, const nn::Cycle3d<T>& c3,
                    const Tensor<T>& ao, const LossWeights& weights, const SeamConfig& seam);

/// base + lambda_vis * ao_seam.
template <typename T>
Var<T> visibility_objective(Var<T> base, Var<T> ao_seam, double lambda_vis);

}  // namespace uvforge::losses
