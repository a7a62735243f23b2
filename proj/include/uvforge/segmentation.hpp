#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uvforge/fields.hpp"
#include "uvforge/mesh.hpp"

namespace uvforge {

/// One-dimensional Gaussian mixture.
struct Gmm1d {
  int K = 0;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  std::vector<double> log_likelihood_trace;  // total log-likelihood after init and every EM step

  [[nodiscard]] double log_likelihood(const std::vector<double>& values) const;
  /// Row-major |values| x K responsibilities.
  [[nodiscard]] std::vector<double> posteriors(const std::vector<double>& values) const;
};

inline constexpr double kGmmVarianceFloor = 1e-6;

/// EM fit from quantile-initialized means. Stops when the log-likelihood
/// gain drops below `tol` or after `max_iter` steps. Throws SegmentationError
/// when K exceeds the number of distinct values.
[[nodiscard]] Gmm1d fit_gmm_1d(const std::vector<double>& values, int K, int max_iter = 200, double tol = 1e-8,
                               std::uint64_t seed = 0);

/// `iterations` rounds of area-weighted averaging over each face and its
/// edge neighbours, then (log(1+x) - min) / (max - min). A constant result
/// maps to zeros and appends a warning.
[[nodiscard]] std::vector<double> smooth_and_normalize(const Mesh& mesh, const Adjacency& adjacency,
                                                       const std::vector<double>& field, int iterations = 2,
                                                       std::vector<std::string>* warnings = nullptr);

inline constexpr double kSmoothnessFloor = 1e-4;
inline constexpr double kConvexFactor = 0.1;

/// Potts weight per adjacency face pair:
/// lambda * len * max(floor, factor * -log(min(theta, 2pi - theta) / pi + 1e-8)),
/// factor 0.1 on convex pairs (theta < pi) and 1 otherwise.
[[nodiscard]] double smoothness_cost(double dihedral, double edge_length, double lambda);
[[nodiscard]] std::vector<double> smoothness_costs(const Adjacency& adjacency, double lambda);

struct PairTerm {
  Index a, b;
  double weight;  // paid when the two labels differ
};

struct GraphCutProblem {
  int num_labels = 0;
  std::vector<double> unary;  // row-major faces x labels
  std::vector<PairTerm> pairs;

  [[nodiscard]] std::size_t num_nodes() const { return num_labels > 0 ? unary.size() / num_labels : 0; }
  [[nodiscard]] double energy(const std::vector<int>& labels) const;
  /// Throws SegmentationError on negative or non-finite costs or bad shapes.
  void validate() const;
};

struct ExpansionResult {
  std::vector<int> labels;
  std::vector<double> energy_trace;  // initial energy, then after every accepted move
  int accepted_moves = 0;
};

/// Alpha-expansion with exact min-cuts. Labels are visited in ascending
/// order each sweep; a move is kept only when it strictly lowers the energy.
[[nodiscard]] ExpansionResult alpha_expansion(const GraphCutProblem& problem, std::vector<int> init, int sweeps = 3);

/// Every edge-connected monochrome region becomes its own label, numbered
/// in order of first face.
[[nodiscard]] Labeling relabel_components(const Adjacency& adjacency, const std::vector<int>& labels);
[[nodiscard]] Labeling relabel_components(const Mesh& mesh, const Labeling& labeling);

/// Default component threshold: max(20, 0.5% of the faces).
[[nodiscard]] int default_min_faces(std::size_t num_faces);

/// Merges every component smaller than `min_faces` into the adjacent
/// component with the longest shared boundary, smallest first.
[[nodiscard]] std::vector<int> merge_small_components(const Adjacency& adjacency, std::vector<int> labels,
                                                      int min_faces);

/// Simultaneous vote: a face adopts the label most frequent among its edge
/// neighbours when that label is unique and more frequent than its own.
[[nodiscard]] std::vector<int> majority_filter(const Adjacency& adjacency, const std::vector<int>& labels, int rounds = 1);

/// Merge small components, run the majority filter, merge again (the vote
/// can strand single faces) and relabel. No-op with a warning when the mesh
/// has fewer than `min_faces` faces.
[[nodiscard]] Labeling postprocess_labels(const Mesh& mesh, const Adjacency& adjacency, const Labeling& labeling,
                                          int min_faces, int majority_rounds = 1,
                                          std::vector<std::string>* warnings = nullptr);

struct SegmentConfig {
  FieldConfig fields;
  int smooth_iterations = 2;
  double lambda_smooth = 0.3;  // relative to the mean unary cost
  int sweeps = 3;
  int gmm_max_iter = 200;
  double gmm_tol = 1e-8;
  int min_faces = 0;  // 0: default_min_faces
  int majority_rounds = 1;
};

struct SegmentResult {
  Labeling labeling;
  std::vector<double> shdf;        // raw per-face ShDF of the normalized mesh
  std::vector<double> normalized;  // smoothed, log-normalized field
  Gmm1d gmm;
  std::vector<int> initial_labels;  // argmax posterior
  std::vector<int> cut_labels;      // after alpha-expansion
  std::vector<double> energy_trace;
  std::vector<std::string> warnings;
};

/// Full partition pipeline on the normalized copy of `mesh`: ShDF, smoothing
/// and normalization, GMM, alpha-expansion, component relabeling and
/// post-processing. `precomputed_shdf`, when non-empty, replaces the ShDF
/// stage (it must come from the normalized mesh with the same config).
[[nodiscard]] SegmentResult segment_mesh(const Mesh& mesh, int K, const SegmentConfig& config = {},
                                         const std::vector<double>& precomputed_shdf = {});

/// Per-vertex labels by majority over incident faces (ties to the smaller label).
[[nodiscard]] std::vector<int> vertex_labels(const Mesh& mesh, const Labeling& labeling);

}  // namespace uvforge
