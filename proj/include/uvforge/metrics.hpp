#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "uvforge/mesh.hpp"

namespace uvforge::metrics {

/// UV coordinates per face corner; per-vertex maps convert via corner_uv().
using CornerUV = std::vector<std::array<Vec2, 3>>;

[[nodiscard]] CornerUV corner_uv(const Mesh& mesh, std::span<const Vec2> vertex_uv);

/// Side of the UV bounding square, L(Q).
[[nodiscard]] double uv_side(std::span<const Vec2> uv);

/// Vertex i is a seam vertex iff max_j |q_i - q_j| over its 1-ring exceeds
/// tau_scale * L(Q).
[[nodiscard]] std::vector<bool> seam_vertices_hard(const Adjacency& adjacency, std::span<const Vec2> uv,
                                                   double tau_scale = 0.1);

/// Per-corner variant: ring distances are measured between corners of
/// shared faces, and a vertex whose corners carry more than one distinct UV
/// is always a seam vertex.
[[nodiscard]] std::vector<bool> seam_vertices_hard(const Mesh& mesh, const CornerUV& uv, double tau_scale = 0.1);

/// Mean of ao over the mask; nullopt when the mask is empty.
[[nodiscard]] std::optional<double> mean_seam_ao(const std::vector<bool>& mask, std::span<const double> ao);

/// 3D-area-weighted mean over faces of the mean over corners of
/// min(theta_uv/theta_3d, theta_3d/theta_uv). Degenerate UV faces score 0.
[[nodiscard]] double conformality(const Mesh& mesh, const CornerUV& uv);
[[nodiscard]] double conformality(const Mesh& mesh, std::span<const Vec2> uv);

/// 3D-area-weighted mean of min(a_uv/a_3d, a_3d/a_uv) on normalized areas.
/// Degenerate UV faces score 0.
[[nodiscard]] double equiareality(const Mesh& mesh, const CornerUV& uv);
[[nodiscard]] double equiareality(const Mesh& mesh, std::span<const Vec2> uv);

/// Minimum over one-to-one label correspondences of the fraction of
/// disagreeing elements (rectangular assignment, Hungarian method).
[[nodiscard]] double hamming_matched(std::span<const int> a, std::span<const int> b);

/// Fraction of element pairs grouped or separated identically.
[[nodiscard]] double rand_index(std::span<const int> a, std::span<const int> b);

/// Minimum-cost perfect assignment of a square cost matrix (row -> column).
[[nodiscard]] std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

inline constexpr int kHistogramBins = 20;

struct Histogram {
  std::vector<double> edges;  // kHistogramBins + 1 over [0, 1]
  std::vector<double> seam;   // fraction of seam vertices per bin
  std::vector<double> all;    // fraction of all vertices per bin
};

/// Bin fractions (summing to 1 per non-empty series) of ao values in [0,1].
[[nodiscard]] Histogram ao_histogram(const std::vector<bool>& mask, std::span<const double> ao);

struct MetricReport {
  double conformality = 0;
  double equiareality = 0;
  std::optional<double> mean_seam_ao;
  std::size_t seam_vertex_count = 0;
  std::size_t vertex_count = 0;
  Histogram histogram;
  std::optional<double> hamming;
  std::optional<double> rand_index;
};

void to_json(nlohmann::json& j, const MetricReport& r);

[[nodiscard]] std::string histogram_csv(const Histogram& h);

struct EvalOptions {
  double tau_scale = 0.1;
};

/// Full report for a mesh with per-corner UVs and a per-vertex AO field.
/// Reference labels (per face) enable hamming and rand_index against
/// `labels`.
[[nodiscard]] MetricReport evaluate(const Mesh& mesh, const CornerUV& uv, std::span<const double> ao,
                                    const EvalOptions& options = {}, std::span<const int> labels = {},
                                    std::span<const int> reference = {});

}  // namespace uvforge::metrics
