#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uvforge/common.hpp"

namespace uvforge {

/// Immutable triangle mesh with per-vertex unit normals.
///
/// Construction validates indices (in range, three distinct per face) and
/// computes area-weighted normals when none are supplied.
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::vector<Vec3> vertices, std::vector<Face> faces, std::optional<std::vector<Vec3>> normals = std::nullopt);

  [[nodiscard]] const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
  [[nodiscard]] const std::vector<Face>& faces() const noexcept { return faces_; }
  [[nodiscard]] const std::vector<Vec3>& normals() const noexcept { return normals_; }
  [[nodiscard]] std::size_t num_vertices() const noexcept { return vertices_.size(); }
  [[nodiscard]] std::size_t num_faces() const noexcept { return faces_.size(); }

  /// Warnings raised while building (zero-area vertex stars).
  [[nodiscard]] const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  [[nodiscard]] Vec3 face_normal(std::size_t f) const;  // unit, zero for degenerate faces
  [[nodiscard]] double face_area(std::size_t f) const;
  [[nodiscard]] Vec3 face_centroid(std::size_t f) const;
  [[nodiscard]] double bbox_diagonal() const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<Vec3> normals_;
  std::vector<std::string> warnings_;
};

/// Per-face integer labels in [0, count).
struct Labeling {
  std::vector<int> labels;
  int count = 0;

  /// Builds a labeling with count = max label + 1.
  static Labeling from_labels(std::vector<int> labels);
};

struct FacePair {
  Index face_a;
  Index face_b;
  std::array<Index, 2> edge;  // shared vertex indices, ascending
  double dihedral;            // interior angle in (0, 2pi); pi is flat, < pi convex
  double edge_length;
};

struct Adjacency {
  std::vector<std::vector<Index>> vertex_one_rings;  // sorted, unique
  std::vector<FacePair> face_pairs;
  std::vector<std::vector<Index>> face_neighbors;    // manifold edge neighbors per face
  std::vector<std::array<Index, 2>> non_manifold_edges;
};

struct SubmeshMap {
  Mesh submesh;
  std::vector<Index> vertex_back_map;  // submesh vertex -> parent vertex
  std::vector<Index> face_back_map;    // submesh face -> parent face
};

/// Area-weighted vertex normals. Vertices whose incident faces have zero
/// total area get (0,0,1) and a warning appended to `warnings` if given.
[[nodiscard]] std::vector<Vec3> compute_vertex_normals(std::span<const Vec3> vertices, std::span<const Face> faces,
                                                       std::vector<std::string>* warnings = nullptr);
[[nodiscard]] std::vector<Vec3> compute_vertex_normals(const Mesh& mesh);

/// One-rings and dihedral face pairs. Edges with more than two incident
/// faces are reported in non_manifold_edges and excluded from face_pairs.
[[nodiscard]] Adjacency face_adjacency(const Mesh& mesh);

/// Faces with `label`, unreferenced vertices dropped, normals recomputed.
/// Throws InputError when no face carries the label.
[[nodiscard]] SubmeshMap extract_submesh(const Mesh& mesh, const Labeling& labeling, int label);

/// Centers the mesh at its bounding-box center and scales the bounding-box
/// diagonal to 1. Throws InputError when all vertices coincide.
[[nodiscard]] Mesh normalize_mesh(const Mesh& mesh);

/// Per-face component ids (0-based, in order of first face) of the graph
/// joining edge-adjacent faces carrying equal labels.
[[nodiscard]] std::vector<int> connected_components(const Mesh& mesh, const Labeling& labeling);
[[nodiscard]] std::vector<int> connected_components(const Adjacency& adjacency, std::span<const int> labels);

}  // namespace uvforge
