#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "uvforge/mesh.hpp"

namespace uvforge {

struct Hit {
  Index face;
  double t;  // distance along the (not necessarily unit) direction
};

struct BvhNode {
  Vec3 lo, hi;
  Index first;  // leaf: offset into face_order; inner: index of the right child
  Index count;  // faces in a leaf, 0 for inner nodes (left child is the next node)
  [[nodiscard]] bool leaf() const { return count > 0; }
};

/// Median-split bounding volume hierarchy over the faces of a mesh.
///
/// Closest-hit queries return exactly what brute force over all faces
/// returns: the same triangle test is used, and ties in t go to the lower
/// face index. Zero-area faces are never hit.
class Bvh {
 public:
  explicit Bvh(const Mesh& mesh, int leaf_size = 4);

  [[nodiscard]] std::optional<Hit> intersect(const Vec3& origin, const Vec3& dir, double t_min = 0.0,
                                             double t_max = std::numeric_limits<double>::infinity()) const;
  /// Any hit in (t_min, t_max).
  [[nodiscard]] bool occluded(const Vec3& origin, const Vec3& dir, double t_min = 0.0,
                              double t_max = std::numeric_limits<double>::infinity()) const;

  [[nodiscard]] const std::vector<BvhNode>& nodes() const noexcept { return nodes_; }
  [[nodiscard]] const std::vector<Index>& face_order() const noexcept { return order_; }

 private:
  struct Tri {
    Vec3 v0, e1, e2;
    bool degenerate;
  };
  Index build(Index begin, Index end, std::vector<Vec3>& centroids, int leaf_size);

  std::vector<Tri> tris_;  // indexed by face id
  std::vector<BvhNode> nodes_;
  std::vector<Index> order_;
  double pad_ = 0.0;
};

/// Reference closest hit over every face of the mesh.
[[nodiscard]] std::optional<Hit> brute_force_intersect(const Mesh& mesh, const Vec3& origin, const Vec3& dir,
                                                       double t_min = 0.0,
                                                       double t_max = std::numeric_limits<double>::infinity());

/// Moller-Trumbore test shared by the BVH and the brute-force reference.
/// Returns t in (t_min, t_max) or nothing.
[[nodiscard]] std::optional<double> intersect_triangle(const Vec3& v0, const Vec3& e1, const Vec3& e2, const Vec3& origin,
                                                       const Vec3& dir, double t_min, double t_max);

/// True when the triangle spanned by edges e1, e2 has (numerically) zero area.
[[nodiscard]] bool degenerate_triangle(const Vec3& e1, const Vec3& e2);

}  // namespace uvforge
