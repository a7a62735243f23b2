#include "uvforge/bvh.hpp"

#include <algorithm>
#include <numeric>

namespace uvforge {

bool degenerate_triangle(const Vec3& e1, const Vec3& e2) {
  const double scale = std::max(e1.squaredNorm(), e2.squaredNorm());
  return !(e1.cross(e2).squaredNorm() > 1e-24 * scale * scale);
}

std::optional<double> intersect_triangle(const Vec3& v0, const Vec3& e1, const Vec3& e2, const Vec3& origin,
                                         const Vec3& dir, double t_min, double t_max) {
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (det == 0.0) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - v0;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (!(t > t_min && t < t_max)) return std::nullopt;
  return t;
}

std::optional<Hit> brute_force_intersect(const Mesh& mesh, const Vec3& origin, const Vec3& dir, double t_min,
                                         double t_max) {
  std::optional<Hit> best;
  const auto& v = mesh.vertices();
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const Face& t = mesh.faces()[f];
    const Vec3 e1 = v[t[1]] - v[t[0]], e2 = v[t[2]] - v[t[0]];
    if (degenerate_triangle(e1, e2)) continue;
    const auto hit = intersect_triangle(v[t[0]], e1, e2, origin, dir, t_min, t_max);
    if (hit && (!best || *hit < best->t)) best = Hit{static_cast<Index>(f), *hit};
  }
  return best;
}

Bvh::Bvh(const Mesh& mesh, int leaf_size) {
  if (mesh.num_faces() == 0) throw InputError("build_bvh: mesh has no faces");
  const auto& v = mesh.vertices();
  std::vector<Vec3> centroids;
  tris_.reserve(mesh.num_faces());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const Face& t = mesh.faces()[f];
    const Vec3 e1 = v[t[1]] - v[t[0]], e2 = v[t[2]] - v[t[0]];
    tris_.push_back({v[t[0]], e1, e2, degenerate_triangle(e1, e2)});
    centroids.push_back(mesh.face_centroid(f));
  }
  pad_ = 1e-9 * std::max(1.0, mesh.bbox_diagonal());
  order_.resize(mesh.num_faces());
  std::iota(order_.begin(), order_.end(), Index{0});
  nodes_.reserve(2 * mesh.num_faces());
  build(0, static_cast<Index>(order_.size()), centroids, std::max(1, leaf_size));
}

Index Bvh::build(Index begin, Index end, std::vector<Vec3>& centroids, int leaf_size) {
  const auto id = static_cast<Index>(nodes_.size());
  nodes_.push_back({});
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  Vec3 clo = lo, chi = hi;
  for (Index i = begin; i < end; ++i) {
    const Tri& t = tris_[order_[i]];
    for (const Vec3& p : {t.v0, Vec3(t.v0 + t.e1), Vec3(t.v0 + t.e2)}) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    clo = clo.cwiseMin(centroids[order_[i]]);
    chi = chi.cwiseMax(centroids[order_[i]]);
  }
  nodes_[id].lo = lo.array() - pad_;
  nodes_[id].hi = hi.array() + pad_;
  if (end - begin <= static_cast<Index>(leaf_size)) {
    nodes_[id].first = begin;
    nodes_[id].count = end - begin;
    return id;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const Index mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](Index a, Index b) {
    const double ca = centroids[a][axis], cb = centroids[b][axis];
    return ca < cb || (ca == cb && a < b);
  });
  build(begin, mid, centroids, leaf_size);
  const Index right = build(mid, end, centroids, leaf_size);
  nodes_[id].first = right;
  nodes_[id].count = 0;
  return id;
}

namespace {

// Slab test; stores the entry distance and reports whether the box is hit.
bool box_entry(const BvhNode& n, const Vec3& origin, const Vec3& inv_dir, double t_min, double t_max, double& entry) {
  double t0 = t_min, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double near = (n.lo[a] - origin[a]) * inv_dir[a];
    double far = (n.hi[a] - origin[a]) * inv_dir[a];
    if (std::isnan(near) || std::isnan(far)) {
      // Zero direction component with the origin on a slab plane.
      if (origin[a] < n.lo[a] || origin[a] > n.hi[a]) return false;
      continue;
    }
    if (near > far) std::swap(near, far);
    t0 = std::max(t0, near);
    t1 = std::min(t1, far);
    if (t0 > t1) return false;
  }
  entry = t0;
  return true;
}

}  // namespace

std::optional<Hit> Bvh::intersect(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const {
  const Vec3 inv_dir = dir.cwiseInverse();
  std::optional<Hit> best;
  Index stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const BvhNode& n = nodes_[stack[--top]];
    const double limit = best ? best->t : t_max;
    // Boxes are padded and the comparison inclusive, so equal-t ties are
    // still visited and resolved by face index like brute force.
    double entry;
    if (!box_entry(n, origin, inv_dir, t_min, t_max, entry) || entry > limit) continue;
    if (n.leaf()) {
      for (Index i = n.first; i < n.first + n.count; ++i) {
        const Index f = order_[i];
        const Tri& t = tris_[f];
        if (t.degenerate) continue;
        const auto hit = intersect_triangle(t.v0, t.e1, t.e2, origin, dir, t_min, t_max);
        if (hit && (!best || *hit < best->t || (*hit == best->t && f < best->face))) best = Hit{f, *hit};
      }
    } else {
      stack[top++] = n.first;
      stack[top++] = static_cast<Index>(&n - nodes_.data()) + 1;
    }
  }
  return best;
}

bool Bvh::occluded(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const {
  const Vec3 inv_dir = dir.cwiseInverse();
  Index stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const BvhNode& n = nodes_[stack[--top]];
    double entry;
    if (!box_entry(n, origin, inv_dir, t_min, t_max, entry)) continue;
    if (n.leaf()) {
      for (Index i = n.first; i < n.first + n.count; ++i) {
        const Tri& t = tris_[order_[i]];
        if (!t.degenerate && intersect_triangle(t.v0, t.e1, t.e2, origin, dir, t_min, t_max)) return true;
      }
    } else {
      stack[top++] = n.first;
      stack[top++] = static_cast<Index>(&n - nodes_.data()) + 1;
    }
  }
  return false;
}

}  // namespace uvforge
