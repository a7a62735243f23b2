#include "uvforge/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

namespace uvforge {

Mesh::Mesh(std::vector<Vec3> vertices, std::vector<Face> faces, std::optional<std::vector<Vec3>> normals)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  const auto nv = static_cast<Index>(vertices_.size());
  for (std::size_t f = 0; f < faces_.size(); ++f) {
    const Face& t = faces_[f];
    for (Index i : t) {
      if (i >= nv) throw InputError("face " + std::to_string(f) + " references vertex " + std::to_string(i) + " out of range");
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw InputError("face " + std::to_string(f) + " is degenerate (repeated vertex index)");
    }
  }
  if (normals && normals->size() == vertices_.size()) {
    normals_ = std::move(*normals);
    for (auto& n : normals_) {
      const double len = n.norm();
      n = len > 0 ? Vec3(n / len) : Vec3(0, 0, 1);
    }
  } else {
    normals_ = compute_vertex_normals(vertices_, faces_, &warnings_);
  }
}

Vec3 Mesh::face_normal(std::size_t f) const {
  const Face& t = faces_[f];
  const Vec3 n = (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]);
  const double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3::Zero();
}

double Mesh::face_area(std::size_t f) const {
  const Face& t = faces_[f];
  return 0.5 * (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]).norm();
}

Vec3 Mesh::face_centroid(std::size_t f) const {
  const Face& t = faces_[f];
  return (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]) / 3.0;
}

double Mesh::bbox_diagonal() const {
  if (vertices_.empty()) return 0.0;
  Vec3 lo = vertices_.front(), hi = vertices_.front();
  for (const auto& v : vertices_) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return (hi - lo).norm();
}

Labeling Labeling::from_labels(std::vector<int> labels) {
  Labeling l;
  l.count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  l.labels = std::move(labels);
  return l;
}

std::vector<Vec3> compute_vertex_normals(std::span<const Vec3> vertices, std::span<const Face> faces,
                                         std::vector<std::string>* warnings) {
  std::vector<Vec3> acc(vertices.size(), Vec3::Zero());
  for (const Face& t : faces) {
    // Unnormalized cross product = 2 * area * unit normal.
    const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    for (Index i : t) acc[i] += n;
  }
  std::size_t degenerate = 0;
  for (auto& n : acc) {
    const double len = n.norm();
    if (len > 0) {
      n /= len;
    } else {
      n = Vec3(0, 0, 1);
      ++degenerate;
    }
  }
  if (degenerate > 0 && warnings) {
    warnings->push_back(std::to_string(degenerate) + " vertices with zero-area stars got an arbitrary normal");
  }
  return acc;
}

std::vector<Vec3> compute_vertex_normals(const Mesh& mesh) {
  return compute_vertex_normals(mesh.vertices(), mesh.faces());
}

namespace {

double interior_dihedral(const Mesh& mesh, Index fa, Index fb, const std::array<Index, 2>& edge) {
  const Vec3 na = mesh.face_normal(fa);
  const Vec3 nb = mesh.face_normal(fb);
  const double bend = std::acos(std::clamp(na.dot(nb), -1.0, 1.0));
  Index opposite = 0;
  for (Index v : mesh.faces()[fb]) {
    if (v != edge[0] && v != edge[1]) opposite = v;
  }
  const Vec3& p = mesh.vertices()[edge[0]];
  const double side = na.dot(mesh.vertices()[opposite] - p);
  // Opposite vertex below face a's plane: the surface folds away, convex.
  const double theta = side <= 0 ? std::numbers::pi - bend : std::numbers::pi + bend;
  constexpr double kTiny = 1e-12;
  return std::clamp(theta, kTiny, 2 * std::numbers::pi - kTiny);
}

}  // namespace

Adjacency face_adjacency(const Mesh& mesh) {
  Adjacency adj;
  const auto& faces = mesh.faces();
  adj.vertex_one_rings.assign(mesh.num_vertices(), {});
  adj.face_neighbors.assign(faces.size(), {});
  std::map<std::array<Index, 2>, std::vector<Index>> edge_faces;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& t = faces[f];
    for (int k = 0; k < 3; ++k) {
      const Index a = t[k], b = t[(k + 1) % 3];
      adj.vertex_one_rings[a].push_back(b);
      adj.vertex_one_rings[b].push_back(a);
      edge_faces[{std::min(a, b), std::max(a, b)}].push_back(static_cast<Index>(f));
    }
  }
  for (auto& ring : adj.vertex_one_rings) {
    std::sort(ring.begin(), ring.end());
    ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
  }
  for (const auto& [edge, fs] : edge_faces) {
    if (fs.size() == 2) {
      FacePair p;
      p.face_a = fs[0];
      p.face_b = fs[1];
      p.edge = edge;
      p.dihedral = interior_dihedral(mesh, fs[0], fs[1], edge);
      p.edge_length = (mesh.vertices()[edge[0]] - mesh.vertices()[edge[1]]).norm();
      adj.face_pairs.push_back(p);
      adj.face_neighbors[fs[0]].push_back(fs[1]);
      adj.face_neighbors[fs[1]].push_back(fs[0]);
    } else if (fs.size() > 2) {
      adj.non_manifold_edges.push_back(edge);
    }
  }
  return adj;
}

SubmeshMap extract_submesh(const Mesh& mesh, const Labeling& labeling, int label) {
  if (labeling.labels.size() != mesh.num_faces()) throw InputError("labeling size does not match face count");
  SubmeshMap out;
  std::vector<Index> remap(mesh.num_vertices(), ~Index{0});
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    if (labeling.labels[f] != label) continue;
    Face t = mesh.faces()[f];
    for (Index& i : t) {
      if (remap[i] == ~Index{0}) {
        remap[i] = static_cast<Index>(verts.size());
        verts.push_back(mesh.vertices()[i]);
        out.vertex_back_map.push_back(i);
      }
      i = remap[i];
    }
    faces.push_back(t);
    out.face_back_map.push_back(static_cast<Index>(f));
  }
  if (faces.empty()) throw InputError("label " + std::to_string(label) + " has no faces");
  out.submesh = Mesh(std::move(verts), std::move(faces));
  return out;
}

Mesh normalize_mesh(const Mesh& mesh) {
  if (mesh.num_vertices() == 0) throw InputError("normalize_mesh: empty mesh");
  // Bounding-box center, so every coordinate lands within [-0.5, 0.5].
  Vec3 lo = mesh.vertices().front(), hi = mesh.vertices().front();
  for (const auto& v : mesh.vertices()) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 center = 0.5 * (lo + hi);
  const double diag = (hi - lo).norm();
  if (!(diag > 0)) throw InputError("normalize_mesh: all vertices coincide");
  std::vector<Vec3> verts;
  verts.reserve(mesh.num_vertices());
  for (const auto& v : mesh.vertices()) verts.push_back((v - center) / diag);
  return Mesh(std::move(verts), mesh.faces(), mesh.normals());
}

std::vector<int> connected_components(const Adjacency& adjacency, std::span<const int> labels) {
  const std::size_t nf = adjacency.face_neighbors.size();
  std::vector<int> comp(nf, -1);
  int next = 0;
  std::vector<Index> stack;
  for (std::size_t seed = 0; seed < nf; ++seed) {
    if (comp[seed] >= 0) continue;
    comp[seed] = next;
    stack.assign(1, static_cast<Index>(seed));
    while (!stack.empty()) {
      const Index f = stack.back();
      stack.pop_back();
      for (Index g : adjacency.face_neighbors[f]) {
        if (comp[g] < 0 && labels[g] == labels[f]) {
          comp[g] = next;
          stack.push_back(g);
        }
      }
    }
    ++next;
  }
  return comp;
}

std::vector<int> connected_components(const Mesh& mesh, const Labeling& labeling) {
  if (labeling.labels.size() != mesh.num_faces()) throw InputError("labeling size does not match face count");
  return connected_components(face_adjacency(mesh), labeling.labels);
}

}  // namespace uvforge
