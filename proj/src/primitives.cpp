#include "uvforge/primitives.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace uvforge {
namespace {

using std::numbers::pi;

Face flipped(const Face& f) { return {f[0], f[2], f[1]}; }

// Orients every face of a convex mesh away from `center`.
void orient_convex(const std::vector<Vec3>& verts, std::vector<Face>& faces, const Vec3& center) {
  for (Face& f : faces) {
    const Vec3 n = (verts[f[1]] - verts[f[0]]).cross(verts[f[2]] - verts[f[0]]);
    if (n.dot(verts[f[0]] - center) < 0) f = flipped(f);
  }
}

Mesh box_lattice(const Vec3& lo, const Vec3& hi, int nx, int ny, int nz) {
  const std::array<int, 3> counts{nx, ny, nz};
  std::map<std::array<int, 3>, Index> ids;
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  auto vertex = [&](std::array<int, 3> c) {
    auto [it, inserted] = ids.try_emplace(c, static_cast<Index>(verts.size()));
    if (inserted) {
      Vec3 p;
      for (int a = 0; a < 3; ++a) p[a] = lo[a] + (hi[a] - lo[a]) * c[a] / counts[a];
      verts.push_back(p);
    }
    return it->second;
  };
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    for (int side = 0; side < 2; ++side) {
      for (int i = 0; i < counts[u]; ++i) {
        for (int j = 0; j < counts[v]; ++j) {
          auto corner = [&](int di, int dj) {
            std::array<int, 3> c{};
            c[axis] = side * counts[axis];
            c[u] = i + di;
            c[v] = j + dj;
            return vertex(c);
          };
          const Index a = corner(0, 0), b = corner(1, 0), c = corner(1, 1), d = corner(0, 1);
          // (u, v, axis) is right-handed, so a-b-c winds about +axis.
          if (side == 1) {
            faces.push_back({a, b, c});
            faces.push_back({a, c, d});
          } else {
            faces.push_back({a, c, b});
            faces.push_back({a, d, c});
          }
        }
      }
    }
  }
  return Mesh(std::move(verts), std::move(faces));
}

struct Profile {
  std::vector<Vec2> points;  // (radius, z)
  std::vector<int> parts;    // part of span i -> i+1
  double spacing;

  void start(const Vec2& p) { points.assign(1, p); }
  void line_to(const Vec2& p, int part) {
    const Vec2 a = points.back();
    const int n = std::max(1, static_cast<int>(std::ceil((p - a).norm() / spacing)));
    for (int i = 1; i <= n; ++i) {
      points.push_back(a + (p - a) * (static_cast<double>(i) / n));
      parts.push_back(part);
    }
  }
  // Arc (radius r, center (0, cz)) parameterized as (r sin phi, cz + r cos phi).
  void arc_to(double r, double cz, double phi0, double phi1, int part) {
    const int n = std::max(1, static_cast<int>(std::ceil(r * std::abs(phi1 - phi0) / spacing)));
    for (int i = 1; i <= n; ++i) {
      const double phi = phi0 + (phi1 - phi0) * i / n;
      points.emplace_back(r * std::sin(phi), cz + r * std::cos(phi));
      parts.push_back(part);
    }
  }
  // Lower arc (r sin phi, cz - r cos phi).
  void lower_arc_to(double r, double cz, double phi0, double phi1, int part) {
    const int n = std::max(1, static_cast<int>(std::ceil(r * std::abs(phi1 - phi0) / spacing)));
    for (int i = 1; i <= n; ++i) {
      const double phi = phi0 + (phi1 - phi0) * i / n;
      points.emplace_back(r * std::sin(phi), cz - r * std::cos(phi));
      parts.push_back(part);
    }
  }
};

Vec2 square_point(double r, int j, int segments) {
  const Vec2 corners[4] = {{r, r}, {-r, r}, {-r, -r}, {r, -r}};
  const double u = 4.0 * j / segments;
  const int side = static_cast<int>(u) % 4;
  const double f = u - std::floor(u);
  return corners[side] + (corners[(side + 1) % 4] - corners[side]) * f;
}

PartedMesh revolve(const std::vector<Vec2>& profile, const std::vector<int>& parts, int segments, bool square) {
  if (profile.size() < 3) throw InputError("revolution profile needs at least 3 points");
  if (profile.front().x() != 0.0 || profile.back().x() != 0.0) throw InputError("revolution profile must start and end on the axis");
  if (square) segments = (segments + 3) / 4 * 4;
  segments = std::max(segments, square ? 4 : 3);
  const int rings = static_cast<int>(profile.size()) - 2;
  std::vector<Vec3> verts;
  verts.emplace_back(0, 0, profile.front().y());
  for (int i = 1; i <= rings; ++i) {
    const double r = profile[i].x();
    if (!(r > 0)) throw InputError("revolution profile touches the axis in its interior");
    for (int j = 0; j < segments; ++j) {
      Vec2 xy;
      if (square) {
        xy = square_point(r, j, segments);
      } else {
        const double a = 2 * pi * j / segments;
        xy = Vec2(r * std::cos(a), r * std::sin(a));
      }
      verts.emplace_back(xy.x(), xy.y(), profile[i].y());
    }
  }
  const auto bottom = static_cast<Index>(verts.size());
  verts.emplace_back(0, 0, profile.back().y());

  auto ring = [&](int i, int j) { return static_cast<Index>(1 + (i - 1) * segments + (j % segments)); };
  std::vector<Face> faces;
  std::vector<int> face_part;
  for (int j = 0; j < segments; ++j) {
    faces.push_back({0, ring(1, j), ring(1, j + 1)});
    face_part.push_back(parts[0]);
  }
  for (int i = 1; i < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      const Index a = ring(i, j), b = ring(i, j + 1), c = ring(i + 1, j + 1), d = ring(i + 1, j);
      faces.push_back({a, d, c});
      faces.push_back({a, c, b});
      face_part.push_back(parts[i]);
      face_part.push_back(parts[i]);
    }
  }
  for (int j = 0; j < segments; ++j) {
    faces.push_back({bottom, ring(rings, j + 1), ring(rings, j)});
    face_part.push_back(parts[rings]);
  }
  PartedMesh out{Mesh(std::move(verts), std::move(faces)), std::move(face_part)};
  if (signed_volume(out.mesh) < 0) out.mesh = flip_faces(out.mesh);
  return out;
}

int round_segments(double radius, double spacing) {
  return std::max(8, static_cast<int>(std::ceil(2 * pi * radius / spacing)));
}

}  // namespace

Mesh make_grid(int nx, int ny, double width, double height) {
  if (nx < 1 || ny < 1) throw InputError("grid needs at least one cell per side");
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) verts.emplace_back(width * i / nx, height * j / ny, 0.0);
  }
  auto id = [&](int i, int j) { return static_cast<Index>(j * (nx + 1) + i); };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return Mesh(std::move(verts), std::move(faces));
}

Mesh make_box(const Vec3& lo, const Vec3& hi, int n) {
  if (n < 1) throw InputError("box needs at least one cell per side");
  return box_lattice(lo, hi, n, n, n);
}

Mesh make_cube() { return make_box(Vec3(0, 0, 0), Vec3(1, 1, 1), 1); }

Mesh make_tetrahedron() {
  std::vector<Vec3> verts{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  std::vector<Face> faces{{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  orient_convex(verts, faces, Vec3::Zero());
  return Mesh(std::move(verts), std::move(faces));
}

Mesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts{{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                          {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<Face> faces{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                          {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                          {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<Index, Index>, Index> midpoints;
    auto mid = [&](Index a, Index b) {
      const auto key = std::minmax(a, b);
      auto [it, inserted] = midpoints.try_emplace(key, static_cast<Index>(verts.size()));
      if (inserted) verts.push_back((verts[a] + verts[b]).normalized());
      return it->second;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      const Index ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  orient_convex(verts, faces, Vec3::Zero());
  for (auto& v : verts) v *= radius;
  return Mesh(std::move(verts), std::move(faces));
}

Mesh make_revolution(const std::vector<Vec2>& profile, int segments, bool square) {
  return revolve(profile, std::vector<int>(profile.size() - 1, 0), segments, square).mesh;
}

Mesh make_uv_sphere(int rings, int segments, double radius) {
  if (rings < 2) throw InputError("uv sphere needs at least 2 rings");
  std::vector<Vec2> profile;
  for (int i = 0; i <= rings; ++i) {
    const double phi = pi * i / rings;
    profile.emplace_back(i == 0 || i == rings ? 0.0 : radius * std::sin(phi), radius * std::cos(phi));
  }
  return make_revolution(profile, segments);
}

PartedMesh make_dumbbell(double spacing, double neck_radius, double center_offset) {
  const double r = neck_radius;
  if (!(r > 0 && r < 1)) throw InputError("dumbbell neck radius must lie in (0, 1)");
  const double zj = center_offset - std::sqrt(1 - r * r);
  if (!(zj > 0)) throw InputError("dumbbell spheres overlap");
  const double phij = pi - std::asin(r);
  Profile p{{}, {}, spacing};
  p.start({0.0, center_offset + 1});
  p.arc_to(1.0, center_offset, 0.0, phij, 2);
  p.line_to({r, -zj}, 1);
  p.lower_arc_to(1.0, -center_offset, phij, 0.0, 0);
  p.points.back().x() = 0.0;
  return revolve(p.points, p.parts, round_segments(1.0, spacing), false);
}

PartedMesh make_hemisphere_with_pocket(double spacing, double pocket_radius, double pocket_floor) {
  const double rp = pocket_radius;
  if (!(rp > 0 && rp < 1)) throw InputError("pocket radius must lie in (0, 1)");
  const double top = std::sqrt(1 - rp * rp);
  if (!(pocket_floor > 0 && pocket_floor < top)) throw InputError("pocket floor must lie inside the dome");
  Profile p{{}, {}, spacing};
  p.start({0.0, pocket_floor});
  p.line_to({rp, pocket_floor}, 2);
  p.line_to({rp, top}, 2);
  p.arc_to(1.0, 0.0, std::asin(rp), pi / 2, 1);
  p.points.back() = Vec2(1.0, 0.0);
  p.line_to({0.0, 0.0}, 0);
  return revolve(p.points, p.parts, round_segments(1.0, spacing), false);
}

PartedMesh make_open_box(double spacing, double inner, double floor) {
  if (!(inner > 0 && inner < 1)) throw InputError("open box inner half-side must lie in (0, 1)");
  if (!(floor > 0 && floor < 1)) throw InputError("open box floor must lie in (0, 1)");
  Profile p{{}, {}, spacing};
  p.start({0.0, floor});
  p.line_to({inner, floor}, 2);
  p.line_to({inner, 1.0}, 2);
  p.line_to({1.0, 1.0}, 1);
  p.line_to({1.0, 0.0}, 0);
  p.line_to({0.0, 0.0}, 0);
  return revolve(p.points, p.parts, static_cast<int>(std::ceil(8.0 / spacing)), true);
}

Mesh make_slab(double width, double thickness, int n) {
  if (n < 1) throw InputError("slab needs at least one cell per side");
  const Vec3 half(width / 2, width / 2, thickness / 2);
  return box_lattice(-half, half, n, n, 1);
}

Mesh flip_faces(const Mesh& mesh) {
  std::vector<Face> faces;
  faces.reserve(mesh.num_faces());
  for (const Face& f : mesh.faces()) faces.push_back(flipped(f));
  return Mesh(mesh.vertices(), std::move(faces));
}

Mesh merge_meshes(const std::vector<Mesh>& meshes) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  for (const Mesh& m : meshes) {
    const auto base = static_cast<Index>(verts.size());
    verts.insert(verts.end(), m.vertices().begin(), m.vertices().end());
    for (const Face& f : m.faces()) faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  }
  return Mesh(std::move(verts), std::move(faces));
}

double signed_volume(const Mesh& mesh) {
  double vol = 0;
  for (const Face& f : mesh.faces()) {
    const auto& v = mesh.vertices();
    vol += v[f[0]].dot(v[f[1]].cross(v[f[2]]));
  }
  return vol / 6.0;
}

}  // namespace uvforge
