#pragma once

// Procedural test and demo meshes. All closed outputs are oriented with
// outward normals.

#include <vector>

#include "uvforge/mesh.hpp"

namespace uvforge {

/// Mesh together with the analytic part of every face.
struct PartedMesh {
  Mesh mesh;
  std::vector<int> part;
};

/// nx x ny quads in the z = 0 plane spanning [0,width] x [0,height].
[[nodiscard]] Mesh make_grid(int nx, int ny, double width = 1.0, double height = 1.0);

/// Closed box with every side split into n x n quads.
[[nodiscard]] Mesh make_box(const Vec3& lo, const Vec3& hi, int n = 1);

/// [0,1]^3 with 8 vertices and 12 triangles.
[[nodiscard]] Mesh make_cube();

[[nodiscard]] Mesh make_tetrahedron();

[[nodiscard]] Mesh make_icosphere(int subdivisions, double radius = 1.0);

/// Surface of revolution about z. `profile` holds (radius, z) samples and
/// must start and end on the axis (radius 0). With `square` set the cross
/// sections are axis-aligned squares of half-side `radius`. `segments` is
/// rounded up to a multiple of 4 in that case.
[[nodiscard]] Mesh make_revolution(const std::vector<Vec2>& profile, int segments, bool square = false);

[[nodiscard]] Mesh make_uv_sphere(int rings, int segments, double radius = 1.0);

/// Two unit spheres joined by a cylindrical neck of radius `neck_radius`.
/// Parts: 0 = lower sphere, 1 = neck, 2 = upper sphere. `spacing` is the
/// approximate edge length.
[[nodiscard]] PartedMesh make_dumbbell(double spacing = 0.1, double neck_radius = 0.35, double center_offset = 1.8);

/// Unit dome on a flat base with a cylindrical pocket drilled down from the
/// apex. Parts: 0 = base, 1 = dome, 2 = pocket (walls and floor).
[[nodiscard]] PartedMesh make_hemisphere_with_pocket(double spacing = 0.1, double pocket_radius = 0.35,
                                                     double pocket_floor = 0.3);

/// Square cup with walls of finite thickness: outer half-side 1, height 1,
/// inner half-side `inner`, floor at `floor`. Parts: 0 = outside, 1 = rim,
/// 2 = inside.
[[nodiscard]] PartedMesh make_open_box(double spacing = 0.1, double inner = 0.8, double floor = 0.2);

/// Thin box [-w/2, w/2]^2 x [-t/2, t/2].
[[nodiscard]] Mesh make_slab(double width, double thickness, int n);

/// Same geometry with every face reversed (normals point the other way).
[[nodiscard]] Mesh flip_faces(const Mesh& mesh);

/// Concatenates meshes without merging vertices.
[[nodiscard]] Mesh merge_meshes(const std::vector<Mesh>& meshes);

/// Signed enclosed volume (positive for outward-oriented closed meshes).
[[nodiscard]] double signed_volume(const Mesh& mesh);

}  // namespace uvforge
