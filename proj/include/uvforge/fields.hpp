#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "uvforge/bvh.hpp"
#include "uvforge/mesh.hpp"

namespace uvforge {

struct FieldConfig {
  int ao_samples = 256;
  int shdf_rays = 60;
  double cone_full_angle = 2.0 * std::numbers::pi / 3.0;
  double offset_eps = 1e-4;  // fraction of the bounding-box diagonal
  std::uint64_t rng_seed = 0;
  int threads = 0;  // 0: UVFORGE_THREADS or hardware concurrency

  /// Throws InputError when a field is out of range.
  void validate() const;
};

/// Orthonormal tangent frame (t, b) completing the unit vector n.
void tangent_frame(const Vec3& n, Vec3& t, Vec3& b);

/// Cosine-weighted direction on the hemisphere about unit n from two
/// uniform numbers.
[[nodiscard]] Vec3 cosine_hemisphere(const Vec3& n, double u1, double u2);

/// Direction uniform in solid angle within the cone of half-angle
/// `half_angle` about unit axis a.
[[nodiscard]] Vec3 uniform_cone(const Vec3& a, double half_angle, double u1, double u2);

/// Per-vertex ambient occlusion in [0,1]; 1 = fully exposed. Rays start at
/// the vertex offset along its normal and count as blocked on any hit.
/// Cosine-weighted directions come from jittered strata of the unit square.
[[nodiscard]] std::vector<double> ambient_occlusion(const Mesh& mesh, const Bvh& bvh, const FieldConfig& config = {});

/// Per-face Shape Diameter Function: median distance from the face
/// centroid to the first hit of rays cast in a cone about the inward face
/// normal. Faces whose rays all miss take the median over the other faces
/// (0 when no face registers a hit); a warning is appended when that happens.
[[nodiscard]] std::vector<double> shape_diameter(const Mesh& mesh, const Bvh& bvh, const FieldConfig& config = {},
                                                 std::vector<std::string>* warnings = nullptr);

/// Median of a non-empty sample (mean of the middle pair for even sizes).
[[nodiscard]] double median(std::vector<double> values);

}  // namespace uvforge
