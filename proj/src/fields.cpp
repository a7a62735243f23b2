#include "uvforge/fields.hpp"

#include <algorithm>
#include <cmath>

#include "uvforge/parallel.hpp"
#include "uvforge/rng.hpp"

namespace uvforge {

namespace {
// Disjoint stream families so AO and ShDF never share sample sequences.
constexpr std::uint64_t kAoStream = 0x414f000000000000ULL;
constexpr std::uint64_t kShdfStream = 0x5344460000000000ULL;
}  // namespace

void FieldConfig::validate() const {
  if (ao_samples < 1) throw InputError("ao_samples must be >= 1");
  if (shdf_rays < 1) throw InputError("shdf_rays must be >= 1");
  if (!(cone_full_angle > 0 && cone_full_angle < std::numbers::pi)) throw InputError("cone_full_angle must lie in (0, pi)");
  if (!(offset_eps >= 0)) throw InputError("offset_eps must be non-negative");
}

void tangent_frame(const Vec3& n, Vec3& t, Vec3& b) {
  // Gram-Schmidt against a fixed oblique helper. The frame is continuous in
  // n except near +-helper, a direction axis-aligned geometry never produces,
  // so tiny perturbations of normals cannot rotate the sample pattern.
  static const Vec3 kHelper = Vec3(0.5366, 0.6181, 0.5744).normalized();
  static const Vec3 kFallback = Vec3(-0.7071, 0.2236, 0.6708).normalized();
  const Vec3& h = std::abs(n.dot(kHelper)) < 0.9 ? kHelper : kFallback;
  t = (h - h.dot(n) * n).normalized();
  b = n.cross(t);
}

Vec3 cosine_hemisphere(const Vec3& n, double u1, double u2) {
  Vec3 t, b;
  tangent_frame(n, t, b);
  const double r = std::sqrt(u1);
  const double phi = 2.0 * std::numbers::pi * u2;
  return r * std::cos(phi) * t + r * std::sin(phi) * b + std::sqrt(std::max(0.0, 1.0 - u1)) * n;
}

Vec3 uniform_cone(const Vec3& a, double half_angle, double u1, double u2) {
  Vec3 t, b;
  tangent_frame(a, t, b);
  const double cos_theta = 1.0 - u1 * (1.0 - std::cos(half_angle));
  const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  const double phi = 2.0 * std::numbers::pi * u2;
  return sin_theta * std::cos(phi) * t + sin_theta * std::sin(phi) * b + cos_theta * a;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  if (values.size() % 2 == 1) return values[mid];
  const double upper = values[mid];
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

std::vector<double> ambient_occlusion(const Mesh& mesh, const Bvh& bvh, const FieldConfig& config) {
  config.validate();
  const double eps = config.offset_eps * mesh.bbox_diagonal();
  std::vector<double> ao(mesh.num_vertices(), 1.0);
  parallel_for(mesh.num_vertices(), config.threads, [&](std::size_t v) {
    Rng rng(config.rng_seed, kAoStream + v);
    const Vec3& n = mesh.normals()[v];
    const Vec3 origin = mesh.vertices()[v] + eps * n;
    // Jittered k x k strata over the unit square, the remainder unstratified.
    const int k = static_cast<int>(std::sqrt(static_cast<double>(config.ao_samples)));
    int open = 0;
    for (int s = 0; s < config.ao_samples; ++s) {
      double u1 = rng.uniform(), u2 = rng.uniform();
      if (s < k * k) {
        u1 = (s / k + u1) / k;
        u2 = (s % k + u2) / k;
      }
      if (!bvh.occluded(origin, cosine_hemisphere(n, u1, u2))) ++open;
    }
    ao[v] = static_cast<double>(open) / config.ao_samples;
  });
  return ao;
}

std::vector<double> shape_diameter(const Mesh& mesh, const Bvh& bvh, const FieldConfig& config,
                                   std::vector<std::string>* warnings) {
  config.validate();
  const double eps = config.offset_eps * mesh.bbox_diagonal();
  const double half = 0.5 * config.cone_full_angle;
  std::vector<double> sdf(mesh.num_faces(), 0.0);
  std::vector<char> missed(mesh.num_faces(), 0);
  parallel_for(mesh.num_faces(), config.threads, [&](std::size_t f) {
    Rng rng(config.rng_seed, kShdfStream + f);
    const Vec3 inward = -mesh.face_normal(f);
    const Vec3 c = mesh.face_centroid(f);
    std::vector<double> lengths;
    lengths.reserve(config.shdf_rays);
    if (inward.squaredNorm() == 0) {
      missed[f] = 1;
      return;
    }
    const Vec3 origin = c + eps * inward;
    for (int r = 0; r < config.shdf_rays; ++r) {
      const double u1 = rng.uniform(), u2 = rng.uniform();
      const Vec3 d = uniform_cone(inward, half, u1, u2);
      if (const auto hit = bvh.intersect(origin, d)) lengths.push_back((origin + hit->t * d - c).norm());
    }
    if (lengths.empty()) {
      missed[f] = 1;
    } else {
      sdf[f] = median(std::move(lengths));
    }
  });
  std::vector<double> hit_values;
  std::size_t n_missed = 0;
  for (std::size_t f = 0; f < sdf.size(); ++f) {
    if (missed[f]) {
      ++n_missed;
    } else {
      hit_values.push_back(sdf[f]);
    }
  }
  if (n_missed > 0) {
    const double fallback = hit_values.empty() ? 0.0 : median(hit_values);
    for (std::size_t f = 0; f < sdf.size(); ++f) {
      if (missed[f]) sdf[f] = fallback;
    }
    if (warnings) {
      warnings->push_back(std::to_string(n_missed) + " faces with no ShDF ray hits set to the mesh median");
    }
  }
  return sdf;
}

}  // namespace uvforge
