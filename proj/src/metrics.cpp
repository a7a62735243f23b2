#include "uvforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace uvforge::metrics {

CornerUV corner_uv(const Mesh& mesh, std::span<const Vec2> vertex_uv) {
  if (vertex_uv.size() != mesh.num_vertices()) throw InputError("UV count does not match vertex count");
  CornerUV out(mesh.num_faces());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    for (int c = 0; c < 3; ++c) out[f][static_cast<std::size_t>(c)] = vertex_uv[mesh.faces()[f][static_cast<std::size_t>(c)]];
  }
  return out;
}

double uv_side(std::span<const Vec2> uv) {
  if (uv.empty()) return 0.0;
  Vec2 lo = uv.front(), hi = uv.front();
  for (const auto& p : uv) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).maxCoeff();
}

namespace {

void require_finite(std::span<const Vec2> uv) {
  for (const auto& p : uv) {
    if (!p.allFinite()) throw EvaluationError("UV coordinates must be finite");
  }
}

std::vector<Vec2> flatten(const CornerUV& uv) {
  std::vector<Vec2> out;
  out.reserve(uv.size() * 3);
  for (const auto& f : uv) out.insert(out.end(), f.begin(), f.end());
  return out;
}

double angle(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0.0;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

double uv_area(const std::array<Vec2, 3>& t) {
  const Vec2 e1 = t[1] - t[0], e2 = t[2] - t[0];
  return 0.5 * std::abs(e1.x() * e2.y() - e1.y() * e2.x());
}

struct FaceAreas {
  std::vector<double> a3d, auv;
  double total3d = 0, totaluv = 0;
};

FaceAreas face_areas(const Mesh& mesh, const CornerUV& uv) {
  if (uv.size() != mesh.num_faces()) throw InputError("corner UV count does not match face count");
  FaceAreas fa;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    fa.a3d.push_back(mesh.face_area(f));
    fa.auv.push_back(uv_area(uv[f]));
    fa.total3d += fa.a3d.back();
    fa.totaluv += fa.auv.back();
  }
  if (!(fa.total3d > 0)) throw EvaluationError("mesh has zero surface area");
  return fa;
}

// Degenerate relative to the whole map, so the test is scale free.
bool degenerate(double area, double total) {
  return !(area > 1e-12 * total);
}

}  // namespace

std::vector<bool> seam_vertices_hard(const Adjacency& adjacency, std::span<const Vec2> uv, double tau_scale) {
  if (uv.size() != adjacency.vertex_one_rings.size()) throw InputError("UV count does not match vertex count");
  require_finite(uv);
  const double tau = tau_scale * uv_side(uv);
  std::vector<bool> mask(uv.size(), false);
  for (std::size_t i = 0; i < uv.size(); ++i) {
    double best = 0;
    for (Index j : adjacency.vertex_one_rings[i]) best = std::max(best, (uv[i] - uv[j]).norm());
    mask[i] = best > tau;
  }
  return mask;
}

std::vector<bool> seam_vertices_hard(const Mesh& mesh, const CornerUV& uv, double tau_scale) {
  if (uv.size() != mesh.num_faces()) throw InputError("corner UV count does not match face count");
  const auto flat = flatten(uv);
  require_finite(flat);
  const double tau = tau_scale * uv_side(flat);
  std::vector<double> ring(mesh.num_vertices(), 0.0);
  std::vector<std::optional<Vec2>> first(mesh.num_vertices());
  std::vector<bool> split(mesh.num_vertices(), false);
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const Face& t = mesh.faces()[f];
    for (std::size_t c = 0; c < 3; ++c) {
      const Index v = t[c];
      const Vec2& p = uv[f][c];
      if (!first[v]) {
        first[v] = p;
      } else if (*first[v] != p) {
        split[v] = true;
      }
      for (std::size_t d = 0; d < 3; ++d) {
        if (d != c) ring[v] = std::max(ring[v], (p - uv[f][d]).norm());
      }
    }
  }
  std::vector<bool> mask(mesh.num_vertices());
  for (std::size_t v = 0; v < mask.size(); ++v) mask[v] = split[v] || ring[v] > tau;
  return mask;
}

std::optional<double> mean_seam_ao(const std::vector<bool>& mask, std::span<const double> ao) {
  if (mask.size() != ao.size()) throw InputError("seam mask and AO field differ in size");
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      sum += ao[i];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double conformality(const Mesh& mesh, const CornerUV& uv) {
  const FaceAreas fa = face_areas(mesh, uv);
  require_finite(flatten(uv));
  double acc = 0;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    if (degenerate(fa.auv[f], fa.totaluv)) continue;
    const Face& t = mesh.faces()[f];
    double score = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t n1 = (c + 1) % 3, n2 = (c + 2) % 3;
      const Vec3& p = mesh.vertices()[t[c]];
      const double a3 = angle(mesh.vertices()[t[n1]] - p, mesh.vertices()[t[n2]] - p);
      const double a2 = angle(uv[f][n1] - uv[f][c], uv[f][n2] - uv[f][c]);
      if (a3 > 0 && a2 > 0) score += std::min(a2 / a3, a3 / a2);
    }
    acc += fa.a3d[f] * score / 3.0;
  }
  return acc / fa.total3d;
}

double conformality(const Mesh& mesh, std::span<const Vec2> uv) {
  return conformality(mesh, corner_uv(mesh, uv));
}

double equiareality(const Mesh& mesh, const CornerUV& uv) {
  const FaceAreas fa = face_areas(mesh, uv);
  require_finite(flatten(uv));
  if (!(fa.totaluv > 0)) return 0.0;
  double acc = 0;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    if (degenerate(fa.auv[f], fa.totaluv) || fa.a3d[f] == 0) continue;
    const double r = (fa.auv[f] / fa.totaluv) / (fa.a3d[f] / fa.total3d);
    acc += fa.a3d[f] * std::min(r, 1.0 / r);
  }
  return acc / fa.total3d;
}

double equiareality(const Mesh& mesh, std::span<const Vec2> uv) {
  return equiareality(mesh, corner_uv(mesh, uv));
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  for (const auto& row : cost) {
    if (row.size() != n) throw InputError("hungarian: cost matrix must be square");
  }
  if (n == 0) return {};
  // Potentials formulation, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = static_cast<int>(j - 1);
  return assignment;
}

namespace {

struct Contingency {
  std::vector<std::vector<double>> table;  // rows: labels of a, cols: labels of b
  std::vector<double> rows, cols;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InputError("labelings differ in size");
  std::map<int, std::size_t> ia, ib;
  for (int l : a) ia.emplace(l, ia.size());
  for (int l : b) ib.emplace(l, ib.size());
  Contingency c;
  c.table.assign(ia.size(), std::vector<double>(ib.size(), 0.0));
  c.rows.assign(ia.size(), 0.0);
  c.cols.assign(ib.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t r = ia[a[i]], k = ib[b[i]];
    c.table[r][k] += 1;
    c.rows[r] += 1;
    c.cols[k] += 1;
  }
  return c;
}

}  // namespace

double hamming_matched(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InputError("labelings differ in size");
  if (a.empty()) return 0.0;
  const Contingency c = contingency(a, b);
  const std::size_t n = std::max(c.rows.size(), c.cols.size());
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < c.rows.size(); ++r) {
    for (std::size_t k = 0; k < c.cols.size(); ++k) cost[r][k] = -c.table[r][k];
  }
  const auto match = hungarian(cost);
  double agree = 0;
  for (std::size_t r = 0; r < c.rows.size(); ++r) {
    const auto k = static_cast<std::size_t>(match[r]);
    if (k < c.cols.size()) agree += c.table[r][k];
  }
  return 1.0 - agree / static_cast<double>(a.size());
}

double rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InputError("labelings differ in size");
  if (a.size() < 2) throw InputError("rand_index needs at least two elements");
  const Contingency c = contingency(a, b);
  auto pairs = [](double x) { return x * (x - 1) / 2; };
  double same_both = 0, same_a = 0, same_b = 0;
  for (const auto& row : c.table) {
    for (double x : row) same_both += pairs(x);
  }
  for (double x : c.rows) same_a += pairs(x);
  for (double x : c.cols) same_b += pairs(x);
  const double total = pairs(static_cast<double>(a.size()));
  // Agreeing pairs: together in both, plus apart in both.
  const double apart_both = total - same_a - same_b + same_both;
  return (same_both + apart_both) / total;
}

Histogram ao_histogram(const std::vector<bool>& mask, std::span<const double> ao) {
  if (mask.size() != ao.size()) throw InputError("seam mask and AO field differ in size");
  Histogram h;
  for (int i = 0; i <= kHistogramBins; ++i) h.edges.push_back(static_cast<double>(i) / kHistogramBins);
  h.seam.assign(kHistogramBins, 0.0);
  h.all.assign(kHistogramBins, 0.0);
  std::size_t seam_count = 0;
  for (std::size_t i = 0; i < ao.size(); ++i) {
    const int bin = std::clamp(static_cast<int>(std::floor(ao[i] * kHistogramBins)), 0, kHistogramBins - 1);
    h.all[static_cast<std::size_t>(bin)] += 1;
    if (mask[i]) {
      h.seam[static_cast<std::size_t>(bin)] += 1;
      ++seam_count;
    }
  }
  for (auto& x : h.all) x /= static_cast<double>(std::max<std::size_t>(ao.size(), 1));
  for (auto& x : h.seam) x /= static_cast<double>(std::max<std::size_t>(seam_count, 1));
  return h;
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"conformality", r.conformality},
                     {"equiareality", r.equiareality},
                     {"mean_seam_ao", opt(r.mean_seam_ao)},
                     {"seam_vertex_count", r.seam_vertex_count},
                     {"vertex_count", r.vertex_count},
                     {"histogram", {{"edges", r.histogram.edges}, {"seam", r.histogram.seam}, {"all", r.histogram.all}}},
                     {"hamming", opt(r.hamming)},
                     {"rand_index", opt(r.rand_index)}};
}

std::string histogram_csv(const Histogram& h) {
  std::ostringstream out;
  out.precision(17);
  out << "bin_lo,bin_hi,seam,all\n";
  for (std::size_t i = 0; i < h.seam.size(); ++i) {
    out << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.seam[i] << ',' << h.all[i] << '\n';
  }
  return out.str();
}

MetricReport evaluate(const Mesh& mesh, const CornerUV& uv, std::span<const double> ao, const EvalOptions& options,
                      std::span<const int> labels, std::span<const int> reference) {
  if (ao.size() != mesh.num_vertices()) throw InputError("AO field size does not match vertex count");
  MetricReport r;
  r.conformality = conformality(mesh, uv);
  r.equiareality = equiareality(mesh, uv);
  const auto mask = seam_vertices_hard(mesh, uv, options.tau_scale);
  r.mean_seam_ao = mean_seam_ao(mask, ao);
  r.seam_vertex_count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  r.vertex_count = mesh.num_vertices();
  r.histogram = ao_histogram(mask, ao);
  if (!reference.empty()) {
    if (labels.size() != reference.size()) throw InputError("reference labels differ in size from tested labels");
    r.hamming = hamming_matched(labels, reference);
    r.rand_index = rand_index(labels, reference);
  }
  return r;
}

}  // namespace uvforge::metrics
