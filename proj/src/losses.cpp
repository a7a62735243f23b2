#include "uvforge/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "uvforge/common.hpp"
#include "uvforge/rng.hpp"

namespace uvforge::losses {

using namespace uvforge::ad;

void LossWeights::validate() const {
  for (double w : {wrap, repulsion, cycle_p, cycle_n, ddl, tdl, lambda_vis, kappa_norm, epsilon}) {
    if (!(w >= 0) || !std::isfinite(w)) throw InputError("loss weights must be finite and non-negative");
  }
}

void SeamConfig::validate() const {
  if (neighbor_count < 1) throw InputError("seam neighbor_count must be >= 1");
  if (!(gamma > 0) || !(beta > 0)) throw InputError("seam gamma and beta must be positive");
  if (!(tau_scale > 0 && tau_scale < 1)) throw InputError("seam tau_scale must lie in (0, 1)");
}

std::vector<std::uint32_t> nearest_rows(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (b.rows() == 0) throw InputError("nearest_rows: empty target set");
  if (a.cols() != b.cols()) throw InputError("nearest_rows: dimension mismatch");
  std::vector<std::uint32_t> out(static_cast<std::size_t>(a.rows()));
  const Eigen::VectorXd b2 = b.rowwise().squaredNorm();
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index r0 = 0; r0 < a.rows(); r0 += kBlock) {
    const Eigen::Index n = std::min(kBlock, a.rows() - r0);
    // |a|^2 is constant per row, so the argmin only needs |b|^2 - 2 a.b.
    Eigen::MatrixXd d = -2.0 * (a.middleRows(r0, n) * b.transpose());
    d.rowwise() += b2.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      // Re-rank the few near-best candidates exactly; the expanded form loses
      // bits when points are far from the origin.
      const double best_fast = d.row(i).minCoeff();
      const double slack = 1e-9 * (1.0 + std::abs(best_fast) + a.row(r0 + i).squaredNorm());
      double best = std::numeric_limits<double>::infinity();
      Eigen::Index arg = 0;
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        if (d(i, j) > best_fast + slack) continue;
        const double e = (a.row(r0 + i) - b.row(j)).squaredNorm();
        if (e < best) {
          best = e;
          arg = j;
        }
      }
      out[static_cast<std::size_t>(r0 + i)] = static_cast<std::uint32_t>(arg);
    }
  }
  return out;
}

template <typename T>
Var<T> chamfer(Var<T> a, Var<T> b) {
  if (a.rows() == 0 || b.rows() == 0) throw InputError("chamfer: empty point set");
  const Eigen::MatrixXd ad = to_double<T>(a.value()), bd = to_double<T>(b.value());
  const auto ab = nearest_rows(ad, bd);
  const auto ba = nearest_rows(bd, ad);
  Var<T> da = mean(row_sum(square(sub(a, gather_rows(b, std::span<const std::uint32_t>(ab))))));
  Var<T> db = mean(row_sum(square(sub(b, gather_rows(a, std::span<const std::uint32_t>(ba))))));
  return add(da, db);
}

template <typename T>
Var<T> cosine(Var<T> a, Var<T> b) {
  return div(row_dot(a, b), add_scalar(mul(row_norm(a), row_norm(b)), 1e-12));
}

template <typename T>
Var<T> wrap_loss(Var<T> p_hat, Var<T> n_hat, Var<T> points, Var<T> normals, double kappa_norm) {
  Var<T> c = chamfer(p_hat, points);
  if (kappa_norm == 0) return c;
  const auto nn = nearest_rows(to_double<T>(p_hat.value()), to_double<T>(points.value()));
  Var<T> paired = gather_rows(normals, std::span<const std::uint32_t>(nn));
  Var<T> misalign = add_scalar(scale(mean(cosine(n_hat, paired)), -1.0), 1.0);
  return add(c, scale(misalign, kappa_norm));
}

template <typename T>
CycleTerms<T> cycle_loss(Var<T> q_hat, Var<T> q_hat_cycle, Var<T> points, Var<T> p_tilde, Var<T> n_source,
                         Var<T> n_tilde) {
  Var<T> flat = mean(row_sum(square(sub(q_hat, q_hat_cycle))));
  Var<T> space = mean(row_sum(square(sub(points, p_tilde))));
  Var<T> normal = add_scalar(scale(mean(cosine(n_source, n_tilde)), -1.0), 1.0);
  return {add(flat, space), normal};
}

template <typename T>
Var<T> uv_side(Var<T> q) {
  return max_all(sub(col_max(q), col_min(q)));
}

template <typename T>
Var<T> normalize_uv(Var<T> q) {
  return div_scalar(sub_row(q, col_min(q)), add_scalar(uv_side(q), 1e-12));
}

double default_margin(std::size_t num_vertices) {
  if (num_vertices == 0) throw InputError("default_margin: no vertices");
  return 0.5 / std::sqrt(static_cast<double>(num_vertices));
}

std::vector<std::uint32_t> repulsion_pairs(const Eigen::MatrixXd& q, std::size_t budget, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(q.rows());
  if (n < 2) throw InputError("repulsion needs at least two points");
  if (budget == 0) throw InputError("repulsion pair budget must be positive");
  std::vector<std::uint32_t> out(n);
  const bool exhaustive = budget >= n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = i == 0 ? 1 : 0;
    auto consider = [&](std::size_t j) {
      const double d = (q.row(static_cast<Eigen::Index>(i)) - q.row(static_cast<Eigen::Index>(j))).squaredNorm();
      if (d < best || (d == best && j < arg)) {
        best = d;
        arg = j;
      }
    };
    if (exhaustive) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) consider(j);
      }
    } else {
      Rng rng(seed, i);
      for (std::size_t k = 0; k < budget; ++k) {
        std::size_t j = rng.below(n - 1);
        if (j >= i) ++j;
        consider(j);
      }
    }
    out[i] = static_cast<std::uint32_t>(arg);
  }
  return out;
}

template <typename T>
Var<T> repulsion_loss(Var<T> q_normalized, double margin, std::size_t pair_budget, std::uint64_t seed) {
  const auto nn = repulsion_pairs(to_double<T>(q_normalized.value()), pair_budget, seed);
  Var<T> d = row_norm(sub(q_normalized, gather_rows(q_normalized, std::span<const std::uint32_t>(nn))));
  Var<T> hinge = leaky_relu(add_scalar(scale(d, -1.0), margin), 0.0);
  return mean(square(hinge));
}

template <typename T>
Var<T> ddl(Var<T> e1, Var<T> e2) {
  Var<T> ortho = square(row_dot(e1, e2));
  Var<T> stretch = square(sub(row_norm(e1), row_norm(e2)));
  return mean(add(ortho, stretch));
}

TriangleData TriangleData::from_mesh(const Mesh& mesh) {
  TriangleData t;
  const std::size_t nf = mesh.num_faces();
  if (nf == 0) throw InputError("triangle loss needs faces");
  for (auto& c : t.corner) c.resize(nf);
  t.cos3d.resize(static_cast<Eigen::Index>(nf), 3);
  t.area3d.resize(static_cast<Eigen::Index>(nf));
  const auto& v = mesh.vertices();
  for (std::size_t f = 0; f < nf; ++f) {
    const Face& tri = mesh.faces()[f];
    for (int k = 0; k < 3; ++k) {
      t.corner[k][f] = tri[k];
      const Vec3 a = v[tri[(k + 1) % 3]] - v[tri[k]];
      const Vec3 b = v[tri[(k + 2) % 3]] - v[tri[k]];
      t.cos3d(static_cast<Eigen::Index>(f), k) = a.dot(b) / (a.norm() * b.norm() + 1e-12);
    }
    t.area3d(static_cast<Eigen::Index>(f)) = mesh.face_area(f);
  }
  const double total = t.area3d.sum();
  if (!(total > 0)) throw InputError("triangle loss: mesh has zero area");
  t.area3d /= total;
  return t;
}

template <typename T>
Var<T> tdl(Var<T> q, const TriangleData& tri) {
  const auto nf = static_cast<Eigen::Index>(tri.corner[0].size());
  Tape<T>& tape = *q.tape;
  Var<T> c0 = gather_rows(q, std::span<const std::uint32_t>(tri.corner[0]));
  Var<T> c1 = gather_rows(q, std::span<const std::uint32_t>(tri.corner[1]));
  Var<T> c2 = gather_rows(q, std::span<const std::uint32_t>(tri.corner[2]));
  Var<T> e01 = sub(c1, c0), e12 = sub(c2, c1), e20 = sub(c0, c2);
  auto corner_cos = [](Var<T> into, Var<T> out_of) {
    return scale(div(row_dot(into, out_of), add_scalar(mul(row_norm(into), row_norm(out_of)), 1e-12)), -1.0);
  };
  const Var<T> cos_uv[3] = {corner_cos(e20, e01), corner_cos(e01, e12), corner_cos(e12, e20)};
  Var<T> angle;
  for (int k = 0; k < 3; ++k) {
    Var<T> ref = tape.constant(tri.cos3d.col(k).cast<T>());
    Var<T> term = square(sub(cos_uv[k], ref));
    angle = k == 0 ? term : add(angle, term);
  }
  // Signed area from the 2D cross product e01 x (c2 - c0).
  Var<T> e02 = scale(e20, -1.0);
  Var<T> cross = sub(mul(slice_cols(e01, 0, 1), slice_cols(e02, 1, 1)), mul(slice_cols(e01, 1, 1), slice_cols(e02, 0, 1)));
  Var<T> area = scale(abs(cross), 0.5);
  Var<T> rel = div_scalar(area, add_scalar(sum(area), 1e-20));
  Var<T> area_term = square(sub(rel, tape.constant(tri.area3d.cast<T>())));
  Var<T> per_face = add(angle, area_term);

  Tensor<T> mask(nf, 1);
  double degenerate = 0;
  for (Eigen::Index f = 0; f < nf; ++f) {
    const bool bad = static_cast<double>(area.value()(f, 0)) < kDegenerateUvArea;
    mask(f, 0) = bad ? T(0) : T(1);
    degenerate += bad ? 1.0 : 0.0;
  }
  const double inv = 1.0 / static_cast<double>(nf);
  return add_scalar(scale(sum(mul_const(per_face, mask)), inv), degenerate * inv);
}

RingPairs RingPairs::from_adjacency(const Adjacency& adjacency) {
  RingPairs r;
  r.offsets.reserve(adjacency.vertex_one_rings.size() + 1);
  r.offsets.push_back(0);
  for (std::size_t v = 0; v < adjacency.vertex_one_rings.size(); ++v) {
    const auto& ring = adjacency.vertex_one_rings[v];
    if (ring.empty()) ++r.isolated;
    for (Index j : ring) {
      r.source.push_back(static_cast<std::uint32_t>(v));
      r.target.push_back(j);
    }
    r.offsets.push_back(static_cast<std::uint32_t>(r.source.size()));
  }
  return r;
}

template <typename T>
SeamScores<T> soft_seam_scores(const RingPairs& rings, Var<T> q, const SeamConfig& config) {
  config.validate();
  if (rings.offsets.size() != static_cast<std::size_t>(q.rows()) + 1) {
    throw InputError("soft_seam_scores: ring table does not match UV count");
  }
  SeamScores<T> out;
  Var<T> d = row_norm(sub(gather_rows(q, std::span<const std::uint32_t>(rings.source)),
                          gather_rows(q, std::span<const std::uint32_t>(rings.target))));
  out.eta = scale(segment_logsumexp(scale(d, config.gamma), std::span<const std::uint32_t>(rings.offsets)),
                  1.0 / config.gamma);
  out.uv_side = uv_side(q);
  Var<T> tau = scale(out.uv_side, config.tau_scale);
  out.s = sigmoid(scale(sub_row(out.eta, tau), config.beta));
  if (rings.isolated > 0) {
    out.warnings.push_back(std::to_string(rings.isolated) + " isolated vertices have no 1-ring; seam score set to 0");
  }
  return out;
}

template <typename T>
Var<T> ao_seam_loss(Var<T> s, const Tensor<T>& ao, double epsilon) {
  if (s.rows() != ao.rows() || s.cols() != ao.cols()) throw InputError("ao_seam_loss: size mismatch");
  return div(sum(mul_const(s, ao)), add_scalar(sum(s), epsilon));
}

template <typename T>
Var<T> visibility_objective(Var<T> base, Var<T> ao_seam, double lambda_vis) {
  return add(base, scale(ao_seam, lambda_vis));
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = nlohmann::json{{"wrap", b.wrap},       {"repel", b.repel}, {"cycle_p", b.cycle_p}, {"cycle_n", b.cycle_n},
                     {"ddl", b.ddl},         {"tdl", b.tdl},     {"ao", nullptr},        {"total", b.total}};
  if (b.has_ao) j["ao"] = b.ao;
}

void from_json(const nlohmann::json& j, LossBreakdown& b) {
  b.wrap = j.at("wrap").get<double>();
  b.repel = j.at("repel").get<double>();
  b.cycle_p = j.at("cycle_p").get<double>();
  b.cycle_n = j.at("cycle_n").get<double>();
  b.ddl = j.at("ddl").get<double>();
  b.tdl = j.at("tdl").get<double>();
  b.has_ao = !j.at("ao").is_null();
  b.ao = b.has_ao ? j.at("ao").get<double>() : 0.0;
  b.total = j.at("total").get<double>();
}

template <typename T>
LossContext<T> LossContext<T>::from_mesh(const Mesh& mesh) {
  LossContext<T> ctx;
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  ctx.points.resize(n, 3);
  ctx.normals.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    ctx.points.row(i) = mesh.vertices()[static_cast<std::size_t>(i)].transpose().cast<T>();
    ctx.normals.row(i) = mesh.normals()[static_cast<std::size_t>(i)].transpose().cast<T>();
  }
  ctx.triangles = TriangleData::from_mesh(mesh);
  ctx.rings = RingPairs::from_adjacency(face_adjacency(mesh));
  ctx.margin = default_margin(mesh.num_vertices());
  return ctx;
}

template <typename T>
LossBreakdown Objective<T>::breakdown() const {
  LossBreakdown b;
  b.wrap = static_cast<double>(wrap.scalar());
  b.repel = static_cast<double>(repel.scalar());
  b.cycle_p = static_cast<double>(cycle_p.scalar());
  b.cycle_n = static_cast<double>(cycle_n.scalar());
  b.ddl = static_cast<double>(ddl.scalar());
  b.tdl = static_cast<double>(tdl.scalar());
  b.has_ao = ao.valid();
  b.ao = b.has_ao ? static_cast<double>(ao.scalar()) : 0.0;
  b.total = static_cast<double>(total.scalar());
  return b;
}

namespace {

template <typename T>
void require_finite(Var<T> v, const char* name) {
  if (!std::isfinite(static_cast<double>(v.scalar()))) {
    throw TrainingError(std::string("non-finite loss term '") + name + "'");
  }
}

}  // namespace

template <typename T>
Objective<T> base_objective(const LossContext<T>& ctx, const nn::Cycle2d<T>& c2, const nn::Cycle3d<T>& c3,
                            const nn::Frame<T>& frame, const LossWeights& weights, std::uint64_t repulsion_seed) {
  Tape<T>& tape = *c3.q.tape;
  Var<T> points = tape.constant(ctx.points);
  Var<T> normals = tape.constant(ctx.normals);
  Objective<T> o;
  o.wrap = wrap_loss(c2.p_hat, c2.n_hat, points, normals, weights.kappa_norm);
  o.repel = repulsion_loss(normalize_uv(c3.q), ctx.margin, kRepulsionCandidates, repulsion_seed);
  const auto cyc = cycle_loss(c2.q_hat, c2.q_hat_cycle, points, c3.p_tilde, normals, c3.n_tilde);
  o.cycle_p = cyc.position;
  o.cycle_n = cyc.normal;
  o.ddl = ddl(frame.e1, frame.e2);
  o.tdl = tdl(c3.q, ctx.triangles);
  const std::pair<Var<T>, const char*> terms[] = {{o.wrap, "wrap"}, {o.repel, "repel"}, {o.cycle_p, "cycle_p"},
                                                 {o.cycle_n, "cycle_n"}, {o.ddl, "ddl"}, {o.tdl, "tdl"}};
  for (const auto& [v, name] : terms) require_finite(v, name);
  Var<T> total = scale(o.wrap, weights.wrap);
  total = add(total, scale(o.repel, weights.repulsion));
  total = add(total, scale(o.cycle_p, weights.cycle_p));
  total = add(total, scale(o.cycle_n, weights.cycle_n));
  total = add(total, scale(o.ddl, weights.ddl));
  total = add(total, scale(o.tdl, weights.tdl));
  o.base = total;
  o.total = total;
  return o;
}

template <typename T>
void add_visibility(Objective<T>& objective, const LossContext<T>& ctx, const nn::Cycle3d<T>& c3,
                    const Tensor<T>& ao, const LossWeights& weights, const SeamConfig& seam) {
  auto scores = soft_seam_scores(ctx.rings, normalize_uv(c3.q), seam);
  objective.ao = ao_seam_loss(scores.s, ao, weights.epsilon);
  require_finite(objective.ao, "ao");
  objective.total = visibility_objective(objective.base, objective.ao, weights.lambda_vis);
  const auto& s = scores.s.value();
  objective.seam_soft.assign(s.data(), s.data() + s.size());
  for (auto& w : scores.warnings) objective.warnings.push_back(std::move(w));
}

#define UVFORGE_LOSSES_INSTANTIATE(T)                                                                   \
  template Var<T> chamfer(Var<T>, Var<T>);                                                              \
  template Var<T> cosine(Var<T>, Var<T>);                                                               \
  template Var<T> wrap_loss(Var<T>, Var<T>, Var<T>, Var<T>, double);                                    \
  template CycleTerms<T> cycle_loss(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>);                    \
  template Var<T> uv_side(Var<T>);                                                                      \
  template Var<T> normalize_uv(Var<T>);                                                                 \
  template Var<T> repulsion_loss(Var<T>, double, std::size_t, std::uint64_t);                           \
  template Var<T> ddl(Var<T>, Var<T>);                                                                  \
  template Var<T> tdl(Var<T>, const TriangleData&);                                                     \
  template SeamScores<T> soft_seam_scores(const RingPairs&, Var<T>, const SeamConfig&);                 \
  template Var<T> ao_seam_loss(Var<T>, const Tensor<T>&, double);                                       \
  template Var<T> visibility_objective(Var<T>, Var<T>, double);                                         \
  template struct LossContext<T>;                                                                       \
  template struct Objective<T>;                                                                         \
  template Objective<T> base_objective(const LossContext<T>&, const nn::Cycle2d<T>&, const nn::Cycle3d<T>&, \
                                       const nn::Frame<T>&, const LossWeights&, std::uint64_t);         \
  template void add_visibility(Objective<T>&, const LossContext<T>&, const nn::Cycle3d<T>&, const Tensor<T>&, \
                               const LossWeights&, const SeamConfig&);

UVFORGE_LOSSES_INSTANTIATE(float)
UVFORGE_LOSSES_INSTANTIATE(double)

#undef UVFORGE_LOSSES_INSTANTIATE

}  // namespace uvforge::losses
