#include "uvforge/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/boykov_kolmogorov_max_flow.hpp>

#include "uvforge/rng.hpp"

namespace uvforge {

// -- GMM ------------------------------------------------------------------------

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

// Fills resp (N x K) with log(w_k) + log N(x | k) and returns the total
// log-likelihood; resp rows are normalized in place.
double e_step(const Gmm1d& g, const std::vector<double>& x, std::vector<double>& resp) {
  const std::size_t n = x.size();
  const int K = g.K;
  resp.resize(n * K);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double* r = &resp[i * K];
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      r[k] = std::log(g.weights[k]) + log_normal(x[i], g.means[k], g.variances[k]);
      mx = std::max(mx, r[k]);
    }
    double s = 0;
    for (int k = 0; k < K; ++k) s += std::exp(r[k] - mx);
    const double lse = mx + std::log(s);
    total += lse;
    for (int k = 0; k < K; ++k) r[k] = std::exp(r[k] - lse);
  }
  return total;
}

}  // namespace

double Gmm1d::log_likelihood(const std::vector<double>& values) const {
  std::vector<double> resp;
  return e_step(*this, values, resp);
}

std::vector<double> Gmm1d::posteriors(const std::vector<double>& values) const {
  std::vector<double> resp;
  e_step(*this, values, resp);
  return resp;
}

Gmm1d fit_gmm_1d(const std::vector<double>& values, int K, int max_iter, double tol, std::uint64_t seed) {
  if (K < 1) throw SegmentationError("GMM needs K >= 1");
  if (values.size() < static_cast<std::size_t>(K)) throw SegmentationError("GMM needs at least K values");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < static_cast<std::size_t>(K)) {
    throw SegmentationError("GMM collapse: K = " + std::to_string(K) + " exceeds the " + std::to_string(distinct.size()) +
                            " distinct values");
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  var = std::max(var / n, kGmmVarianceFloor);

  Gmm1d g;
  g.K = K;
  g.weights.assign(K, 1.0 / K);
  g.variances.assign(K, var);
  for (int k = 0; k < K; ++k) {
    const double q = (k + 0.5) / K;
    g.means.push_back(sorted[std::min(sorted.size() - 1, static_cast<std::size_t>(q * n))]);
  }
  // Coinciding quantiles (heavy ties): redraw duplicates from the distinct values.
  Rng rng(seed);
  for (int k = 1; k < K; ++k) {
    while (std::find(g.means.begin(), g.means.begin() + k, g.means[k]) != g.means.begin() + k) {
      g.means[k] = distinct[rng.below(distinct.size())];
    }
  }
  std::sort(g.means.begin(), g.means.end());

  std::vector<double> resp;
  double ll = e_step(g, values, resp);
  g.log_likelihood_trace.push_back(ll);
  for (int it = 0; it < max_iter; ++it) {
    for (int k = 0; k < K; ++k) {
      double nk = 0, sx = 0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        nk += resp[i * K + k];
        sx += resp[i * K + k] * values[i];
      }
      if (nk <= 0) continue;  // empty component keeps its parameters
      const double mk = sx / nk;
      double sv = 0;
      for (std::size_t i = 0; i < values.size(); ++i) sv += resp[i * K + k] * (values[i] - mk) * (values[i] - mk);
      g.weights[k] = nk / n;
      g.means[k] = mk;
      g.variances[k] = std::max(sv / nk, kGmmVarianceFloor);
    }
    const double wsum = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
    for (double& w : g.weights) w /= wsum;
    const double next = e_step(g, values, resp);
    g.log_likelihood_trace.push_back(next);
    const double gain = next - ll;
    ll = next;
    if (gain < tol) break;
  }
  return g;
}

// -- field preprocessing --------------------------------------------------------

std::vector<double> smooth_and_normalize(const Mesh& mesh, const Adjacency& adjacency, const std::vector<double>& field,
                                         int iterations, std::vector<std::string>* warnings) {
  if (field.size() != mesh.num_faces()) throw InputError("field size does not match face count");
  if (iterations < 0) throw InputError("smoothing iterations must be >= 0");
  std::vector<double> area(mesh.num_faces());
  for (std::size_t f = 0; f < area.size(); ++f) area[f] = mesh.face_area(f);
  std::vector<double> x = field, next(field.size());
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t f = 0; f < x.size(); ++f) {
      double wsum = area[f], acc = area[f] * x[f];
      for (Index g : adjacency.face_neighbors[f]) {
        wsum += area[g];
        acc += area[g] * x[g];
      }
      next[f] = wsum > 0 ? acc / wsum : x[f];
    }
    std::swap(x, next);
  }
  for (double& v : x) v = std::log1p(v);
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double mn = *lo, mx = *hi;
  if (!(mx - mn > 1e-12 * std::max(1.0, std::abs(mx)))) {
    if (warnings) warnings->push_back("constant field after smoothing; normalized to zeros");
    return std::vector<double>(x.size(), 0.0);
  }
  for (double& v : x) v = (v - mn) / (mx - mn);
  return x;
}

double smoothness_cost(double dihedral, double edge_length, double lambda) {
  const double pi = std::numbers::pi;
  const double m = std::min(dihedral, 2 * pi - dihedral) / pi;
  const double factor = dihedral < pi ? kConvexFactor : 1.0;
  return lambda * edge_length * std::max(kSmoothnessFloor, factor * -std::log(m + 1e-8));
}

std::vector<double> smoothness_costs(const Adjacency& adjacency, double lambda) {
  std::vector<double> out;
  out.reserve(adjacency.face_pairs.size());
  for (const auto& p : adjacency.face_pairs) out.push_back(smoothness_cost(p.dihedral, p.edge_length, lambda));
  return out;
}

// -- alpha-expansion ------------------------------------------------------------

double GraphCutProblem::energy(const std::vector<int>& labels) const {
  double e = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) e += unary[i * num_labels + labels[i]];
  for (const auto& p : pairs) {
    if (labels[p.a] != labels[p.b]) e += p.weight;
  }
  return e;
}

void GraphCutProblem::validate() const {
  if (num_labels < 1) throw SegmentationError("graph cut needs at least one label");
  if (unary.size() % num_labels != 0) throw SegmentationError("unary size is not a multiple of the label count");
  for (double u : unary) {
    if (!std::isfinite(u) || u < 0) throw SegmentationError("unary costs must be finite and non-negative");
  }
  const std::size_t n = num_nodes();
  for (const auto& p : pairs) {
    if (p.a >= n || p.b >= n || p.a == p.b) throw SegmentationError("pair term references an invalid node");
    if (!std::isfinite(p.weight) || p.weight < 0) throw SegmentationError("pairwise costs must be finite and non-negative");
  }
}

namespace {

using Traits = boost::adjacency_list_traits<boost::vecS, boost::vecS, boost::directedS>;
using Graph = boost::adjacency_list<
    boost::vecS, boost::vecS, boost::directedS,
    boost::property<boost::vertex_index_t, long,
                    boost::property<boost::vertex_color_t, boost::default_color_type,
                                    boost::property<boost::vertex_distance_t, long,
                                                    boost::property<boost::vertex_predecessor_t, Traits::edge_descriptor>>>>,
    boost::property<boost::edge_capacity_t, double,
                    boost::property<boost::edge_residual_capacity_t, double,
                                    boost::property<boost::edge_reverse_t, Traits::edge_descriptor>>>>;

class FlowGraph {
 public:
  explicit FlowGraph(std::size_t nodes) : g_(nodes + 2), source_(nodes), sink_(nodes + 1) {}

  void add(std::size_t u, std::size_t v, double cap) {
    if (cap <= 0) return;
    auto capacity = boost::get(boost::edge_capacity, g_);
    auto reverse = boost::get(boost::edge_reverse, g_);
    const auto e = boost::add_edge(u, v, g_).first;
    const auto r = boost::add_edge(v, u, g_).first;
    capacity[e] = cap;
    capacity[r] = 0;
    reverse[e] = r;
    reverse[r] = e;
  }
  [[nodiscard]] std::size_t source() const { return source_; }
  [[nodiscard]] std::size_t sink() const { return sink_; }

  // Solves and reports which nodes ended on the source side.
  std::vector<char> solve() {
    boost::boykov_kolmogorov_max_flow(g_, source_, sink_);
    auto color = boost::get(boost::vertex_color, g_);
    std::vector<char> src(source_);
    for (std::size_t i = 0; i < source_; ++i) src[i] = color[i] == boost::black_color;
    return src;
  }

 private:
  Graph g_;
  std::size_t source_, sink_;
};

}  // namespace

ExpansionResult alpha_expansion(const GraphCutProblem& problem, std::vector<int> init, int sweeps) {
  problem.validate();
  const std::size_t n = problem.num_nodes();
  if (init.size() != n) throw SegmentationError("initial labeling size does not match the problem");
  for (int l : init) {
    if (l < 0 || l >= problem.num_labels) throw SegmentationError("initial label out of range");
  }
  const int K = problem.num_labels;
  ExpansionResult out;
  out.labels = std::move(init);
  double energy = problem.energy(out.labels);
  out.energy_trace.push_back(energy);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    bool changed = false;
    for (int alpha = 0; alpha < K; ++alpha) {
      // Binary move: y = 0 keeps the current label, y = 1 switches to alpha.
      // Source side of the cut is y = 0.
      FlowGraph graph(n);
      std::vector<double> lin(n, 0.0);
      for (std::size_t p = 0; p < n; ++p) {
        lin[p] = problem.unary[p * K + alpha] - problem.unary[p * K + out.labels[p]];
      }
      for (const auto& t : problem.pairs) {
        const int lp = out.labels[t.a], lq = out.labels[t.b];
        const double A = lp != lq ? t.weight : 0.0;
        const double B = lp != alpha ? t.weight : 0.0;
        const double C = alpha != lq ? t.weight : 0.0;
        // E = A + (C - A) y_p + (0 - C) y_q + (B + C - A) (1 - y_p) y_q
        lin[t.a] += C - A;
        lin[t.b] -= C;
        graph.add(t.a, t.b, B + C - A);
      }
      for (std::size_t p = 0; p < n; ++p) {
        if (lin[p] > 0) {
          graph.add(graph.source(), p, lin[p]);
        } else if (lin[p] < 0) {
          graph.add(p, graph.sink(), -lin[p]);
        }
      }
      const auto keep = graph.solve();
      std::vector<int> candidate = out.labels;
      for (std::size_t p = 0; p < n; ++p) {
        if (!keep[p]) candidate[p] = alpha;
      }
      const double e = problem.energy(candidate);
      if (e < energy) {
        out.labels = std::move(candidate);
        energy = e;
        out.energy_trace.push_back(e);
        ++out.accepted_moves;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return out;
}

// -- labels ---------------------------------------------------------------------

Labeling relabel_components(const Adjacency& adjacency, const std::vector<int>& labels) {
  return Labeling::from_labels(connected_components(adjacency, labels));
}

Labeling relabel_components(const Mesh& mesh, const Labeling& labeling) {
  return Labeling::from_labels(connected_components(mesh, labeling));
}

int default_min_faces(std::size_t num_faces) {
  return std::max(20, static_cast<int>(std::ceil(0.005 * static_cast<double>(num_faces))));
}

std::vector<int> merge_small_components(const Adjacency& adjacency, std::vector<int> labels, int min_faces) {
  const std::size_t nf = labels.size();
  // Components with no neighbouring component cannot be merged; skip them.
  std::set<int> stranded_faces;
  for (;;) {
    const auto comp = connected_components(adjacency, labels);
    const int nc = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
    std::vector<int> size(nc, 0), first(nc, -1);
    for (std::size_t f = 0; f < nf; ++f) {
      ++size[comp[f]];
      if (first[comp[f]] < 0) first[comp[f]] = static_cast<int>(f);
    }
    int target = -1;
    for (int c = 0; c < nc; ++c) {
      if (size[c] >= min_faces || stranded_faces.count(first[c])) continue;
      if (target < 0 || size[c] < size[target]) target = c;
    }
    if (target < 0) return labels;
    std::map<int, double> boundary;  // neighbouring component -> shared length
    for (const auto& p : adjacency.face_pairs) {
      const int ca = comp[p.face_a], cb = comp[p.face_b];
      if (ca == target && cb != target) boundary[cb] += p.edge_length;
      if (cb == target && ca != target) boundary[ca] += p.edge_length;
    }
    if (boundary.empty()) {
      stranded_faces.insert(first[target]);
      continue;
    }
    int best = -1;
    double best_len = -1;
    for (const auto& [c, len] : boundary) {
      if (len > best_len) {
        best = c;
        best_len = len;
      }
    }
    const int new_label = labels[first[best]];
    for (std::size_t f = 0; f < nf; ++f) {
      if (comp[f] == target) labels[f] = new_label;
    }
  }
}

std::vector<int> majority_filter(const Adjacency& adjacency, const std::vector<int>& labels, int rounds) {
  std::vector<int> cur = labels;
  for (int r = 0; r < rounds; ++r) {
    std::vector<int> next = cur;
    for (std::size_t f = 0; f < cur.size(); ++f) {
      std::map<int, int> votes;
      for (Index g : adjacency.face_neighbors[f]) ++votes[cur[g]];
      int best = -1, best_count = 0;
      bool tie = false;
      for (const auto& [label, count] : votes) {
        if (count > best_count) {
          best = label;
          best_count = count;
          tie = false;
        } else if (count == best_count) {
          tie = true;
        }
      }
      const auto own = votes.find(cur[f]);
      const int own_count = own == votes.end() ? 0 : own->second;
      if (best >= 0 && !tie && best != cur[f] && best_count > own_count) next[f] = best;
    }
    cur = std::move(next);
  }
  return cur;
}

Labeling postprocess_labels(const Mesh& mesh, const Adjacency& adjacency, const Labeling& labeling, int min_faces,
                            int majority_rounds, std::vector<std::string>* warnings) {
  if (min_faces < 1) throw InputError("min_faces must be >= 1");
  if (labeling.labels.size() != mesh.num_faces()) throw InputError("labeling size does not match face count");
  if (mesh.num_faces() < static_cast<std::size_t>(min_faces)) {
    if (warnings) warnings->push_back("mesh has fewer faces than min_faces; post-processing skipped");
    return labeling;
  }
  auto labels = merge_small_components(adjacency, labeling.labels, min_faces);
  labels = majority_filter(adjacency, labels, majority_rounds);
  labels = merge_small_components(adjacency, std::move(labels), min_faces);
  return relabel_components(adjacency, labels);
}

// -- pipeline -------------------------------------------------------------------

SegmentResult segment_mesh(const Mesh& input, int K, const SegmentConfig& config,
                           const std::vector<double>& precomputed_shdf) {
  if (K < 1) throw InputError("K must be >= 1");
  SegmentResult out;
  const Mesh mesh = normalize_mesh(input);
  const Adjacency adj = face_adjacency(mesh);
  if (!precomputed_shdf.empty()) {
    if (precomputed_shdf.size() != mesh.num_faces()) throw InputError("cached ShDF does not match the mesh");
    out.shdf = precomputed_shdf;
  } else {
    out.shdf = shape_diameter(mesh, Bvh(mesh), config.fields, &out.warnings);
  }
  out.normalized = smooth_and_normalize(mesh, adj, out.shdf, config.smooth_iterations, &out.warnings);
  out.gmm = fit_gmm_1d(out.normalized, K, config.gmm_max_iter, config.gmm_tol, config.fields.rng_seed);
  const auto post = out.gmm.posteriors(out.normalized);

  GraphCutProblem problem;
  problem.num_labels = K;
  problem.unary.resize(post.size());
  for (std::size_t i = 0; i < post.size(); ++i) problem.unary[i] = std::max(0.0, -std::log(post[i] + 1e-12));
  out.initial_labels.resize(mesh.num_faces());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const double* row = &post[f * K];
    out.initial_labels[f] = static_cast<int>(std::max_element(row, row + K) - row);
  }
  // lambda_smooth is dimensionless: scaled by the mean unary and by the
  // inverse mean edge length so the edge-length factor is O(1).
  const double mean_unary = std::accumulate(problem.unary.begin(), problem.unary.end(), 0.0) /
                            static_cast<double>(std::max<std::size_t>(1, problem.unary.size()));
  double mean_len = 0;
  for (const auto& p : adj.face_pairs) mean_len += p.edge_length;
  mean_len = adj.face_pairs.empty() ? 1.0 : mean_len / static_cast<double>(adj.face_pairs.size());
  const double lambda = config.lambda_smooth * mean_unary / mean_len;
  const auto weights = smoothness_costs(adj, lambda);
  for (std::size_t i = 0; i < adj.face_pairs.size(); ++i) {
    problem.pairs.push_back({adj.face_pairs[i].face_a, adj.face_pairs[i].face_b, weights[i]});
  }
  auto cut = alpha_expansion(problem, out.initial_labels, config.sweeps);
  out.cut_labels = cut.labels;
  out.energy_trace = std::move(cut.energy_trace);
  const Labeling components = relabel_components(adj, cut.labels);
  const int min_faces = config.min_faces > 0 ? config.min_faces : default_min_faces(mesh.num_faces());
  out.labeling = postprocess_labels(mesh, adj, components, min_faces, config.majority_rounds, &out.warnings);
  return out;
}

std::vector<int> vertex_labels(const Mesh& mesh, const Labeling& labeling) {
  std::vector<std::map<int, int>> votes(mesh.num_vertices());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    for (Index v : mesh.faces()[f]) ++votes[v][labeling.labels[f]];
  }
  std::vector<int> out(mesh.num_vertices(), 0);
  for (std::size_t v = 0; v < out.size(); ++v) {
    int best = 0;
    for (const auto& [label, count] : votes[v]) {
      if (count > best) {
        best = count;
        out[v] = label;
      }
    }
  }
  return out;
}

}  // namespace uvforge
