#include "uvforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "uvforge/parallel.hpp"
#include "uvforge/rng.hpp"

namespace uvforge::training {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
  if (iterations < 1) throw InputError("iterations must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw InputError("learning rate must be positive");
  if (log_every < 1) throw InputError("log_every must be >= 1");
  if (shape.hidden < 1 || shape.feature < 1) throw InputError("network widths must be positive");
  if (!(pad >= 0 && pad < 0.5)) throw InputError("pad must lie in [0, 0.5)");
  weights.validate();
  seam.validate();
}

namespace {

bool all_finite(const nn::ParamNetF& net) {
  for (const auto* t : net.tensors()) {
    if (!t->allFinite()) return false;
  }
  return true;
}

std::filesystem::path checkpoint_stem(const TrainConfig& config) {
  if (!config.checkpoint.empty()) return config.checkpoint;
  return std::filesystem::temp_directory_path() / ("uvforge-last-good-" + std::to_string(config.seed));
}

[[noreturn]] void diverge(const TrainConfig& config, const nn::ParamNetF& last_good, int step, const std::string& why) {
  const auto stem = checkpoint_stem(config);
  nn::save_checkpoint(last_good, stem);
  throw DivergenceError("training diverged at step " + std::to_string(step) + " (" + why +
                            "); last good parameters saved to " + stem.string(),
                        stem, step);
}

UVResult train_impl(const Mesh& mesh, const std::vector<double>* ao, const TrainConfig& config,
                    const StepCallback& on_step) {
  config.validate();
  if (mesh.num_vertices() < 3 || mesh.num_faces() == 0) throw InputError("training needs a mesh with faces");
  const auto ctx = losses::LossContext<float>::from_mesh(mesh);
  const Tensor<float> lattice = nn::grid_lattice(mesh.num_vertices());
  Tensor<float> ao_t;
  if (ao) {
    if (ao->size() != mesh.num_vertices()) throw InputError("AO field size does not match vertex count");
    ao_t.resize(static_cast<Eigen::Index>(ao->size()), 1);
    for (std::size_t i = 0; i < ao->size(); ++i) ao_t(static_cast<Eigen::Index>(i), 0) = static_cast<float>((*ao)[i]);
  }

  UVResult result;
  result.params = nn::init_params(config.seed, config.shape);
  nn::AdamState adam;
  adam.kind = config.optimizer;
  adam.lr = config.lr;
  nn::ParamNetF last_good = result.params;
  result.loss_trace.reserve(static_cast<std::size_t>(config.iterations));
  if (ctx.rings.isolated > 0) {
    result.warnings.push_back(std::to_string(ctx.rings.isolated) + " isolated vertices have no 1-ring");
  }

  for (int step = 1; step <= config.iterations; ++step) {
    Tape<float> tape;
    const auto net = nn::bind(tape, result.params);
    Var<float> grid = tape.constant(lattice);
    Var<float> verts = tape.constant(ctx.points);
    const auto c2 = nn::forward_cycle_2d(net, grid);
    const auto c3 = nn::forward_cycle_3d(net, verts);
    const auto frame = nn::differential_frame(net, c3.wrap);
    losses::Objective<float> obj;
    try {
      obj = losses::base_objective(ctx, c2, c3, frame, config.weights, mix_seed(config.seed, step));
      if (ao) losses::add_visibility(obj, ctx, c3, ao_t, config.weights, config.seam);
    } catch (const TrainingError& e) {
      diverge(config, last_good, step, e.what());
    }
    const LossBreakdown b = obj.breakdown();
    if (!std::isfinite(b.total)) diverge(config, last_good, step, "non-finite total loss");
    result.loss_trace.push_back(b);
    if (on_step) on_step(step, b);

    if (step == config.iterations) {
      const auto& q = c3.q.value();
      result.uv.resize(static_cast<std::size_t>(q.rows()));
      for (Eigen::Index i = 0; i < q.rows(); ++i) result.uv[static_cast<std::size_t>(i)] = Vec2(q(i, 0), q(i, 1));
      result.seam_soft = std::move(obj.seam_soft);
    }

    tape.backward(obj.total);
    std::vector<Tensor<float>> grads;
    grads.reserve(net.params.size());
    for (const auto& p : net.params) grads.push_back(tape.grad(p));
    last_good = result.params;
    nn::adam_step(result.params.tensors(), grads, adam);
    if (!all_finite(result.params)) diverge(config, last_good, step, "non-finite parameters after update");
  }
  for (const auto& v : result.uv) {
    if (!v.allFinite()) diverge(config, last_good, config.iterations, "non-finite UV output");
  }
  return result;
}

}  // namespace

UVResult train_base(const Mesh& mesh, const TrainConfig& config, const StepCallback& on_step) {
  return train_impl(mesh, nullptr, config, on_step);
}

UVResult train_visibility(const Mesh& mesh, std::span<const double> ao, const TrainConfig& config,
                          const StepCallback& on_step) {
  const std::vector<double> field(ao.begin(), ao.end());
  return train_impl(mesh, &field, config, on_step);
}

AtlasLayout AtlasLayout::make(int parts, double pad) {
  if (parts < 1) throw InputError("atlas needs at least one part");
  if (!(pad >= 0 && pad < 0.5)) throw InputError("pad must lie in [0, 0.5)");
  AtlasLayout l;
  l.parts = parts;
  l.grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(parts))));
  while (l.grid * l.grid < parts) ++l.grid;
  while (l.grid > 1 && (l.grid - 1) * (l.grid - 1) >= parts) --l.grid;
  l.pad = pad;
  l.scale = (1.0 - 2.0 * pad) / l.grid;
  for (int k = 0; k < parts; ++k) {
    l.row.push_back(k / l.grid);
    l.col.push_back(k % l.grid);
  }
  return l;
}

Vec2 AtlasLayout::translation(int part) const {
  return {(col.at(part) + pad) / grid, (row.at(part) + pad) / grid};
}

namespace {

// Rounded (c + t) / G, moved by at most an ulp so that c <= x*G <= c + 1 holds
// exactly when 0 <= t <= 1.
double into_cell(int c, double t, int grid) {
  double x = (c + t) / grid;
  while (std::fma(x, grid, -double(c + 1)) > 0) x = std::nextafter(x, -1.0);
  while (std::fma(x, grid, -double(c)) < 0) x = std::nextafter(x, 2.0);
  return x;
}

}  // namespace

Vec2 AtlasLayout::apply(int part, const Vec2& u) const {
  const double span = 1.0 - 2.0 * pad;
  return {into_cell(col.at(part), pad + span * u.x(), grid), into_cell(row.at(part), pad + span * u.y(), grid)};
}

std::pair<Vec2, Vec2> AtlasLayout::cell(int part) const {
  const double g = grid;
  return {Vec2(col.at(part) / g, row.at(part) / g), Vec2((col.at(part) + 1) / g, (row.at(part) + 1) / g)};
}

std::vector<Vec2> normalize_island(std::span<const Vec2> uv) {
  if (uv.empty()) return {};
  Vec2 lo = uv.front(), hi = uv.front();
  for (const auto& p : uv) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double side = (hi - lo).maxCoeff();
  std::vector<Vec2> out;
  out.reserve(uv.size());
  for (const auto& p : uv) {
    Vec2 q = side > 0 ? Vec2((p - lo) / side) : Vec2(0, 0);
    out.push_back(q.cwiseMax(Vec2(0, 0)).cwiseMin(Vec2(1, 1)));
  }
  return out;
}

Atlas pack_atlas(const std::vector<std::vector<Vec2>>& islands, double pad) {
  Atlas atlas;
  atlas.layout = AtlasLayout::make(static_cast<int>(islands.size()), pad);
  for (std::size_t k = 0; k < islands.size(); ++k) {
    std::vector<Vec2> placed;
    placed.reserve(islands[k].size());
    for (const auto& u : islands[k]) {
      if (!(u.x() >= 0 && u.x() <= 1 && u.y() >= 0 && u.y() <= 1)) {
        throw InputError("pack_atlas: island " + std::to_string(k) + " is not normalized to the unit square");
      }
      placed.push_back(atlas.layout.apply(static_cast<int>(k), u));
    }
    atlas.islands.push_back(std::move(placed));
  }
  return atlas;
}

Labeling merge_tiny_parts(const Mesh& mesh, const Labeling& labeling, std::size_t min_vertices) {
  if (labeling.labels.size() != mesh.num_faces()) throw InputError("labeling size does not match face count");
  const Adjacency adj = face_adjacency(mesh);
  std::vector<int> labels = labeling.labels;
  for (;;) {
    std::map<int, std::vector<Index>> part_vertices;
    std::map<int, std::size_t> part_faces;
    for (std::size_t f = 0; f < labels.size(); ++f) {
      ++part_faces[labels[f]];
      for (Index v : mesh.faces()[f]) part_vertices[labels[f]].push_back(v);
    }
    int victim = -1;
    std::size_t victim_size = 0;
    for (auto& [label, verts] : part_vertices) {
      std::sort(verts.begin(), verts.end());
      verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
      if (verts.size() < min_vertices && (victim < 0 || verts.size() < victim_size)) {
        // Among tiny parts, merge the smallest first; ties by label.
        std::map<int, std::size_t> shared;
        for (const auto& p : adj.face_pairs) {
          const int la = labels[p.face_a], lb = labels[p.face_b];
          if (la == label && lb != label) ++shared[lb];
          if (lb == label && la != label) ++shared[la];
        }
        if (shared.empty()) continue;
        victim = label;
        victim_size = verts.size();
      }
    }
    if (victim < 0) break;
    std::map<int, std::size_t> shared;
    for (const auto& p : adj.face_pairs) {
      const int la = labels[p.face_a], lb = labels[p.face_b];
      if (la == victim && lb != victim) ++shared[lb];
      if (lb == victim && la != victim) ++shared[la];
    }
    int target = -1;
    std::size_t best = 0;
    for (const auto& [label, count] : shared) {
      if (count > best) {
        best = count;
        target = label;
      }
    }
    for (auto& l : labels) {
      if (l == victim) l = target;
    }
  }
  // Compact to 0..K-1 keeping the label order.
  std::map<int, int> remap;
  for (int l : labels) remap.emplace(l, 0);
  int next = 0;
  for (auto& [label, id] : remap) id = next++;
  for (auto& l : labels) l = remap[l];
  return Labeling::from_labels(std::move(labels));
}

std::uint64_t part_seed(std::uint64_t seed, int part) {
  return mix_seed(seed, static_cast<std::uint64_t>(part));
}

SemanticResult train_semantic(const Mesh& mesh, const Labeling& labeling, const TrainConfig& config,
                              std::optional<std::span<const double>> ao, const std::vector<int>& order) {
  config.validate();
  if (ao && ao->size() != mesh.num_vertices()) throw InputError("AO field size does not match vertex count");
  SemanticResult out;
  out.labeling = merge_tiny_parts(mesh, labeling);
  if (out.labeling.count != labeling.count) {
    out.warnings.push_back("merged " + std::to_string(labeling.count - out.labeling.count) +
                           " parts with fewer than 10 vertices");
  }
  const int k = out.labeling.count;
  std::vector<int> sequence = order;
  if (sequence.empty()) {
    sequence.resize(static_cast<std::size_t>(k));
    std::iota(sequence.begin(), sequence.end(), 0);
  }
  {
    std::vector<int> check = sequence;
    std::sort(check.begin(), check.end());
    for (int i = 0; i < k; ++i) {
      if (check.size() != static_cast<std::size_t>(k) || check[static_cast<std::size_t>(i)] != i) {
        throw InputError("part order must be a permutation of the part indices");
      }
    }
  }
  out.parts.resize(static_cast<std::size_t>(k));
  out.results.resize(static_cast<std::size_t>(k));
  for (int p = 0; p < k; ++p) out.parts[static_cast<std::size_t>(p)] = extract_submesh(mesh, out.labeling, p);

  parallel_for(sequence.size(), config.threads, [&](std::size_t i) {
    const auto p = static_cast<std::size_t>(sequence[i]);
    const auto& part = out.parts[p];
    TrainConfig local = config;
    local.seed = part_seed(config.seed, static_cast<int>(p));
    if (!config.checkpoint.empty()) {
      local.checkpoint = config.checkpoint;
      local.checkpoint += "-part" + std::to_string(p);
    }
    const Mesh normalized = normalize_mesh(part.submesh);
    if (ao) {
      std::vector<double> local_ao;
      local_ao.reserve(part.vertex_back_map.size());
      for (Index v : part.vertex_back_map) local_ao.push_back((*ao)[v]);
      out.results[p] = train_visibility(normalized, local_ao, local);
    } else {
      out.results[p] = train_base(normalized, local);
    }
  });

  std::vector<std::vector<Vec2>> islands;
  islands.reserve(static_cast<std::size_t>(k));
  for (const auto& r : out.results) islands.push_back(normalize_island(r.uv));
  out.atlas = pack_atlas(islands, config.pad);

  out.vertex_uv.assign(mesh.num_vertices(), Vec2::Zero());
  std::vector<bool> assigned(mesh.num_vertices(), false);
  out.corner_uv.assign(mesh.num_faces(), {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()});
  if (ao) out.seam_soft.assign(mesh.num_vertices(), 0.0);
  for (int p = 0; p < k; ++p) {
    const auto& part = out.parts[static_cast<std::size_t>(p)];
    const auto& uv = out.atlas.islands[static_cast<std::size_t>(p)];
    for (std::size_t v = 0; v < part.vertex_back_map.size(); ++v) {
      const Index parent = part.vertex_back_map[v];
      if (!assigned[parent]) {
        out.vertex_uv[parent] = uv[v];
        assigned[parent] = true;
      }
      if (ao) {
        const auto& s = out.results[static_cast<std::size_t>(p)].seam_soft;
        out.seam_soft[parent] = std::max(out.seam_soft[parent], s[v]);
      }
    }
    for (std::size_t f = 0; f < part.face_back_map.size(); ++f) {
      const Face& local = part.submesh.faces()[f];
      auto& corners = out.corner_uv[part.face_back_map[f]];
      for (int c = 0; c < 3; ++c) corners[static_cast<std::size_t>(c)] = uv[local[static_cast<std::size_t>(c)]];
    }
    for (const auto& w : out.results[static_cast<std::size_t>(p)].warnings) {
      out.warnings.push_back("part " + std::to_string(p) + ": " + w);
    }
  }
  return out;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossBreakdown>& trace, int log_every) {
  if (log_every < 1) throw InputError("log_every must be >= 1");
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const int step = static_cast<int>(i) + 1;
    if (step % log_every != 0 && step != 1 && i + 1 != trace.size()) continue;
    nlohmann::json j = trace[i];
    j["step"] = step;
    nlohmann::ordered_json o;
    o["step"] = step;
    for (const char* key : {"wrap", "repel", "cycle_p", "cycle_n", "ddl", "tdl", "ao", "total"}) o[key] = j[key];
    out << o.dump() << '\n';
  }
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace uvforge::training
