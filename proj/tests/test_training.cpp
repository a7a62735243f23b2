#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "uvforge/mesh.hpp"
#include "uvforge/primitives.hpp"
#include "uvforge/rng.hpp"
#include "uvforge/training.hpp"

using namespace uvforge;
using namespace uvforge::training;

namespace {

TrainConfig small_config(int iterations, std::uint64_t seed = 0) {
  TrainConfig c;
  c.iterations = iterations;
  c.seed = seed;
  c.shape = {16, 8};
  c.lr = 3e-3;
  c.threads = 1;
  return c;
}

std::vector<double> height_field(const Mesh& m) {
  std::vector<double> ao;
  for (const auto& v : m.vertices()) ao.push_back(std::clamp(0.5 + v.z(), 0.0, 1.0));
  return ao;
}

// Face labels split by the sign of the centroid's z.
Labeling split_by_z(const Mesh& m) {
  std::vector<int> labels;
  for (const auto& f : m.faces()) {
    const double z = m.vertices()[f[0]].z() + m.vertices()[f[1]].z() + m.vertices()[f[2]].z();
    labels.push_back(z > 0 ? 1 : 0);
  }
  return Labeling::from_labels(std::move(labels));
}

// Exact test of lo/G <= x <= hi/G for integer lo, hi, G: fma rounds once, so
// the sign of x*G - lo is exact.
bool in_cell_exact(double x, int lo, int grid) {
  return std::fma(x, grid, -double(lo)) >= 0 && std::fma(x, grid, -double(lo + 1)) <= 0;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = TrainConfig{};
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c.lr = std::nan("");
  CHECK_THROWS_AS(c.validate(), InputError);
  c = TrainConfig{};
  c.pad = 0.5;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("train_base optimizes and is deterministic") {
  const std::vector<Mesh> fleet{normalize_mesh(make_icosphere(1)), normalize_mesh(make_grid(5, 5)),
                                normalize_mesh(make_box({0, 0, 0}, {1, 1, 1}, 2))};
  for (std::size_t k = 0; k < fleet.size(); ++k) {
    CAPTURE(k);
    const auto cfg = small_config(80, k);
    int callbacks = 0;
    const auto r = train_base(fleet[k], cfg, [&](int step, const LossBreakdown& b) {
      CHECK(step == ++callbacks);
      CHECK_FALSE(b.has_ao);
    });
    CHECK(callbacks == 80);
    REQUIRE(r.loss_trace.size() == 80);
    CHECK(r.uv.size() == fleet[k].num_vertices());
    for (const auto& u : r.uv) CHECK(u.allFinite());
    CHECK(r.loss_trace.back().total < r.loss_trace.front().total);
    double running_min = r.loss_trace.front().total;
    for (const auto& b : r.loss_trace) running_min = std::min(running_min, b.total);
    CHECK(r.loss_trace.back().total <= 1.05 * running_min);
    CHECK(r.seam_soft.empty());

    const auto again = train_base(fleet[k], cfg);
    CHECK(again.uv == r.uv);
    for (std::size_t i = 0; i < r.loss_trace.size(); ++i) CHECK(again.loss_trace[i].total == r.loss_trace[i].total);
  }
}

TEST_CASE("train_visibility") {
  const Mesh mesh = normalize_mesh(make_icosphere(1));
  const auto ao = height_field(mesh);
  SUBCASE("zero visibility weight reproduces the base run") {
    auto cfg = small_config(25, 3);
    cfg.weights.lambda_vis = 0;
    const auto base = train_base(mesh, cfg);
    const auto vis = train_visibility(mesh, ao, cfg);
    CHECK(vis.uv == base.uv);
    for (std::size_t i = 0; i < base.loss_trace.size(); ++i) {
      CHECK(vis.loss_trace[i].total == base.loss_trace[i].total);
      CHECK(vis.loss_trace[i].has_ao);
    }
  }
  SUBCASE("ao reported every step and seam scores returned") {
    const auto r = train_visibility(mesh, ao, small_config(10));
    for (const auto& b : r.loss_trace) {
      CHECK(b.has_ao);
      CHECK(b.ao >= 0);
      CHECK(b.ao <= 1);
    }
    REQUIRE(r.seam_soft.size() == mesh.num_vertices());
    for (double s : r.seam_soft) CHECK((s >= 0 && s <= 1));
  }
  SUBCASE("ao size mismatch") {
    std::vector<double> short_ao(3, 0.5);
    CHECK_THROWS_AS((void)train_visibility(mesh, short_ao, small_config(2)), InputError);
  }
}

TEST_CASE("divergence saves the last good parameters") {
  testing::TempDir dir;
  auto cfg = small_config(5, 7);
  cfg.lr = 1e30;
  cfg.checkpoint = dir / "last";
  try {
    (void)train_base(normalize_mesh(make_icosphere(1)), cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.checkpoint_stem() == cfg.checkpoint);
    CHECK(e.step() >= 1);
    const auto saved = nn::load_checkpoint(cfg.checkpoint);
    for (const auto* t : saved.tensors()) CHECK(t->allFinite());
  }
}

TEST_CASE("atlas layout") {
  SUBCASE("four parts") {
    const auto l = AtlasLayout::make(4, 0.05);
    CHECK(l.grid == 2);
    CHECK(l.scale == doctest::Approx(0.45));
    CHECK(l.translation(0).x() == doctest::Approx(0.025));
    CHECK(l.translation(0).y() == doctest::Approx(0.025));
    CHECK(l.translation(3).x() == doctest::Approx(0.525));
    CHECK(l.row[2] == 1);
    CHECK(l.col[2] == 0);
  }
  SUBCASE("single part without padding is the identity") {
    const auto l = AtlasLayout::make(1, 0.0);
    CHECK(l.scale == 1.0);
    const Vec2 u(0.3, 0.8);
    CHECK(l.apply(0, u) == u);
  }
  SUBCASE("five parts use a 3x3 grid") {
    const auto l = AtlasLayout::make(5, 0.05);
    CHECK(l.grid == 3);
    std::set<std::pair<int, int>> cells;
    for (int k = 0; k < 5; ++k) cells.insert({l.row[k], l.col[k]});
    CHECK(cells.size() == 5);
    CHECK(cells.count({1, 1}) == 1);
    CHECK(cells.count({2, 0}) == 0);
  }
  SUBCASE("invalid") {
    CHECK_THROWS_AS((void)AtlasLayout::make(2, 0.5), InputError);
    CHECK_THROWS_AS((void)AtlasLayout::make(2, -0.1), InputError);
    CHECK_THROWS_AS((void)AtlasLayout::make(0, 0.1), InputError);
  }
}

TEST_CASE("packing containment is exact") {
  Rng rng(99);
  for (int parts : {1, 2, 4, 5, 9}) {
    for (double pad : {0.0, 0.05, 0.25, 0.49}) {
      std::vector<std::vector<Vec2>> islands(static_cast<std::size_t>(parts));
      for (auto& island : islands) {
        island = {Vec2(0, 0), Vec2(1, 1), Vec2(0, 1), Vec2(1, 0)};
        for (int i = 0; i < 40; ++i) island.emplace_back(rng.uniform(0, 1), rng.uniform(0, 1));
      }
      const auto atlas = pack_atlas(islands, pad);
      const auto& l = atlas.layout;
      CHECK(l.grid == static_cast<int>(std::ceil(std::sqrt(parts))));
      std::set<std::pair<int, int>> cells;
      for (int k = 0; k < parts; ++k) {
        CHECK(cells.insert({l.row[k], l.col[k]}).second);
        for (const auto& u : atlas.islands[static_cast<std::size_t>(k)]) {
          CHECK(in_cell_exact(u.x(), l.col[k], l.grid));
          CHECK(in_cell_exact(u.y(), l.row[k], l.grid));
        }
      }
    }
  }
  CHECK_THROWS_AS((void)pack_atlas({{Vec2(0, 0), Vec2(1.5, 0)}}, 0.05), InputError);
}

TEST_CASE("normalize_island") {
  const std::vector<Vec2> uv{{2, 3}, {6, 3}, {4, 5}};
  const auto n = normalize_island(uv);
  CHECK(n[0] == Vec2(0, 0));
  CHECK(n[1] == Vec2(1, 0));
  CHECK(n[2].isApprox(Vec2(0.5, 0.5)));
  const auto single = normalize_island(std::vector<Vec2>{{3, 3}});
  CHECK(single[0] == Vec2(0, 0));
}

TEST_CASE("merge_tiny_parts") {
  const Mesh m = make_icosphere(1);
  auto labels = split_by_z(m).labels;
  // The topmost face, relabelled 2, is surrounded by label 1.
  std::size_t lonely = 0;
  auto centroid_z = [&](std::size_t f) {
    const auto& t = m.faces()[f];
    return m.vertices()[t[0]].z() + m.vertices()[t[1]].z() + m.vertices()[t[2]].z();
  };
  for (std::size_t f = 1; f < m.num_faces(); ++f) {
    if (centroid_z(f) > centroid_z(lonely)) lonely = f;
  }
  labels[lonely] = 2;
  const auto merged = merge_tiny_parts(m, Labeling::from_labels(labels));
  CHECK(merged.count == 2);
  CHECK(merged.labels[lonely] == 1);
  SUBCASE("labels are compacted") {
    std::vector<int> sparse = split_by_z(m).labels;
    for (int& l : sparse) l = l == 1 ? 5 : 0;
    const auto c = merge_tiny_parts(m, Labeling::from_labels(sparse));
    CHECK(c.count == 2);
    CHECK(*std::max_element(c.labels.begin(), c.labels.end()) == 1);
  }
}

TEST_CASE("train_semantic") {
  const Mesh mesh = normalize_mesh(make_icosphere(2));
  SUBCASE("single part equals base training in the padded cell") {
    auto cfg = small_config(15, 4);
    const auto r = train_semantic(mesh, Labeling::from_labels(std::vector<int>(mesh.num_faces(), 0)), cfg);
    REQUIRE(r.results.size() == 1);
    auto part_cfg = cfg;
    part_cfg.seed = part_seed(cfg.seed, 0);
    const auto base = train_base(normalize_mesh(r.parts[0].submesh), part_cfg);
    CHECK(base.uv == r.results[0].uv);
    const auto island = normalize_island(base.uv);
    for (std::size_t i = 0; i < island.size(); ++i) {
      const auto v = r.parts[0].vertex_back_map[i];
      CHECK(r.vertex_uv[v] == r.atlas.layout.apply(0, island[i]));
      CHECK(r.vertex_uv[v].x() >= cfg.pad - 1e-12);
      CHECK(r.vertex_uv[v].x() <= 1 - cfg.pad + 1e-12);
    }
  }
  SUBCASE("two parts occupy disjoint cells and ignore training order") {
    const auto labeling = split_by_z(mesh);
    auto cfg = small_config(10, 8);
    const auto a = train_semantic(mesh, labeling, cfg);
    REQUIRE(a.results.size() == 2);
    std::array<Eigen::AlignedBox2d, 2> boxes;
    for (int k = 0; k < 2; ++k) {
      for (const auto& u : a.atlas.islands[static_cast<std::size_t>(k)]) boxes[static_cast<std::size_t>(k)].extend(u);
    }
    CHECK(boxes[0].intersection(boxes[1]).isEmpty());
    const auto b = train_semantic(mesh, labeling, cfg, std::nullopt, {1, 0});
    CHECK(a.vertex_uv == b.vertex_uv);
    CHECK(a.corner_uv == b.corner_uv);
    cfg.threads = 2;
    const auto c = train_semantic(mesh, labeling, cfg);
    CHECK(a.vertex_uv == c.vertex_uv);
  }
  SUBCASE("visibility per part") {
    const auto ao = height_field(mesh);
    const auto r = train_semantic(mesh, split_by_z(mesh), small_config(5), std::span<const double>(ao));
    CHECK(r.seam_soft.size() == mesh.num_vertices());
    for (const auto& res : r.results) CHECK(res.loss_trace.back().has_ao);
  }
  SUBCASE("corner UVs come from the face's own part") {
    const auto labeling = split_by_z(mesh);
    const auto r = train_semantic(mesh, labeling, small_config(3));
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
      const int k = r.labeling.labels[f];
      const auto [lo, hi] = r.atlas.layout.cell(k);
      for (const auto& u : r.corner_uv[f]) {
        CHECK(u.x() >= lo.x());
        CHECK(u.y() >= lo.y());
        CHECK(u.x() <= hi.x());
        CHECK(u.y() <= hi.y());
      }
    }
  }
}

TEST_CASE("loss trace file") {
  testing::TempDir dir;
  std::vector<LossBreakdown> trace(10);
  for (std::size_t i = 0; i < trace.size(); ++i) trace[i].total = double(i);
  trace[2].has_ao = true;
  trace[2].ao = 0.25;
  write_loss_trace(dir / "l.jsonl", trace, 3);
  std::istringstream in(testing::read_file(dir / "l.jsonl"));
  std::vector<int> steps;
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    steps.push_back(j["step"].get<int>());
    CHECK(j.size() == 9);
    CHECK(j["total"].get<double>() == double(steps.back() - 1));
    if (steps.back() == 3) {
      CHECK(j["ao"].get<double>() == 0.25);
    } else {
      CHECK(j["ao"].is_null());
    }
  }
  CHECK(steps == std::vector<int>{1, 3, 6, 9, 10});
  CHECK_THROWS_AS(write_loss_trace(dir / "x.jsonl", trace, 0), InputError);
}
