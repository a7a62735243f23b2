#include <doctest.h>
#include <png.h>

#include <cstdlib>
#include <nlohmann/json.hpp>
#include <numbers>
#include <regex>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "uvforge/cli.hpp"
#include "uvforge/obj_io.hpp"
#include "uvforge/primitives.hpp"

using namespace uvforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json load(const fs::path& p) { return json::parse(testing::read_file(p)); }

// Small network and few steps keep every command well under a second.
std::vector<std::string> fast(std::vector<std::string> args) {
  for (const char* a : {"--iters", "20", "--hidden", "16", "--feature", "8", "--threads", "1"}) args.emplace_back(a);
  return args;
}

// Analytic cylinder unrolled with a duplicated seam column.
void write_seamed_cylinder(const fs::path& path, int around, int rows) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  ObjTexture tex;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c <= around; ++c) {
      const double t = 2 * std::numbers::pi * c / around;
      if (c < around) verts.emplace_back(std::cos(t), std::sin(t), 2.0 * r / (rows - 1));
      tex.texcoords.emplace_back(t, 2.0 * r / (rows - 1));
    }
  }
  auto v = [&](int r, int c) { return static_cast<Index>(r * around + c % around); };
  auto t = [&](int r, int c) { return static_cast<Index>(r * (around + 1) + c); };
  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c < around; ++c) {
      faces.push_back({v(r, c), v(r, c + 1), v(r + 1, c + 1)});
      tex.faces.push_back({t(r, c), t(r, c + 1), t(r + 1, c + 1)});
      faces.push_back({v(r, c), v(r + 1, c + 1), v(r + 1, c)});
      tex.faces.push_back({t(r, c), t(r + 1, c + 1), t(r + 1, c)});
    }
  }
  // Texcoords go in [0, 1] with a uniform scale.
  for (auto& u : tex.texcoords) u /= 2 * std::numbers::pi;
  save_obj(Mesh(verts, faces), tex, path);
}

std::set<std::string> files_in(const fs::path& dir) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.insert(e.path().filename().string());
  return names;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == cli::kInput);
  CHECK(run({"bogus"}).code == cli::kInput);
  CHECK(run({"--help"}).code == cli::kOk);
  const bool had_default_out = fs::exists("uvforge_out");
  const auto missing = run({"segment", "/nonexistent/mesh.obj", "--k", "2"});
  CHECK(missing.code == cli::kInput);
  CHECK(missing.err.find("/nonexistent/mesh.obj") != std::string::npos);
  CHECK(fs::exists("uvforge_out") == had_default_out);
}

TEST_CASE("segment") {
  testing::TempDir dir;
  const auto mesh = dir / "dumbbell.obj";
  save_obj(make_dumbbell(0.25).mesh, std::nullopt, mesh);
  const auto a = run({"segment", mesh.string(), "--k", "2", "--shdf-rays", "24", "-o", (dir / "a").string()});
  REQUIRE(a.code == cli::kOk);
  const auto labels = load(dir / "a" / "labels.json");
  CHECK(labels["count"].get<int>() >= 2);
  CHECK(labels["labels"].size() == make_dumbbell(0.25).mesh.num_faces());
  CHECK(fs::exists(dir / "a" / "colored.ply"));
  const auto manifest = load(dir / "a" / "manifest.json");
  CHECK(manifest["outputs"] == json({"labels.json", "colored.ply"}));
  CHECK(manifest["command"] == "segment");
  const auto b = run({"segment", mesh.string(), "--k", "2", "--shdf-rays", "24", "-o", (dir / "b").string()});
  REQUIRE(b.code == cli::kOk);
  CHECK(testing::read_file(dir / "a" / "labels.json") == testing::read_file(dir / "b" / "labels.json"));
  CHECK(run({"segment", mesh.string(), "--k", "0", "-o", (dir / "c").string()}).code == cli::kInput);
}

TEST_CASE("param base on a flat grid") {
  testing::TempDir dir;
  const auto mesh = dir / "grid.obj";
  save_obj(make_grid(10, 10), std::nullopt, mesh);
  const auto r = run(fast({"param", mesh.string(), "-o", (dir / "out").string()}));
  REQUIRE(r.code == cli::kOk);
  const auto data = read_obj(dir / "out" / "out.obj");
  REQUIRE(data.texture.has_value());
  Eigen::AlignedBox2d box;
  for (const auto& u : data.texture->texcoords) box.extend(u);
  const double side = box.sizes().maxCoeff();
  CHECK(side > 0);
  CHECK(box.sizes().prod() / (side * side) > 0.1);
  const auto seams = load(dir / "out" / "seams.json");
  CHECK(seams["soft"].size() == 121);
  std::istringstream trace(testing::read_file(dir / "out" / "losses.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(trace, line);) ++lines;
  CHECK(lines == 20);
}

TEST_CASE("config precedence and validation") {
  testing::TempDir dir;
  const auto mesh = dir / "grid.obj";
  save_obj(make_grid(3, 3), std::nullopt, mesh);
  const auto cfg = dir.write("cfg.json", R"({"T": 7, "lr": 0.002, "hidden": 8, "feature": 4, "log_every": 2})");
  REQUIRE(run({"param", mesh.string(), "--config", cfg.string(), "--iters", "5", "-o", (dir / "o").string()}).code ==
          cli::kOk);
  const auto m = load(dir / "o" / "manifest.json");
  CHECK(m["config"]["T"] == 5);
  CHECK(m["config"]["lr"] == 0.002);
  CHECK(m["config"]["log_every"] == 2);
  const auto bad = dir.write("bad.json", R"({"iterations": 3})");
  CHECK(run({"param", mesh.string(), "--config", bad.string()}).code == cli::kInput);
  CHECK(run(fast({"param", mesh.string(), "--pipeline", "fancy", "-o", (dir / "p").string()})).code == cli::kInput);
  CHECK(run(fast({"param", mesh.string(), "--pad", "0.5", "-o", (dir / "p").string()})).code == cli::kInput);
}

TEST_CASE("thread count from the environment") {
  testing::TempDir dir;
  const auto mesh = dir / "grid.obj";
  save_obj(make_grid(3, 3), std::nullopt, mesh);
  ::setenv("UVFORGE_THREADS", "3", 1);
  const auto r = run({"param", mesh.string(), "--iters", "2", "--hidden", "8", "--feature", "4", "-o",
                      (dir / "o").string()});
  ::unsetenv("UVFORGE_THREADS");
  REQUIRE(r.code == cli::kOk);
  CHECK(load(dir / "o" / "manifest.json")["threads"] == 3);
}

TEST_CASE("param visibility caches AO beside the input") {
  testing::TempDir dir;
  const auto mesh = dir / "pocket.obj";
  save_obj(make_hemisphere_with_pocket(0.3).mesh, std::nullopt, mesh);
  auto args = fast({"param", mesh.string(), "--pipeline", "visibility", "--ao-samples", "16", "-o",
                    (dir / "v").string()});
  REQUIRE(run(args).code == cli::kOk);
  std::size_t sidecars = 0;
  for (const auto& name : files_in(dir.path())) sidecars += std::regex_search(name, std::regex(R"(\.ao-.*\.json$)"));
  CHECK(sidecars == 1);
  const auto first = testing::read_file(dir / "v" / "out.obj");
  REQUIRE(run(args).code == cli::kOk);
  CHECK(testing::read_file(dir / "v" / "out.obj") == first);
  std::istringstream trace(testing::read_file(dir / "v" / "losses.jsonl"));
  std::string line;
  std::getline(trace, line);
  CHECK(json::parse(line)["ao"].is_number());
}

TEST_CASE("param semantic with given labels packs into grid cells") {
  testing::TempDir dir;
  const Mesh m = make_icosphere(2);
  const auto mesh = dir / "sphere.obj";
  save_obj(m, std::nullopt, mesh);
  std::vector<int> labels;
  for (std::size_t f = 0; f < m.num_faces(); ++f) {
    const Vec3 c = m.face_centroid(f);
    labels.push_back((c.x() > 0 ? 1 : 0) + (c.y() > 0 ? 2 : 0));
  }
  const auto lf = dir.write("labels.json", json{{"labels", labels}}.dump());
  REQUIRE(run(fast({"param", mesh.string(), "--pipeline", "semantic", "--labels", lf.string(), "-o",
                    (dir / "s").string()}))
              .code == cli::kOk);
  const auto data = read_obj(dir / "s" / "out.obj");
  REQUIRE(data.texture.has_value());
  const auto used = load(dir / "s" / "labels.json")["labels"].get<std::vector<int>>();
  for (std::size_t f = 0; f < m.num_faces(); ++f) {
    const int k = used[f];
    const double r = k / 2, c = k % 2;
    for (Index t : data.texture->faces[f]) {
      const Vec2 u = data.texture->texcoords[t];
      CHECK(u.x() >= c / 2);
      CHECK(u.x() <= (c + 1) / 2);
      CHECK(u.y() >= r / 2);
      CHECK(u.y() <= (r + 1) / 2);
    }
  }
  CHECK(fs::exists(dir / "s" / "losses.part3.jsonl"));
}

TEST_CASE("training divergence exits with the checkpoint path") {
  testing::TempDir dir;
  const auto mesh = dir / "grid.obj";
  save_obj(make_grid(3, 3), std::nullopt, mesh);
  const auto r = run(fast({"param", mesh.string(), "--lr", "1e30", "-o", (dir / "d").string()}));
  CHECK(r.code == cli::kTraining);
  CHECK(r.err.find("checkpoint: ") != std::string::npos);
  CHECK(fs::exists(dir / "d" / "last-good.json"));
}

TEST_CASE("eval") {
  testing::TempDir dir;
  const auto mesh = dir / "cyl.obj";
  write_seamed_cylinder(mesh, 64, 12);
  const std::size_t faces = 2 * 64 * 11;
  std::vector<int> labels(faces);
  for (std::size_t f = 0; f < faces; ++f) labels[f] = f % 128 < 64 ? 0 : 1;
  const auto lf = dir.write("labels.json", json{{"labels", labels}}.dump());
  const auto r = run({"eval", mesh.string(), "--ao-samples", "16", "--labels", lf.string(), "--ref-labels", lf.string(),
                      "-o", (dir / "e").string()});
  REQUIRE(r.code == cli::kOk);
  const auto report = load(dir / "e" / "report.json");
  for (const char* key : {"conformality", "equiareality", "mean_seam_ao", "seam_vertex_count", "vertex_count",
                          "histogram", "hamming", "rand_index"}) {
    CHECK(report.contains(key));
  }
  CHECK(report["conformality"].get<double>() >= 0.99);
  CHECK(report["hamming"] == 0.0);
  CHECK(report["rand_index"] == 1.0);
  CHECK(report["seam_vertex_count"] == 12);
  CHECK(fs::exists(dir / "e" / "histogram.csv"));

  SUBCASE("missing vt") {
    const auto plain = dir / "plain.obj";
    save_obj(make_grid(2, 2), std::nullopt, plain);
    CHECK(run({"eval", plain.string(), "-o", (dir / "x").string()}).code == cli::kEvaluation);
    CHECK(run({"export", plain.string(), "--kind", "checker", "-o", (dir / "x").string()}).code == cli::kEvaluation);
  }
  SUBCASE("ref labels need labels") {
    CHECK(run({"eval", mesh.string(), "--ao-samples", "16", "--ref-labels", lf.string(), "-o", (dir / "y").string()})
              .code == cli::kInput);
  }
}

TEST_CASE("export") {
  testing::TempDir dir;
  const auto mesh = dir / "cyl.obj";
  write_seamed_cylinder(mesh, 16, 4);
  const std::size_t faces = 2 * 16 * 3;
  SUBCASE("atlas svg") {
    REQUIRE(run({"export", mesh.string(), "--kind", "atlas-svg", "-o", (dir / "a").string()}).code == cli::kOk);
    const auto svg = testing::read_file(dir / "a" / "atlas.svg");
    CHECK(svg.find("viewBox=\"0 0 1024 1024\"") != std::string::npos);
    const std::regex poly(R"re(<polygon points="([^"]*)")re");
    std::size_t count = 0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator(); ++it) {
      ++count;
      std::istringstream pts((*it)[1].str());
      for (std::string p; pts >> p;) {
        const auto comma = p.find(',');
        const double x = std::stod(p.substr(0, comma)), y = std::stod(p.substr(comma + 1));
        CHECK((x >= 0 && x <= 1024 && y >= 0 && y <= 1024));
      }
    }
    CHECK(count == faces);
  }
  SUBCASE("checker") {
    REQUIRE(run({"export", mesh.string(), "--kind", "checker", "-o", (dir / "c").string()}).code == cli::kOk);
    CHECK(testing::read_file(dir / "c" / "checker.obj").find("mtllib checker.mtl") != std::string::npos);
    CHECK(testing::read_file(dir / "c" / "checker.mtl").find("map_Kd checker.png") != std::string::npos);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    REQUIRE(png_image_begin_read_from_file(&image, (dir / "c" / "checker.png").string().c_str()));
    CHECK(image.width == 512);
    CHECK(image.height == 512);
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> px(PNG_IMAGE_SIZE(image));
    REQUIRE(png_image_finish_read(&image, nullptr, px.data(), 0, nullptr));
    std::set<std::array<unsigned char, 3>> colors;
    for (std::size_t i = 0; i < px.size(); i += 3) colors.insert({px[i], px[i + 1], px[i + 2]});
    CHECK(colors.size() == 2);
    // 64-pixel cells alternate.
    CHECK(px[0] != px[64 * 3]);
    CHECK(px[0] == px[128 * 3]);
  }
  CHECK(run({"export", mesh.string(), "--kind", "gif", "-o", (dir / "g").string()}).code == cli::kInput);
}

TEST_CASE("replay reproduces every command bitwise") {
  testing::TempDir dir;
  const auto mesh = dir / "dumbbell.obj";
  save_obj(make_dumbbell(0.3).mesh, std::nullopt, mesh);
  const auto out = [&](const std::string& s) { return (dir / s).string(); };
  REQUIRE(run({"segment", mesh.string(), "--k", "2", "--shdf-rays", "16", "-o", out("seg")}).code == cli::kOk);
  REQUIRE(run(fast({"param", mesh.string(), "--pipeline", "semantic_visibility", "--k", "2", "--shdf-rays", "16",
                    "--ao-samples", "16", "-o", out("par")}))
              .code == cli::kOk);
  const auto obj = (dir / "par" / "out.obj").string();
  REQUIRE(run({"eval", obj, "--ao-samples", "16", "-o", out("ev")}).code == cli::kOk);
  REQUIRE(run({"export", obj, "--kind", "atlas-svg", "-o", out("ex")}).code == cli::kOk);
  for (const std::string name : {"seg", "par", "ev", "ex"}) {
    CAPTURE(name);
    const auto again = name + "_replay";
    REQUIRE(run({"replay", (dir / name / "manifest.json").string(), "-o", out(again)}).code == cli::kOk);
    const auto files = load(dir / name / "manifest.json")["outputs"].get<std::vector<std::string>>();
    // Sidecar caches written by later commands reading par/out.obj are not outputs.
    auto outputs_only = [](const std::filesystem::path& d) {
      std::vector<std::string> names;
      for (const auto& n : files_in(d)) {
        if (std::string(n).find(".ao-") == std::string::npos && std::string(n).find(".shdf-") == std::string::npos) {
          names.emplace_back(n);
        }
      }
      return names;
    };
    CHECK(outputs_only(dir / name) == outputs_only(dir / again));
    for (const auto& f : files) {
      CAPTURE(f);
      CHECK(testing::read_file(dir / name / f) == testing::read_file(dir / again / f));
    }
  }
}
