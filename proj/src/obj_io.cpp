#include "uvforge/obj_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <string_view>

namespace uvforge {
namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

struct LineParser {
  const std::string& path;
  std::size_t line;

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path, line, what); }

  double number(std::string_view tok) const {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("invalid number '" + std::string(tok) + "'");
    return v;
  }

  // Resolves a 1-based or negative OBJ index against `count` records.
  Index index(std::string_view tok, std::size_t count, const char* kind) const {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || v == 0) fail(std::string("invalid ") + kind + " index '" + std::string(tok) + "'");
    const long long resolved = v > 0 ? v - 1 : static_cast<long long>(count) + v;
    if (resolved < 0 || resolved >= static_cast<long long>(count)) fail(std::string(kind) + " index " + std::to_string(v) + " out of range");
    return static_cast<Index>(resolved);
  }
};

struct Corner {
  Index v;
  std::optional<Index> vt;
  std::optional<Index> vn;
};

}  // namespace

ObjData read_obj(const std::filesystem::path& path, const ObjReadOptions& options) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  const std::string name = path.string();

  std::vector<Vec3> verts, vnormals;
  std::vector<Vec2> texcoords;
  std::vector<Face> faces, tex_faces, normal_faces;
  bool all_tex = true, all_normals = true;
  std::vector<std::string> warnings;
  std::size_t quads = 0;

  std::string raw;
  for (std::size_t lineno = 1; std::getline(in, raw); ++lineno) {
    std::string_view s(raw);
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    const auto tok = split_ws(s);
    if (tok.empty()) continue;
    const LineParser p{name, lineno};
    const std::string_view kw = tok[0];
    if (kw == "v") {
      if (tok.size() < 4) p.fail("vertex needs 3 coordinates");
      verts.emplace_back(p.number(tok[1]), p.number(tok[2]), p.number(tok[3]));
    } else if (kw == "vt") {
      if (tok.size() < 3) p.fail("texture coordinate needs 2 components");
      texcoords.emplace_back(p.number(tok[1]), p.number(tok[2]));
    } else if (kw == "vn") {
      if (tok.size() < 4) p.fail("normal needs 3 components");
      vnormals.emplace_back(p.number(tok[1]), p.number(tok[2]), p.number(tok[3]));
    } else if (kw == "f") {
      if (tok.size() < 4) p.fail("face needs at least 3 corners");
      if (tok.size() > 4 && !options.triangulate_quads) p.fail("polygon with " + std::to_string(tok.size() - 1) + " corners (triangles only)");
      std::vector<Corner> corners;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const std::string_view c = tok[k];
        const auto s1 = c.find('/');
        Corner corner{p.index(c.substr(0, s1), verts.size(), "vertex"), std::nullopt, std::nullopt};
        if (s1 != std::string_view::npos) {
          const std::string_view rest = c.substr(s1 + 1);
          const auto s2 = rest.find('/');
          const std::string_view t = rest.substr(0, s2);
          if (!t.empty()) corner.vt = p.index(t, texcoords.size(), "texcoord");
          if (s2 != std::string_view::npos) {
            const std::string_view n = rest.substr(s2 + 1);
            if (!n.empty()) corner.vn = p.index(n, vnormals.size(), "normal");
          }
        }
        corners.push_back(corner);
      }
      for (std::size_t a = 0; a < corners.size(); ++a) {
        for (std::size_t b = a + 1; b < corners.size(); ++b) {
          if (corners[a].v == corners[b].v) p.fail("degenerate face (repeated vertex index)");
        }
      }
      if (corners.size() > 3) ++quads;
      for (std::size_t k = 1; k + 1 < corners.size(); ++k) {
        const Corner& c0 = corners[0];
        const Corner& c1 = corners[k];
        const Corner& c2 = corners[k + 1];
        faces.push_back({c0.v, c1.v, c2.v});
        if (c0.vt && c1.vt && c2.vt) {
          tex_faces.push_back({*c0.vt, *c1.vt, *c2.vt});
        } else {
          all_tex = false;
        }
        if (c0.vn && c1.vn && c2.vn) {
          normal_faces.push_back({*c0.vn, *c1.vn, *c2.vn});
        } else {
          all_normals = false;
        }
      }
    }
    // Other records (o, g, s, usemtl, mtllib, ...) are ignored.
  }
  if (verts.empty()) throw InputError(name + ": no vertices");
  if (faces.empty()) throw InputError(name + ": no faces");
  if (quads > 0) warnings.push_back(std::to_string(quads) + " polygons fan-triangulated");

  std::optional<std::vector<Vec3>> normals;
  if (all_normals && !normal_faces.empty()) {
    std::vector<Vec3> per_vertex(verts.size(), Vec3::Zero());
    std::vector<char> seen(verts.size(), 0);
    for (std::size_t f = 0; f < faces.size(); ++f) {
      for (int k = 0; k < 3; ++k) {
        per_vertex[faces[f][k]] = vnormals[normal_faces[f][k]];
        seen[faces[f][k]] = 1;
      }
    }
    if (std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; })) normals = std::move(per_vertex);
  }

  std::map<std::array<Index, 2>, int> edge_count;
  for (const Face& t : faces) {
    for (int k = 0; k < 3; ++k) {
      const Index a = t[k], b = t[(k + 1) % 3];
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::size_t non_manifold = 0;
  for (const auto& [edge, n] : edge_count) non_manifold += n > 2;
  if (non_manifold > 0) warnings.push_back(std::to_string(non_manifold) + " non-manifold edges");

  ObjData out;
  out.mesh = Mesh(std::move(verts), std::move(faces), std::move(normals));
  for (const auto& w : out.mesh.warnings()) warnings.push_back(w);
  if (all_tex && !tex_faces.empty()) out.texture = ObjTexture{std::move(texcoords), std::move(tex_faces)};
  out.warnings = std::move(warnings);
  return out;
}

Mesh load_obj(const std::filesystem::path& path, const ObjReadOptions& options) {
  return read_obj(path, options).mesh;
}

namespace {

std::FILE* open_for_write(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw InputError("cannot write " + path.string());
  return f;
}

void close_checked(std::FILE* f, const std::filesystem::path& path) {
  const bool bad = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || bad) throw InputError("write failed: " + path.string());
}

void write_vertices(std::FILE* f, const Mesh& mesh) {
  for (const auto& v : mesh.vertices()) std::fprintf(f, "v %.6f %.6f %.6f\n", v.x(), v.y(), v.z());
}

}  // namespace

void save_obj(const Mesh& mesh, const std::optional<std::vector<Vec2>>& uv, const std::filesystem::path& path) {
  if (uv && uv->size() != mesh.num_vertices()) throw InputError("save_obj: uv count does not match vertex count");
  std::FILE* f = open_for_write(path);
  write_vertices(f, mesh);
  if (uv) {
    for (const auto& t : *uv) std::fprintf(f, "vt %.6f %.6f\n", t.x(), t.y());
    for (const Face& t : mesh.faces()) {
      std::fprintf(f, "f %u/%u %u/%u %u/%u\n", t[0] + 1, t[0] + 1, t[1] + 1, t[1] + 1, t[2] + 1, t[2] + 1);
    }
  } else {
    for (const Face& t : mesh.faces()) std::fprintf(f, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
  }
  close_checked(f, path);
}

void save_obj(const Mesh& mesh, const ObjTexture& texture, const std::filesystem::path& path, const std::string& mtllib,
              const std::string& material) {
  if (texture.faces.size() != mesh.num_faces()) throw InputError("save_obj: texture face count does not match mesh");
  for (const Face& t : texture.faces) {
    for (Index i : t) {
      if (i >= texture.texcoords.size()) throw InputError("save_obj: texcoord index out of range");
    }
  }
  std::FILE* f = open_for_write(path);
  if (!mtllib.empty()) std::fprintf(f, "mtllib %s\n", mtllib.c_str());
  write_vertices(f, mesh);
  for (const auto& t : texture.texcoords) std::fprintf(f, "vt %.6f %.6f\n", t.x(), t.y());
  if (!material.empty()) std::fprintf(f, "usemtl %s\n", material.c_str());
  for (std::size_t i = 0; i < mesh.num_faces(); ++i) {
    const Face& v = mesh.faces()[i];
    const Face& t = texture.faces[i];
    std::fprintf(f, "f %u/%u %u/%u %u/%u\n", v[0] + 1, t[0] + 1, v[1] + 1, t[1] + 1, v[2] + 1, t[2] + 1);
  }
  close_checked(f, path);
}

}  // namespace uvforge
