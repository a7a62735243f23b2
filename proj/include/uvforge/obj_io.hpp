#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uvforge/mesh.hpp"

namespace uvforge {

struct ObjReadOptions {
  bool triangulate_quads = true;  // false: polygons with >3 corners are a parse error
};

/// Per-corner texture coordinates: faces[f][k] indexes texcoords for the
/// k-th corner of mesh face f.
struct ObjTexture {
  std::vector<Vec2> texcoords;
  std::vector<Face> faces;
};

struct ObjData {
  Mesh mesh;
  std::optional<ObjTexture> texture;  // set when every face carries vt indices
  std::vector<std::string> warnings;
};

/// Parses the `v`/`vt`/`vn`/`f` subset. Indices may be negative (relative to
/// the records read so far). Normals are taken from `vn` only when every
/// vertex is referenced with one; otherwise they are recomputed.
[[nodiscard]] ObjData read_obj(const std::filesystem::path& path, const ObjReadOptions& options = {});
[[nodiscard]] Mesh load_obj(const std::filesystem::path& path, const ObjReadOptions& options = {});

/// Per-vertex UV: one `vt` per vertex, faces written as `f a/a/a`-style
/// `v/vt` pairs. Without uv only `v` and `f` records are written.
void save_obj(const Mesh& mesh, const std::optional<std::vector<Vec2>>& uv, const std::filesystem::path& path);

/// Per-corner UV (atlases with split seams). `mtllib` and `material` add the
/// matching records when non-empty.
void save_obj(const Mesh& mesh, const ObjTexture& texture, const std::filesystem::path& path,
              const std::string& mtllib = {}, const std::string& material = {});

}  // namespace uvforge
