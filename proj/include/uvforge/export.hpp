#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uvforge/mesh.hpp"
#include "uvforge/metrics.hpp"
#include "uvforge/obj_io.hpp"

namespace uvforge::exporting {

using Rgb = std::array<unsigned char, 3>;

/// Viridis colormap, t clamped to [0,1].
[[nodiscard]] Rgb viridis(double t);

/// Distinct, stable color per label (golden-angle hue walk).
[[nodiscard]] Rgb label_color(int label);

/// ASCII PLY with per-vertex colors.
void write_ply_vertex_colors(const Mesh& mesh, std::span<const Rgb> colors, const std::filesystem::path& path);

/// ASCII PLY with per-face colors (vertex positions uncolored).
void write_ply_face_colors(const Mesh& mesh, std::span<const Rgb> colors, const std::filesystem::path& path);

inline constexpr int kSvgViewbox = 1024;

/// Every UV triangle as one <polygon> in a 1024x1024 viewbox, v pointing up.
/// `labels` (per face) selects fill colors; empty draws all faces alike.
[[nodiscard]] std::string atlas_svg(const metrics::CornerUV& uv, std::span<const int> labels = {});

/// Two-color checkerboard, size x size pixels with cells x cells squares.
void write_checker_png(const std::filesystem::path& path, int size = 512, int cells = 8);

/// OBJ copy referencing an MTL whose diffuse map is a checkerboard PNG.
/// Writes <stem>.obj, <stem>.mtl and <stem>.png; returns the three paths.
std::vector<std::filesystem::path> export_checker(const Mesh& mesh, const ObjTexture& texture,
                                                  const std::filesystem::path& stem);

}  // namespace uvforge::exporting
