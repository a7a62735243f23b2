#include "uvforge/export.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace uvforge::exporting {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw InputError("write failed: " + path.string());
}

Rgb from_unit(double r, double g, double b) {
  auto c = [](double x) { return static_cast<unsigned char>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); };
  return {c(r), c(g), c(b)};
}

void ply_header(std::ostream& out, const Mesh& mesh, bool vertex_color, bool face_color) {
  out.precision(9);
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.num_vertices()
      << "\nproperty float x\nproperty float y\nproperty float z\n";
  if (vertex_color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.num_faces() << "\nproperty list uchar int vertex_indices\n";
  if (face_color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
}

}  // namespace

Rgb viridis(double t) {
  // Nine samples of the matplotlib viridis map, linearly interpolated.
  static constexpr std::array<std::array<double, 3>, 9> kStops{{{0.267004, 0.004874, 0.329415},
                                                                 {0.282623, 0.140926, 0.457517},
                                                                 {0.253935, 0.265254, 0.529983},
                                                                 {0.206756, 0.371758, 0.553117},
                                                                 {0.163625, 0.471133, 0.558148},
                                                                 {0.127568, 0.566949, 0.550556},
                                                                 {0.134692, 0.658636, 0.517649},
                                                                 {0.266941, 0.748751, 0.440573},
                                                                 {0.993248, 0.906157, 0.143936}}};
  if (!std::isfinite(t)) t = 0;
  const double x = std::clamp(t, 0.0, 1.0) * (kStops.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(x), kStops.size() - 2);
  const double f = x - double(i);
  const auto& a = kStops[i];
  const auto& b = kStops[i + 1];
  return from_unit(a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2]));
}

Rgb label_color(int label) {
  const double h = std::fmod(0.61803398874989485 * std::max(label, 0) + 0.1, 1.0) * 6.0;
  const double s = 0.65, v = 0.92;
  const double c = v * s, x = c * (1 - std::abs(std::fmod(h, 2.0) - 1)), m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  return from_unit(r + m, g + m, b + m);
}

void write_ply_vertex_colors(const Mesh& mesh, std::span<const Rgb> colors, const std::filesystem::path& path) {
  if (colors.size() != mesh.num_vertices()) throw InputError("PLY: one color per vertex required");
  auto out = open_out(path);
  ply_header(out, mesh, true, false);
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    const auto& v = mesh.vertices()[i];
    out << v.x() << ' ' << v.y() << ' ' << v.z() << ' ' << int(colors[i][0]) << ' ' << int(colors[i][1]) << ' '
        << int(colors[i][2]) << '\n';
  }
  for (const auto& f : mesh.faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  finish(out, path);
}

void write_ply_face_colors(const Mesh& mesh, std::span<const Rgb> colors, const std::filesystem::path& path) {
  if (colors.size() != mesh.num_faces()) throw InputError("PLY: one color per face required");
  auto out = open_out(path);
  ply_header(out, mesh, false, true);
  for (const auto& v : mesh.vertices()) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (std::size_t i = 0; i < mesh.num_faces(); ++i) {
    const auto& f = mesh.faces()[i];
    out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << ' ' << int(colors[i][0]) << ' ' << int(colors[i][1]) << ' '
        << int(colors[i][2]) << '\n';
  }
  finish(out, path);
}

std::string atlas_svg(const metrics::CornerUV& uv, std::span<const int> labels) {
  if (!labels.empty() && labels.size() != uv.size()) throw InputError("atlas SVG: one label per face required");
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kSvgViewbox << ' ' << kSvgViewbox
      << "\" width=\"" << kSvgViewbox << "\" height=\"" << kSvgViewbox << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << kSvgViewbox << "\" height=\"" << kSvgViewbox
      << "\" fill=\"white\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (std::size_t f = 0; f < uv.size(); ++f) {
    const Rgb c = labels.empty() ? Rgb{200, 200, 200} : label_color(labels[f]);
    out << "<polygon points=\"";
    for (int k = 0; k < 3; ++k) {
      out << (k ? " " : "") << uv[f][k].x() * kSvgViewbox << ',' << (1.0 - uv[f][k].y()) * kSvgViewbox;
    }
    out << "\" fill=\"rgb(" << int(c[0]) << ',' << int(c[1]) << ',' << int(c[2])
        << ")\" stroke=\"black\" stroke-width=\"0.25\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_checker_png(const std::filesystem::path& path, int size, int cells) {
  if (size < 1 || cells < 1 || size % cells != 0) throw InputError("checker: size must be a positive multiple of cells");
  const int cell = size / cells;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const unsigned char v = ((x / cell + y / cell) % 2 == 0) ? 235 : 40;
      auto* p = &pixels[(static_cast<std::size_t>(y) * size + x) * 3];
      p[0] = p[1] = p[2] = v;
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(size);
  image.height = static_cast<png_uint_32>(size);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw InputError("cannot write " + path.string() + ": " + msg);
  }
}

std::vector<std::filesystem::path> export_checker(const Mesh& mesh, const ObjTexture& texture,
                                                  const std::filesystem::path& stem) {
  auto with = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  const auto obj = with(".obj"), mtl = with(".mtl"), png = with(".png");
  write_checker_png(png);
  {
    auto out = open_out(mtl);
    out << "newmtl checker\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nmap_Kd " << png.filename().string() << '\n';
    finish(out, mtl);
  }
  save_obj(mesh, texture, obj, mtl.filename().string(), "checker");
  return {obj, mtl, png};
}

}  // namespace uvforge::exporting
