#pragma once

// Triangle meshes, primitive tessellation, and Wavefront-style ASCII I/O.

#include "srli/core.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace srli {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  std::size_t face_count() const noexcept { return faces.size(); }

  std::array<Vec3, 3> triangle(std::size_t f) const {
    const auto& ix = faces[f];
    return {vertices[ix[0]], vertices[ix[1]], vertices[ix[2]]};
  }

  double face_area(std::size_t f) const {
    const auto [a, b, c] = triangle(f);
    return 0.5 * (b - a).cross(c - a).norm();
  }

  Vec3 face_centroid(std::size_t f) const {
    const auto [a, b, c] = triangle(f);
    return (a + b + c) / 3.0;
  }

  double surface_area() const {
    double total = 0.0;
    for (std::size_t f = 0; f < faces.size(); ++f) total += face_area(f);
    return total;
  }

  // Throws InvalidArgument when an index is out of range, a face is
  // degenerate, or the mesh is empty.
  void validate() const {
    if (faces.empty()) throw InvalidArgument("mesh has no faces");
    const int n = static_cast<int>(vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
      for (int ix : faces[f]) {
        if (ix < 0 || ix >= n)
          throw InvalidArgument("face " + std::to_string(f) + " references vertex " +
                                std::to_string(ix) + " of " + std::to_string(n));
      }
      if (!(face_area(f) > 0.0))
        throw InvalidArgument("face " + std::to_string(f) + " has zero area");
    }
  }
};

namespace detail {

inline void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw InvalidArgument(std::string(what) + " must be positive, got " + std::to_string(v));
}

// Appends a planar quad grid spanning origin + [0,1]*du + [0,1]*dv, wound so
// that du x dv is the outward normal.
inline void add_grid(TriMesh& m, const Vec3& origin, const Vec3& du, const Vec3& dv, int nu,
                     int nv) {
  const int base = static_cast<int>(m.vertices.size());
  for (int j = 0; j <= nv; ++j)
    for (int i = 0; i <= nu; ++i)
      m.vertices.push_back(origin + du * (double(i) / nu) + dv * (double(j) / nv));
  auto at = [&](int i, int j) { return base + j * (nu + 1) + i; };
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      m.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      m.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
}

}  // namespace detail

// Axis-aligned box centered at the origin. Each axis is split into the given
// number of segments, so the face count is 4 * (nx*ny + ny*nz + nx*nz).
inline TriMesh box_mesh(const Vec3& size, int nx = 1, int ny = 1, int nz = 1) {
  detail::require_positive(size.x(), "box size x");
  detail::require_positive(size.y(), "box size y");
  detail::require_positive(size.z(), "box size z");
  if (nx < 1 || ny < 1 || nz < 1) throw InvalidArgument("box subdivisions must be >= 1");
  const Vec3 h = size / 2.0;
  const Vec3 ex(size.x(), 0, 0), ey(0, size.y(), 0), ez(0, 0, size.z());
  TriMesh m;
  detail::add_grid(m, Vec3(-h.x(), -h.y(), -h.z()), ey, ex, ny, nx);  // -z
  detail::add_grid(m, Vec3(-h.x(), -h.y(), h.z()), ex, ey, nx, ny);   // +z
  detail::add_grid(m, Vec3(-h.x(), -h.y(), -h.z()), ex, ez, nx, nz);  // -y
  detail::add_grid(m, Vec3(-h.x(), h.y(), -h.z()), ez, ex, nz, nx);   // +y
  detail::add_grid(m, Vec3(-h.x(), -h.y(), -h.z()), ez, ey, nz, ny);  // -x
  detail::add_grid(m, Vec3(h.x(), -h.y(), -h.z()), ey, ez, ny, nz);   // +x
  return m;
}

// Closed cylinder along z, centered at the origin. Caps are fans around a
// center vertex: 4 * segments faces.
inline TriMesh cylinder_mesh(double radius, double height, int segments = 16) {
  detail::require_positive(radius, "cylinder radius");
  detail::require_positive(height, "cylinder height");
  if (segments < 8) throw InvalidArgument("cylinder needs at least 8 segments");
  TriMesh m;
  const double hz = height / 2.0;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * kPi * i / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), -hz);
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), hz);
  }
  const int bottom = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0, 0, -hz);
  const int top = bottom + 1;
  m.vertices.emplace_back(0, 0, hz);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    const int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    m.faces.push_back({b0, b1, t1});
    m.faces.push_back({b0, t1, t0});
    m.faces.push_back({bottom, b1, b0});
    m.faces.push_back({top, t0, t1});
  }
  return m;
}

// UV sphere with `segments` slices and segments/2 stacks:
// 2 * segments * (segments/2 - 1) faces.
inline TriMesh sphere_mesh(double radius, int segments = 16) {
  detail::require_positive(radius, "sphere radius");
  if (segments < 8) throw InvalidArgument("sphere needs at least 8 segments");
  const int stacks = segments / 2;
  TriMesh m;
  m.vertices.emplace_back(0, 0, radius);
  for (int s = 1; s < stacks; ++s) {
    const double phi = kPi * s / stacks;
    for (int i = 0; i < segments; ++i) {
      const double th = 2.0 * kPi * i / segments;
      m.vertices.emplace_back(radius * std::sin(phi) * std::cos(th),
                              radius * std::sin(phi) * std::sin(th), radius * std::cos(phi));
    }
  }
  const int south = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0, 0, -radius);
  auto ring = [&](int s, int i) { return 1 + (s - 1) * segments + (i % segments); };
  for (int i = 0; i < segments; ++i) m.faces.push_back({0, ring(1, i), ring(1, i + 1)});
  for (int s = 1; s < stacks - 1; ++s)
    for (int i = 0; i < segments; ++i) {
      m.faces.push_back({ring(s, i), ring(s + 1, i), ring(s + 1, i + 1)});
      m.faces.push_back({ring(s, i), ring(s + 1, i + 1), ring(s, i + 1)});
    }
  for (int i = 0; i < segments; ++i)
    m.faces.push_back({south, ring(stacks - 1, i + 1), ring(stacks - 1, i)});
  return m;
}

// Number of faces of the default inspection target.
inline constexpr int kSemanticTargetFaces = 60;

// Default inspection target: a cuboid whose vertical extent is split into 7
// bands and whose horizontal extents are not split. Each lateral side carries
// 14 faces and each cap 2, for 60 faces regardless of the dimensions.
inline TriMesh semantic_target_mesh(const Vec3& size) { return box_mesh(size, 1, 1, 7); }

// Wavefront-style ASCII: `v x y z` and `f i j k ...` lines. Polygons are
// fan-triangulated; `i/t/n` forms and negative indices are accepted.
inline TriMesh parse_obj(std::istream& in, const std::string& name = "<stream>") {
  TriMesh m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z))
        throw IoError(name, "line " + std::to_string(lineno) + ": malformed vertex");
      m.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int raw = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(raw < 0 ? static_cast<int>(m.vertices.size()) + raw : raw - 1);
      }
      if (idx.size() < 3)
        throw IoError(name, "line " + std::to_string(lineno) + ": face needs 3 indices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return m;
}

inline TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open mesh file");
  TriMesh m = parse_obj(in, path);
  m.validate();
  return m;
}

inline void write_obj(std::ostream& out, const TriMesh& m) {
  out.precision(17);
  for (const auto& v : m.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : m.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

inline void save_obj(const std::string& path, const TriMesh& m) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot write mesh file");
  write_obj(out, m);
  if (!out) throw IoError(path, "write failed");
}

}  // namespace srli
