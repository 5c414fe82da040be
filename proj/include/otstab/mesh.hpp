#pragma once

// First-order tetrahedral meshes: generators, boundary structure, exact
// point-to-boundary distance, exterior non-tangential frames and a plain-text
// exchange format.

#include "otstab/common.hpp"
#include "otstab/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace otstab {

struct Mesh {
  std::vector<Point> vertices;
  std::vector<std::array<int, 4>> tets;
  /// Boundary triangles, counter-clockwise seen from outside.
  std::vector<std::array<int, 3>> boundary_faces;
  /// Sorted, unique.
  std::vector<int> boundary_vertices;
  /// Maximum element diameter.
  double h = 0.0;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_tets() const { return tets.size(); }

  std::array<Point, 4> tet_points(std::size_t t) const {
    const auto& c = tets[t];
    return {vertices[c[0]], vertices[c[1]], vertices[c[2]], vertices[c[3]]};
  }

  std::array<Point, 3> face_points(std::size_t f) const {
    const auto& c = boundary_faces[f];
    return {vertices[c[0]], vertices[c[1]], vertices[c[2]]};
  }
};

inline double signed_volume(const Point& a, const Point& b, const Point& c, const Point& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

inline double tet_volume(const Mesh& mesh, std::size_t t) {
  const auto p = mesh.tet_points(t);
  return signed_volume(p[0], p[1], p[2], p[3]);
}

inline double tet_diameter(const std::array<Point, 4>& p) {
  double d = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) d = std::max(d, (p[i] - p[j]).norm());
  return d;
}

namespace detail {

inline std::array<int, 3> sorted3(int a, int b, int c) {
  std::array<int, 3> s{a, b, c};
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace detail

/// Orients every tet positively, extracts the outward boundary and computes h.
inline Mesh finalize_mesh(std::vector<Point> vertices, std::vector<std::array<int, 4>> tets) {
  Mesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.tets = std::move(tets);
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    auto& c = mesh.tets[t];
    for (int idx : c) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= mesh.vertices.size())
        throw ValidationError("tet " + std::to_string(t) + " references vertex " + std::to_string(idx));
    }
    const double vol = tet_volume(mesh, t);
    if (vol == 0.0) throw ValidationError("degenerate tet " + std::to_string(t));
    if (vol < 0.0) std::swap(c[2], c[3]);
  }

  // A face is on the boundary iff exactly one tet owns it.
  std::map<std::array<int, 3>, std::pair<int, std::array<int, 3>>> faces;
  static constexpr int kFace[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
  for (const auto& c : mesh.tets) {
    for (const auto& f : kFace) {
      const std::array<int, 3> oriented{c[f[0]], c[f[1]], c[f[2]]};
      auto key = detail::sorted3(oriented[0], oriented[1], oriented[2]);
      auto [it, inserted] = faces.try_emplace(key, 1, oriented);
      if (!inserted) ++it->second.first;
    }
  }
  std::vector<int> flags(mesh.vertices.size(), 0);
  for (const auto& [key, entry] : faces) {
    if (entry.first == 1) {
      mesh.boundary_faces.push_back(entry.second);
      for (int v : key) flags[v] = 1;
    }
  }
  for (std::size_t v = 0; v < flags.size(); ++v)
    if (flags[v]) mesh.boundary_vertices.push_back(static_cast<int>(v));

  for (std::size_t t = 0; t < mesh.tets.size(); ++t) mesh.h = std::max(mesh.h, tet_diameter(mesh.tet_points(t)));
  return mesh;
}

/// Uniform mesh of the unit cube, six tets per sub-cube sharing the main diagonal.
inline Mesh build_cube_mesh(int divisions) {
  if (divisions < 1) throw std::invalid_argument("build_cube_mesh: divisions must be >= 1");
  const int n = divisions;
  const int np = n + 1;
  std::vector<Point> vertices;
  vertices.reserve(static_cast<std::size_t>(np) * np * np);
  for (int iz = 0; iz <= n; ++iz)
    for (int iy = 0; iy <= n; ++iy)
      for (int ix = 0; ix <= n; ++ix)
        vertices.emplace_back(static_cast<double>(ix) / n, static_cast<double>(iy) / n, static_cast<double>(iz) / n);

  std::vector<std::array<int, 4>> tets;
  tets.reserve(6 * static_cast<std::size_t>(n) * n * n);
  for (int iz = 0; iz < n; ++iz) {
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const int v0 = iz * np * np + iy * np + ix;
        const int v1 = v0 + 1;
        const int v2 = v0 + np;
        const int v3 = v1 + np;
        const int v4 = v0 + np * np;
        const int v5 = v1 + np * np;
        const int v6 = v2 + np * np;
        const int v7 = v3 + np * np;
        tets.push_back({v0, v1, v3, v7});
        tets.push_back({v0, v1, v7, v5});
        tets.push_back({v0, v5, v7, v4});
        tets.push_back({v0, v3, v2, v7});
        tets.push_back({v0, v6, v4, v7});
        tets.push_back({v0, v2, v6, v7});
      }
    }
  }
  return finalize_mesh(std::move(vertices), std::move(tets));
}

/// Spherical shell r_inner <= |x - center| <= r_outer. Vertices lie exactly on
/// concentric spheres (cubed-sphere angular grid, geometric radial grading);
/// each triangular prism is split into three tets by the global-index rule so
/// neighbouring prisms agree on their shared diagonals.
inline Mesh build_shell_mesh(double r_inner, double r_outer, int angular, int radial,
                             const Point& center = Point::Zero()) {
  if (!(r_inner > 0.0 && r_outer > r_inner) || angular < 1 || radial < 1)
    throw std::invalid_argument("build_shell_mesh: need 0 < r_inner < r_outer, angular >= 1, radial >= 1");
  const int N = angular;
  std::map<std::array<int, 3>, int> index;
  std::vector<Point> dirs;
  auto surface_index = [&](int i, int j, int k) {
    auto [it, inserted] = index.try_emplace({i, j, k}, static_cast<int>(dirs.size()));
    if (inserted) {
      // Equi-angular cubed-sphere mapping.
      auto warp = [&](int a) { return std::tan(std::numbers::pi / 4.0 * (2.0 * a / N - 1.0)); };
      dirs.push_back(Point(warp(i), warp(j), warp(k)).normalized());
    }
    return it->second;
  };

  // Surface quads of the lattice cube [0,N]^3, each split into two triangles.
  std::vector<std::array<int, 3>> tris;
  for (int axis = 0; axis < 3; ++axis) {
    for (int side : {0, N}) {
      for (int a = 0; a < N; ++a) {
        for (int b = 0; b < N; ++b) {
          auto lattice = [&](int u, int v) {
            std::array<int, 3> p{};
            p[axis] = side;
            p[(axis + 1) % 3] = u;
            p[(axis + 2) % 3] = v;
            return surface_index(p[0], p[1], p[2]);
          };
          const int q00 = lattice(a, b), q10 = lattice(a + 1, b), q01 = lattice(a, b + 1), q11 = lattice(a + 1, b + 1);
          tris.push_back({q00, q10, q11});
          tris.push_back({q00, q11, q01});
        }
      }
    }
  }

  const int S = static_cast<int>(dirs.size());
  std::vector<Point> vertices;
  vertices.reserve(static_cast<std::size_t>(S) * (radial + 1));
  const double ratio = std::pow(r_outer / r_inner, 1.0 / radial);
  for (int l = 0; l <= radial; ++l) {
    const double r = (l == radial) ? r_outer : r_inner * std::pow(ratio, l);
    for (const auto& d : dirs) vertices.push_back(center + r * d);
  }

  std::vector<std::array<int, 4>> tets;
  tets.reserve(tris.size() * radial * 3);
  for (int l = 0; l < radial; ++l) {
    for (auto tri : tris) {
      std::sort(tri.begin(), tri.end());
      const int b0 = l * S + tri[0], b1 = l * S + tri[1], b2 = l * S + tri[2];
      const int t0 = b0 + S, t1 = b1 + S, t2 = b2 + S;
      tets.push_back({b0, b1, b2, t2});
      tets.push_back({b0, b1, t1, t2});
      tets.push_back({b0, t0, t1, t2});
    }
  }
  return finalize_mesh(std::move(vertices), std::move(tets));
}

struct MeshCheck {
  bool positive_volumes = true;
  bool closed_surface = true;
  bool conforming = true;
  double total_volume = 0.0;
  bool ok() const { return positive_volumes && closed_surface && conforming; }
};

/// Verifies orientation, that the boundary is a closed surface (every boundary
/// edge shared by exactly two boundary faces) and that no face has more than
/// two owning tets.
inline MeshCheck check_mesh(const Mesh& mesh) {
  MeshCheck out;
  std::map<std::array<int, 3>, int> faces;
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const double vol = tet_volume(mesh, t);
    out.total_volume += vol;
    if (!(vol > 0.0)) out.positive_volumes = false;
    const auto& c = mesh.tets[t];
    for (int skip = 0; skip < 4; ++skip) {
      std::array<int, 3> f{};
      int m = 0;
      for (int i = 0; i < 4; ++i)
        if (i != skip) f[m++] = c[i];
      ++faces[detail::sorted3(f[0], f[1], f[2])];
    }
  }
  std::size_t singles = 0;
  for (const auto& [key, count] : faces) {
    if (count > 2) out.conforming = false;
    if (count == 1) ++singles;
  }
  if (singles != mesh.boundary_faces.size()) out.conforming = false;

  std::map<std::pair<int, int>, int> edges;
  for (const auto& f : mesh.boundary_faces) {
    for (int i = 0; i < 3; ++i) {
      int a = f[i], b = f[(i + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  }
  for (const auto& [e, count] : edges)
    if (count != 2) out.closed_surface = false;
  return out;
}

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
inline Point closest_point_on_triangle(const Point& p, const Point& a, const Point& b, const Point& c) {
  const Point ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Point bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Point cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Exact distance from p to the boundary triangulation.
inline double boundary_distance(const Mesh& mesh, const Point& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
    const auto v = mesh.face_points(f);
    best = std::min(best, (p - closest_point_on_triangle(p, v[0], v[1], v[2])).norm());
  }
  return best;
}

/// Point-in-closed-mesh test by barycentric search; tol widens each tet.
inline bool mesh_contains(const Mesh& mesh, const Point& p, double tol = 1e-12) {
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto v = mesh.tet_points(t);
    Eigen::Matrix3d J;
    J.col(0) = v[1] - v[0];
    J.col(1) = v[2] - v[0];
    J.col(2) = v[3] - v[0];
    const Eigen::Vector3d l = J.partialPivLu().solve(p - v[0]);
    if (l.minCoeff() >= -tol && l.sum() <= 1.0 + tol) return true;
  }
  return false;
}

inline Point face_normal(const Mesh& mesh, std::size_t f) {
  const auto v = mesh.face_points(f);
  return (v[1] - v[0]).cross(v[2] - v[0]).normalized();
}

/// Exterior frame at a boundary point: x0, the unit field nu_tilde, the offset
/// range (0, tau0] and the sampled comparability constant C_tau in
/// C_tau * tau <= dist(x0 + tau * nu_tilde, boundary) <= tau.
struct BoundaryFrame {
  Point x0 = Point::Zero();
  Point nu_tilde = Point::UnitZ();
  double tau0 = 0.0;
  double C_tau = 0.0;
};

/// Normalized sum of the distinct plane normals of boundary faces touching x0.
/// On a flat face this is the outward normal; at edges and corners it bisects.
inline Point exterior_direction(const Mesh& mesh, const Point& x0, double tol = 1e-10) {
  std::vector<Point> normals;
  for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
    const auto v = mesh.face_points(f);
    if ((x0 - closest_point_on_triangle(x0, v[0], v[1], v[2])).norm() > tol) continue;
    const Point n = face_normal(mesh, f);
    const bool seen = std::any_of(normals.begin(), normals.end(), [&](const Point& m) { return m.dot(n) > 1.0 - 1e-10; });
    if (!seen) normals.push_back(n);
  }
  if (normals.empty()) throw ValidationError("exterior_direction: " + format_point(x0) + " is not on the boundary");
  Point sum = Point::Zero();
  for (const auto& n : normals) sum += n;
  if (sum.norm() < 1e-12) throw ValidationError("exterior_direction: normals cancel at " + format_point(x0));
  return sum.normalized();
}

inline BoundaryFrame make_boundary_frame(const Mesh& mesh, const Point& x0, double tau0, int samples = 16) {
  if (!(tau0 > 0.0)) throw std::invalid_argument("make_boundary_frame: tau0 must be positive");
  BoundaryFrame frame;
  frame.x0 = x0;
  frame.nu_tilde = exterior_direction(mesh, x0);
  frame.tau0 = tau0;
  frame.C_tau = 1.0;
  for (int i = 0; i < samples; ++i) {
    const double tau = tau0 * std::pow(0.5, i);
    const Point z = x0 + tau * frame.nu_tilde;
    if (mesh_contains(mesh, z, 0.0))
      throw ValidationError("make_boundary_frame: offset point " + format_point(z) + " lies inside the domain");
    frame.C_tau = std::min(frame.C_tau, boundary_distance(mesh, z) / tau);
  }
  return frame;
}

/// z_tau = x0 + tau * nu_tilde for 0 < tau <= tau0.
inline Point offset_point(const BoundaryFrame& frame, double tau) {
  if (!(tau > 0.0 && tau <= frame.tau0))
    throw std::out_of_range("offset_point: tau = " + format_double(tau) + " outside (0, " + format_double(frame.tau0) + "]");
  return frame.x0 + tau * frame.nu_tilde;
}

/// Evaluation points on the boundary: boundary vertices followed by the
/// 3-point interior rule on every boundary face.
inline std::vector<Point> boundary_sample_points(const Mesh& mesh) {
  std::vector<Point> pts;
  const auto rule = tri_rule_degree2();
  pts.reserve(mesh.boundary_vertices.size() + rule.size() * mesh.boundary_faces.size());
  for (int v : mesh.boundary_vertices) pts.push_back(mesh.vertices[v]);
  for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
    const auto v = mesh.face_points(f);
    for (const auto& l : rule.bary) pts.push_back(map_bary(v, l));
  }
  return pts;
}

/// Mesh vertices followed by the 4-point rule in every tet.
inline std::vector<Point> volume_sample_points(const Mesh& mesh) {
  std::vector<Point> pts(mesh.vertices);
  const auto rule = tet_rule_degree2();
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto v = mesh.tet_points(t);
    for (const auto& l : rule.bary) pts.push_back(map_bary(v, l));
  }
  return pts;
}

// Text format:
//   line 1:            "<dim> <num_vertices> <num_tets>"
//   next num_vertices: "<x> <y> <z>"        (%.17g)
//   next num_tets:     "<i0> <i1> <i2> <i3>" (0-based vertex indices)
inline void write_mesh(std::ostream& os, const Mesh& mesh) {
  os << 3 << ' ' << mesh.vertices.size() << ' ' << mesh.tets.size() << '\n';
  for (const auto& v : mesh.vertices) os << format_double(v[0]) << ' ' << format_double(v[1]) << ' ' << format_double(v[2]) << '\n';
  for (const auto& t : mesh.tets) os << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
}

inline Mesh read_mesh(std::istream& is) {
  int dim = 0;
  long nv = -1, nt = -1;
  if (!(is >> dim >> nv >> nt) || dim != 3 || nv < 0 || nt < 0) throw ValidationError("read_mesh: bad header");
  std::vector<Point> vertices(nv);
  for (auto& v : vertices)
    if (!(is >> v[0] >> v[1] >> v[2])) throw ValidationError("read_mesh: truncated vertex block");
  std::vector<std::array<int, 4>> tets(nt);
  for (auto& t : tets)
    if (!(is >> t[0] >> t[1] >> t[2] >> t[3])) throw ValidationError("read_mesh: truncated tet block");
  return finalize_mesh(std::move(vertices), std::move(tets));
}

inline std::string mesh_fingerprint(const Mesh& mesh) {
  std::ostringstream os;
  write_mesh(os, mesh);
  return hex64(fnv1a(os.str()));
}

}  // namespace otstab
