#pragma once

// Quadrature of |x - z|^s over Omega intersected with (or minus) a ball around
// an exterior point z, with adaptive red refinement of tets that are cut by the
// sphere or that sit close to z relative to their size.

#include "otstab/common.hpp"
#include "otstab/mesh.hpp"
#include "otstab/quadrature.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace otstab {

enum class BallRegion { inside, outside, all };

struct MomentOptions {
  /// Gauss points per collapsed direction (exact to degree 2*order - 3).
  int order = 4;
  /// Refinement levels spent on tets cut by the sphere |x - z| = rho.
  int cut_depth = 4;
  /// Hard cap on refinement near z.
  int max_depth = 14;
  /// Refine while diam(T) > proximity * dist(z, T).
  double proximity = 0.5;
};

/// Splits a tet into eight by edge midpoints, cutting the inner octahedron
/// along its shortest diagonal.
inline std::array<std::array<Point, 4>, 8> red_refine(const std::array<Point, 4>& v) {
  const Point m01 = 0.5 * (v[0] + v[1]), m02 = 0.5 * (v[0] + v[2]), m03 = 0.5 * (v[0] + v[3]);
  const Point m12 = 0.5 * (v[1] + v[2]), m13 = 0.5 * (v[1] + v[3]), m23 = 0.5 * (v[2] + v[3]);
  std::array<std::array<Point, 4>, 8> out;
  out[0] = {v[0], m01, m02, m03};
  out[1] = {m01, v[1], m12, m13};
  out[2] = {m02, m12, v[2], m23};
  out[3] = {m03, m13, m23, v[3]};

  // Opposite pairs of the octahedron.
  const std::array<std::pair<Point, Point>, 3> pairs{{{m01, m23}, {m02, m13}, {m03, m12}}};
  int d = 0;
  double best = (pairs[0].first - pairs[0].second).squaredNorm();
  for (int i = 1; i < 3; ++i) {
    const double len = (pairs[i].first - pairs[i].second).squaredNorm();
    if (len < best) {
      best = len;
      d = i;
    }
  }
  const auto& [a, b] = pairs[d];
  const auto& [c, c2] = pairs[(d + 1) % 3];
  const auto& [e, e2] = pairs[(d + 2) % 3];
  out[4] = {a, b, c, e};
  out[5] = {a, b, e, c2};
  out[6] = {a, b, c2, e2};
  out[7] = {a, b, e2, c};
  return out;
}

/// Lower bound on dist(z, T) from the circumscribing ball about the centroid.
inline double distance_lower_bound(const std::array<Point, 4>& v, const Point& z) {
  const Point c = 0.25 * (v[0] + v[1] + v[2] + v[3]);
  double r = 0.0;
  for (const auto& p : v) r = std::max(r, (p - c).norm());
  return std::max(0.0, (z - c).norm() - r);
}

namespace detail {

inline double moment_on_tet(const std::array<Point, 4>& v, const Point& z, double s, double rho, BallRegion region,
                            const MomentOptions& opt, const TetRule& rule, int depth) {
  double max_dist = 0.0;
  for (const auto& p : v) max_dist = std::max(max_dist, (p - z).norm());
  const double dlb = distance_lower_bound(v, z);

  bool cut = false;
  if (region != BallRegion::all) {
    const bool fully_inside = max_dist <= rho;
    const bool fully_outside = dlb >= rho;
    if (region == BallRegion::inside && fully_outside) return 0.0;
    if (region == BallRegion::outside && fully_inside) return 0.0;
    cut = !fully_inside && !fully_outside;
  }
  const bool near = tet_diameter(v) > opt.proximity * dlb;
  if ((cut && depth < opt.cut_depth) || (near && depth < opt.max_depth)) {
    double sum = 0.0;
    for (const auto& child : red_refine(v)) sum += moment_on_tet(child, z, s, rho, region, opt, rule, depth + 1);
    return sum;
  }

  const double vol = std::abs(signed_volume(v[0], v[1], v[2], v[3]));
  double sum = 0.0;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const Point x = map_bary(v, rule.bary[q]);
    const double r = (x - z).norm();
    if (cut) {
      const bool in_ball = r < rho;
      if ((region == BallRegion::inside) != in_ball) continue;
    }
    sum += rule.weights[q] * std::pow(r, s);
  }
  return vol * sum;
}

}  // namespace detail

/// Approximates the integral of |x - z|^s over Omega ∩ B_rho(z) (inside),
/// Omega \ B_rho(z) (outside) or all of Omega. z must lie outside Omega.
inline double moment_integral(const Mesh& mesh, const Point& z, double s, double rho, BallRegion region,
                              const MomentOptions& opt = {}) {
  const TetRule rule = tet_rule_collapsed(opt.order);
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.num_tets(); ++t)
    total += detail::moment_on_tet(mesh.tet_points(t), z, s, rho, region, opt, rule, 0);
  return total;
}

}  // namespace otstab
