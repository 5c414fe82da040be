#pragma once

// Quadrature rules on the reference tetrahedron and triangle, expressed in
// barycentric coordinates with weights normalized to sum to one (multiply by
// the element measure).

#include "otstab/common.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace otstab {

struct TetRule {
  std::vector<Eigen::Vector4d> bary;
  std::vector<double> weights;
  std::size_t size() const { return weights.size(); }
};

struct TriRule {
  std::vector<Eigen::Vector3d> bary;
  std::vector<double> weights;
  std::size_t size() const { return weights.size(); }
};

/// Gauss-Legendre nodes/weights on [0, 1] (Newton iteration on P_m).
inline void gauss_legendre_01(int m, std::vector<double>& nodes, std::vector<double>& weights) {
  if (m < 1) throw std::invalid_argument("gauss_legendre_01: m must be >= 1");
  nodes.assign(m, 0.0);
  weights.assign(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= m; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute derivative at the converged node.
    double p0 = 1.0, p1 = x;
    for (int j = 2; j <= m; ++j) {
      const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    dp = m * (x * p1 - p0) / (x * x - 1.0);
    nodes[i] = 0.5 * (1.0 - x);
    weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);  // 2/((1-x^2)P'^2) scaled by 1/2
  }
}

/// Collapsed (Duffy) tensor-product Gauss rule with m points per direction.
/// Exact for polynomials of total degree <= 2m - 3.
inline TetRule tet_rule_collapsed(int m) {
  std::vector<double> t, w;
  gauss_legendre_01(m, t, w);
  TetRule rule;
  rule.bary.reserve(m * m * m);
  rule.weights.reserve(m * m * m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      for (int l = 0; l < m; ++l) {
        const double a = t[i], b = t[j], c = t[l];
        const double x = a;
        const double y = b * (1.0 - a);
        const double z = c * (1.0 - a) * (1.0 - b);
        rule.bary.emplace_back(1.0 - x - y - z, x, y, z);
        rule.weights.push_back(6.0 * w[i] * w[j] * w[l] * (1.0 - a) * (1.0 - a) * (1.0 - b));
      }
    }
  }
  return rule;
}

/// Symmetric 4-point rule, exact for quadratics.
inline TetRule tet_rule_degree2() {
  constexpr double a = 0.5854101966249685;
  constexpr double b = 0.1381966011250105;
  TetRule rule;
  rule.bary = {Eigen::Vector4d(a, b, b, b), Eigen::Vector4d(b, a, b, b), Eigen::Vector4d(b, b, a, b),
               Eigen::Vector4d(b, b, b, a)};
  rule.weights = {0.25, 0.25, 0.25, 0.25};
  return rule;
}

/// 3-point interior rule on triangles, exact for quadratics.
inline TriRule tri_rule_degree2() {
  TriRule rule;
  rule.bary = {Eigen::Vector3d(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0), Eigen::Vector3d(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0),
               Eigen::Vector3d(1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0)};
  rule.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  return rule;
}

inline Point map_bary(const std::array<Point, 4>& v, const Eigen::Vector4d& l) {
  return l[0] * v[0] + l[1] * v[1] + l[2] * v[2] + l[3] * v[3];
}

inline Point map_bary(const std::array<Point, 3>& v, const Eigen::Vector3d& l) {
  return l[0] * v[0] + l[1] * v[1] + l[2] * v[2];
}

}  // namespace otstab
