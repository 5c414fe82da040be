#pragma once

// Singular solutions u = H + w with the Green-type leading term
//   H(x) = (K0inv (x - z) . (x - z))^{(2-n)/2}   (principal branch)
// and a P1 correction w for singularities z placed outside the domain, plus
// log-log decay fits over dyadic shells.

#include "otstab/coefficient_model.hpp"
#include "otstab/common.hpp"
#include "otstab/complex_power.hpp"
#include "otstab/elliptic_solver.hpp"
#include "otstab/mesh.hpp"
#include "otstab/moment_integral.hpp"
#include "otstab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace otstab {

struct LeadingTerm {
  Eigen::MatrixXcd K0inv;
  Point z = Point::Zero();
  int n = 3;
};

/// K^{-1} frozen at z.
inline LeadingTerm make_leading_term(const DiffusionTensor& tensor, const Point& z) {
  return {tensor.at(z).Kinv, z, tensor.dim()};
}

inline Complex leading_base(const LeadingTerm& lead, const Point& x) {
  const Eigen::VectorXcd d = (x - lead.z).head(lead.n).cast<Complex>();
  if (d.squaredNorm() == 0.0) throw ValidationError("leading term evaluated at the singularity " + format_point(x));
  return (lead.K0inv * d).cwiseProduct(d).sum();
}

inline Complex eval_leading_term(const LeadingTerm& lead, const Point& x) {
  return principal_pow(leading_base(lead, x), 0.5 * (2 - lead.n));
}

/// (2 - n) (K0inv d . d)^{-n/2} K0inv d, d = x - z.
inline Eigen::Vector3cd eval_leading_gradient(const LeadingTerm& lead, const Point& x) {
  const Complex base = leading_base(lead, x);
  const Eigen::Vector3cd d = (x - lead.z).cast<Complex>();
  return (static_cast<double>(2 - lead.n) * principal_pow(base, -0.5 * lead.n)) * (lead.K0inv * d);
}

// ---------------------------------------------------------------------------
// Correction

struct CorrectionOptions {
  /// Gauss points per collapsed direction on each leaf tet.
  int order = 4;
  /// Refine while diam(T) > proximity * dist(z, T).
  double proximity = 0.5;
  int max_depth = 10;
};

struct CorrectionResult {
  FemSolution w;
  /// Load vector l_i = a(H, phi_i) restricted to the variable part of the operator.
  Eigen::VectorXcd load;
  /// Relative interior residual of A w + l, recomputed through apply_operator.
  double interior_residual = 0.0;
};

namespace detail {

using LoadBlock = Eigen::Matrix<Complex, 7, 1>;

// First three entries: int (K - K0) grad H; last four: int q H lambda_i.
inline LoadBlock correction_block(const std::array<Point, 4>& v, const Eigen::Matrix4d& to_bary, const Point& origin,
                                  const DiffusionTensor& tensor, const LeadingTerm& lead,
                                  const Eigen::Matrix3cd& K0, const TetRule& rule, const CorrectionOptions& opt,
                                  int depth) {
  const double dlb = distance_lower_bound(v, lead.z);
  if (tet_diameter(v) > opt.proximity * dlb && depth < opt.max_depth) {
    LoadBlock sum = LoadBlock::Zero();
    for (const auto& child : red_refine(v))
      sum += correction_block(child, to_bary, origin, tensor, lead, K0, rule, opt, depth + 1);
    return sum;
  }
  const double vol = std::abs(signed_volume(v[0], v[1], v[2], v[3]));
  LoadBlock sum = LoadBlock::Zero();
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const Point x = map_bary(v, rule.bary[q]);
    const TensorSample s = tensor.at(x);
    const Complex H = eval_leading_term(lead, x);
    const Eigen::Vector3cd grad = eval_leading_gradient(lead, x);
    const double w = vol * rule.weights[q];
    sum.head<3>() += w * ((s.K - K0) * grad);
    // Barycentric coordinates of x in the parent element.
    Eigen::Vector4d rel;
    rel << 1.0, x - origin;
    const Eigen::Vector4d lam = to_bary * rel;
    sum.tail<4>() += (w * s.q * H) * lam.cast<Complex>();
  }
  return sum;
}

}  // namespace detail

/// Solves A w = -l in the interior with w = 0 on the boundary, where
///   l_i = int (K - K0) grad H . grad phi_i + int q H phi_i.
/// The frozen part int K0 grad H . grad phi_i is dropped: div(K0 grad H) = 0
/// pointwise away from z, so it vanishes against every interior hat function.
inline CorrectionResult solve_correction(const DiscreteSystem& sys, const LeadingTerm& lead,
                                         const CorrectionOptions& opt = {}) {
  const Mesh& mesh = *sys.mesh;
  const DiffusionTensor& tensor = *sys.tensor;
  if (mesh_contains(mesh, lead.z, 1e-12) || boundary_distance(mesh, lead.z) <= 0.0)
    throw ValidationError("solve_correction: singularity " + format_point(lead.z) + " must lie outside the closed domain");
  if (lead.n != 3 || tensor.dim() != 3) throw ValidationError("solve_correction: discretization is three-dimensional");

  const Eigen::Matrix3cd K0 = lead.K0inv.inverse();
  const TetRule rule = tet_rule_collapsed(opt.order);
  CorrectionResult out;
  out.load = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
  for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
    const auto v = mesh.tet_points(t);
    const auto& c = mesh.tets[t];
    const TetGeometry geo = tet_geometry(v);
    // lambda(x) = to_bary * (1, x - v0).
    Eigen::Matrix4d to_bary = Eigen::Matrix4d::Zero();
    to_bary(0, 0) = 1.0;
    to_bary.block<4, 3>(0, 1) = geo.grad;
    const auto block = detail::correction_block(v, to_bary, v[0], tensor, lead, K0, rule, opt, 0);
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector3cd gi = geo.grad.row(i).transpose().cast<Complex>();
      out.load[c[i]] += block.head<3>().cwiseProduct(gi).sum() + block[3 + i];
    }
  }

  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(mesh.boundary_vertices.size()));
  const Eigen::VectorXcd rhs = -out.load;
  out.w = DirichletSolver(sys).solve(zero, &rhs);

  const Eigen::VectorXcd r = apply_operator(sys, out.w.u) + out.load;
  double rn = 0.0, ln = 0.0;
  for (int v : sys.interior_vertices) {
    rn += std::norm(r[v]);
    ln += std::norm(out.load[v]);
  }
  out.interior_residual = ln > 0.0 ? std::sqrt(rn / ln) : std::sqrt(rn);
  return out;
}

inline CorrectionResult solve_correction(const Mesh& mesh, const DiffusionTensor& tensor, const LeadingTerm& lead,
                                         const CorrectionOptions& opt = {}) {
  return solve_correction(assemble(mesh, tensor), lead, opt);
}

// ---------------------------------------------------------------------------
// Decay fits

struct DecayFit {
  std::vector<double> radii;
  std::vector<double> sup_values;
  std::vector<double> grad_values;
  double fitted_exponent = 0.0;
  /// Fit of grad_values when present, NaN otherwise.
  double grad_exponent = std::numeric_limits<double>::quiet_NaN();
  double alpha = 0.0;
  int n = 3;
  /// value * r^{-(2 - n + alpha)} per shell.
  std::vector<double> constants;
};

/// Least-squares slope of log(values) against log(radii).
inline double loglog_slope(std::span<const double> radii, std::span<const double> values) {
  if (radii.size() != values.size() || radii.size() < 2) throw std::invalid_argument("loglog_slope: need matching samples");
  const auto m = static_cast<double>(radii.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || !(values[i] > 0.0)) throw ValidationError("loglog_slope: values must be positive");
    const double x = std::log(radii[i]), y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

inline DecayFit decay_exponent_fit(std::vector<double> radii, std::vector<double> sup_values, double alpha, int n = 3,
                                   std::vector<double> grad_values = {}) {
  if (radii.size() < 4) throw ValidationError("decay_exponent_fit: need at least 4 shells");
  if (sup_values.size() != radii.size()) throw ValidationError("decay_exponent_fit: one value per radius");
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] < radii[i - 1])) throw ValidationError("decay_exponent_fit: radii must be strictly decreasing");
  for (double v : sup_values)
    if (!(v > 0.0)) throw ValidationError("decay_exponent_fit: nonpositive value " + format_double(v));
  DecayFit fit;
  fit.fitted_exponent = loglog_slope(radii, sup_values);
  if (!grad_values.empty()) {
    if (grad_values.size() != radii.size()) throw ValidationError("decay_exponent_fit: one gradient value per radius");
    fit.grad_exponent = loglog_slope(radii, grad_values);
  }
  const double target = 2.0 - n + alpha;
  for (std::size_t i = 0; i < radii.size(); ++i) fit.constants.push_back(sup_values[i] * std::pow(radii[i], -target));
  fit.radii = std::move(radii);
  fit.sup_values = std::move(sup_values);
  fit.grad_values = std::move(grad_values);
  fit.alpha = alpha;
  fit.n = n;
  return fit;
}

/// Quasi-uniform unit directions (Fibonacci lattice).
inline std::vector<Point> fibonacci_directions(int count) {
  std::vector<Point> dirs;
  dirs.reserve(count);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(1.0 - y * y);
    const double phi = golden * i;
    dirs.emplace_back(r * std::cos(phi), y, r * std::sin(phi));
  }
  return dirs;
}

/// sup over the shell r/2 <= |x - center| <= r of fn, sampled on
/// `directions` rays and `radial` radii per shell.
inline std::vector<double> shell_suprema(const std::function<double(const Point&)>& fn, const Point& center,
                                         std::span<const double> radii, int directions = 256, int radial = 5) {
  const auto dirs = fibonacci_directions(directions);
  std::vector<double> out;
  out.reserve(radii.size());
  for (double r : radii) {
    double best = 0.0;
    for (int j = 0; j < radial; ++j) {
      const double rho = r * (0.5 + 0.5 * j / std::max(1, radial - 1));
      for (const auto& d : dirs) best = std::max(best, fn(center + rho * d));
    }
    out.push_back(best);
  }
  return out;
}

/// Suprema of |w| and |x - z| |grad w| for a P1 field, over the 4-point
/// quadrature points of the tets that fall in each shell r/2 <= |x - z| <= r.
inline void field_shell_suprema(const Mesh& mesh, const Eigen::VectorXcd& w, const Point& z, std::span<const double> radii,
                                std::vector<double>& sup_values, std::vector<double>& grad_values) {
  sup_values.assign(radii.size(), 0.0);
  grad_values.assign(radii.size(), 0.0);
  const TetRule rule = tet_rule_degree2();
  for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
    const auto v = mesh.tet_points(t);
    const auto& c = mesh.tets[t];
    const TetGeometry geo = tet_geometry(v);
    const Eigen::Vector4cd we(w[c[0]], w[c[1]], w[c[2]], w[c[3]]);
    const double gnorm = (geo.grad.cast<Complex>().transpose() * we).norm();
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Point x = map_bary(v, rule.bary[q]);
      const double r = (x - z).norm();
      const double val = std::abs(rule.bary[q].cast<Complex>().dot(we));
      for (std::size_t s = 0; s < radii.size(); ++s) {
        if (r <= radii[s] && r >= 0.5 * radii[s]) {
          sup_values[s] = std::max(sup_values[s], val);
          grad_values[s] = std::max(grad_values[s], r * gnorm);
        }
      }
    }
  }
}

}  // namespace otstab
