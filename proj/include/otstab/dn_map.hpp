#pragma once

// Discrete Dirichlet-to-Neumann matrices, discrete H^{1/2} / H^{-1/2} Gram
// matrices on the boundary, operator norms of D-N differences and the
// integral identity relating Lambda_1 - Lambda_2 to interior coefficient
// differences.
//
// Lambda maps nodal Dirichlet data f to the load vector (Lambda f)_i =
// a(u_f, phi_i), i over boundary vertices; it is the Schur complement of the
// complex system matrix on the boundary.

#include "otstab/coefficient_model.hpp"
#include "otstab/common.hpp"
#include "otstab/elliptic_solver.hpp"
#include "otstab/mesh.hpp"
#include "otstab/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace otstab {

struct TraceSpace {
  std::vector<int> boundary_vertices;
  Eigen::MatrixXd M;
  Eigen::MatrixXd S;
  Eigen::MatrixXd G_half;
  Eigen::MatrixXd G_minus_half;
  /// F^{-1} for the factorization G_half = F F^T, F = M^{1/2} W (I + Theta)^{1/4}.
  Eigen::MatrixXd half_factor_inv;

  Eigen::Index size() const { return static_cast<Eigen::Index>(boundary_vertices.size()); }
};

/// Boundary P1 mass and Laplace-Beltrami stiffness plus the Gram matrices
/// G_half = M^{1/2} (I + X)^{1/2} M^{1/2}, X = M^{-1/2} S M^{-1/2}, and
/// G_minus_half = M G_half^{-1} M.
inline TraceSpace build_trace_space(const Mesh& mesh) {
  TraceSpace tr;
  tr.boundary_vertices = mesh.boundary_vertices;
  const Eigen::Index nb = tr.size();
  std::vector<int> local(mesh.num_vertices(), -1);
  for (Eigen::Index i = 0; i < nb; ++i) local[tr.boundary_vertices[i]] = static_cast<int>(i);

  tr.M = Eigen::MatrixXd::Zero(nb, nb);
  tr.S = Eigen::MatrixXd::Zero(nb, nb);
  for (std::size_t f = 0; f < mesh.boundary_faces.size(); ++f) {
    const auto v = mesh.face_points(f);
    const auto& c = mesh.boundary_faces[f];
    const double area = 0.5 * (v[1] - v[0]).cross(v[2] - v[0]).norm();
    // Edge opposite each vertex; grad(lambda_i).grad(lambda_j) = e_i.e_j / (4 area^2).
    const std::array<Point, 3> e{v[2] - v[1], v[0] - v[2], v[1] - v[0]};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int a = local[c[i]], b = local[c[j]];
        tr.M(a, b) += area * (i == j ? 2.0 : 1.0) / 12.0;
        tr.S(a, b) += e[i].dot(e[j]) / (4.0 * area);
      }
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> mass(tr.M);
  if (mass.info() != Eigen::Success) throw Error("build_trace_space: eigendecomposition of M failed");
  if (!(mass.eigenvalues().minCoeff() > 0.0)) throw Error("build_trace_space: boundary mass matrix is singular");
  const Eigen::VectorXd ms = mass.eigenvalues().cwiseSqrt();
  const Eigen::MatrixXd M_half = mass.eigenvectors() * ms.asDiagonal() * mass.eigenvectors().transpose();
  const Eigen::MatrixXd M_mhalf = mass.eigenvectors() * ms.cwiseInverse().asDiagonal() * mass.eigenvectors().transpose();

  Eigen::MatrixXd X = M_mhalf * tr.S * M_mhalf;
  X = 0.5 * (X + X.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(X);
  if (eig.info() != Eigen::Success) throw Error("build_trace_space: eigendecomposition of X failed");
  // S is positive semidefinite; clip round-off below zero.
  const Eigen::VectorXd one_plus = (eig.eigenvalues().array().max(0.0) + 1.0).matrix();
  const Eigen::MatrixXd MW = M_half * eig.eigenvectors();

  tr.G_half = MW * one_plus.cwiseSqrt().asDiagonal() * MW.transpose();
  tr.G_minus_half = MW * one_plus.cwiseSqrt().cwiseInverse().asDiagonal() * MW.transpose();
  tr.G_half = 0.5 * (tr.G_half + tr.G_half.transpose()).eval();
  tr.G_minus_half = 0.5 * (tr.G_minus_half + tr.G_minus_half.transpose()).eval();
  const Eigen::VectorXd quarter_inv = one_plus.array().pow(-0.25).matrix();
  tr.half_factor_inv = quarter_inv.asDiagonal() * eig.eigenvectors().transpose() * M_mhalf;
  return tr;
}

// ---------------------------------------------------------------------------
// D-N matrix

struct DnMeta {
  std::string mesh_fingerprint;
  std::string coefficient_hash;
  double k = 0.0;
};

struct DnMatrix {
  Eigen::MatrixXcd Lambda;
  DnMeta meta;
};

namespace detail {

inline SparseComplex complex_block(const SparseComplex& A, const std::vector<int>& rows, const std::vector<int>& col_index,
                                   Eigen::Index ncols) {
  std::vector<Eigen::Triplet<Complex>> trip;
  const SparseComplex At = A.transpose();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (SparseComplex::InnerIterator it(At, rows[r]); it; ++it) {
      const int c = col_index[it.row()];
      if (c >= 0) trip.emplace_back(static_cast<int>(r), c, it.value());
    }
  }
  SparseComplex B(static_cast<Eigen::Index>(rows.size()), ncols);
  B.setFromTriplets(trip.begin(), trip.end());
  B.makeCompressed();
  return B;
}

inline std::string coefficient_hash(const DiffusionTensor& t) {
  std::string desc = "k=" + format_double(t.wave_number());
  if (const auto& c = t.coefficients()) desc += ";mu_a=" + c->mu_a.description() + ";mu_s=" + c->mu_s.description() + ";B=" + c->B.description();
  return hex64(fnv1a(desc));
}

}  // namespace detail

/// Lambda = A_bb - A_bi A_ii^{-1} A_ib in complex arithmetic (one sparse LU,
/// all boundary columns at once).
inline DnMatrix assemble_dn_matrix(const DiscreteSystem& sys, const TraceSpace& trace) {
  if (trace.boundary_vertices != sys.boundary_vertices())
    throw ValidationError("assemble_dn_matrix: trace space and system live on different meshes");
  const SparseComplex A = to_complex_matrix(sys.A);
  const auto& bv = sys.boundary_vertices();
  const auto nb = static_cast<Eigen::Index>(bv.size());
  const auto ni = static_cast<Eigen::Index>(sys.interior_vertices.size());

  DnMatrix dn;
  dn.Lambda = Eigen::MatrixXcd(detail::complex_block(A, bv, sys.boundary_index, nb));
  if (ni > 0) {
    const SparseComplex A_ii = detail::complex_block(A, sys.interior_vertices, sys.interior_index, ni);
    const SparseComplex A_ib = detail::complex_block(A, sys.interior_vertices, sys.boundary_index, nb);
    const SparseComplex A_bi = detail::complex_block(A, bv, sys.interior_index, ni);
    Eigen::SparseLU<SparseComplex> lu;
    lu.analyzePattern(A_ii);
    lu.factorize(A_ii);
    if (lu.info() != Eigen::Success) throw SolverError("assemble_dn_matrix: factorization of the interior block failed", 0, 0.0);
    const Eigen::MatrixXcd rhs = Eigen::MatrixXcd(A_ib);
    const Eigen::MatrixXcd X = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw SolverError("assemble_dn_matrix: interior solves failed", 0, 0.0);
    const double residual = (A_ii * X - rhs).norm() / std::max(rhs.norm(), 1e-300);
    if (!(residual <= 1e-10)) throw SolverError("assemble_dn_matrix: interior residual above tolerance", 0, residual);
    dn.Lambda -= A_bi * X;
  }
  dn.meta.mesh_fingerprint = mesh_fingerprint(*sys.mesh);
  dn.meta.coefficient_hash = detail::coefficient_hash(*sys.tensor);
  dn.meta.k = sys.tensor->wave_number();
  return dn;
}

/// max_f ||Delta f||_{-1/2} / ||f||_{1/2}, where Delta maps nodal data to
/// boundary load vectors: the largest singular value of F^{-1} Delta F^{-T}.
inline double dn_operator_norm(const Eigen::MatrixXcd& delta, const TraceSpace& trace) {
  if (delta.rows() != trace.size() || delta.cols() != trace.size())
    throw std::invalid_argument("dn_operator_norm: size mismatch with the trace space");
  if (!trace.half_factor_inv.allFinite()) throw Error("dn_operator_norm: singular Gram matrix");
  const Eigen::MatrixXcd Finv = trace.half_factor_inv.cast<Complex>();
  const Eigen::MatrixXcd B = Finv * delta * Finv.transpose();
  if (B.norm() == 0.0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(B);
  return svd.singularValues()[0];
}

inline double dn_operator_norm(const DnMatrix& delta, const TraceSpace& trace) {
  return dn_operator_norm(delta.Lambda, trace);
}

// ---------------------------------------------------------------------------
// Integral identity

struct AlessandriniResult {
  /// g^T (Lambda_1 - Lambda_2) f, bilinear.
  Complex boundary_side;
  /// Integral of (K_1 - K_2) grad u . grad v.
  Complex stiffness_term;
  /// Integral of (mu_a1 - mu_a2) u v.
  Complex mass_term;
  double residual = 0.0;
  /// residual / (|boundary_side| + |stiffness_term| + |mass_term|), 0 when all vanish.
  double relative = 0.0;
};

/// Evaluates both sides of
///   g^T (Lambda_1 - Lambda_2) f = int (K_1 - K_2) grad u . grad v + int (mu_a1 - mu_a2) u v
/// where u solves problem 1 with data f and v solves problem 2 with data g.
/// The volume integrals use the same element rules as assembly, so the
/// discrete identity holds up to solver round-off.
inline AlessandriniResult alessandrini_residual(const DnMatrix& L1, const DnMatrix& L2, const DiscreteSystem& sys1,
                                                const DiscreteSystem& sys2, const Eigen::VectorXcd& f,
                                                const Eigen::VectorXcd& g) {
  if (sys1.mesh != sys2.mesh && mesh_fingerprint(*sys1.mesh) != mesh_fingerprint(*sys2.mesh))
    throw ValidationError("alessandrini_residual: systems are built on different meshes");
  const Mesh& mesh = *sys1.mesh;
  const FemSolution u = solve_dirichlet(sys1, f);
  const FemSolution v = solve_dirichlet(sys2, g);

  AlessandriniResult out;
  out.boundary_side = g.transpose() * ((L1.Lambda - L2.Lambda) * f);
  const TetRule rule = tet_rule_degree2();
  Complex stiff = 0.0, mass = 0.0;
  for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
    const auto pts = mesh.tet_points(t);
    const auto& c = mesh.tets[t];
    const TetGeometry geo = tet_geometry(pts);
    const Point centroid = 0.25 * (pts[0] + pts[1] + pts[2] + pts[3]);
    const Eigen::Vector4cd ue(u.u[c[0]], u.u[c[1]], u.u[c[2]], u.u[c[3]]);
    const Eigen::Vector4cd ve(v.u[c[0]], v.u[c[1]], v.u[c[2]], v.u[c[3]]);
    const Eigen::Vector3cd grad_u = geo.grad.cast<Complex>().transpose() * ue;
    const Eigen::Vector3cd grad_v = geo.grad.cast<Complex>().transpose() * ve;
    const Eigen::Matrix3cd dK = sys1.tensor->K(centroid) - sys2.tensor->K(centroid);
    stiff += geo.volume * (dK * grad_u).cwiseProduct(grad_v).sum();
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Eigen::Vector4d& l = rule.bary[q];
      const Point x = map_bary(pts, l);
      const Complex dq = sys1.tensor->q(x) - sys2.tensor->q(x);
      const Complex uq = l.cast<Complex>().dot(ue);
      const Complex vq = l.cast<Complex>().dot(ve);
      mass += geo.volume * rule.weights[q] * dq * uq * vq;
    }
  }
  out.stiffness_term = stiff;
  out.mass_term = mass;
  out.residual = std::abs(out.boundary_side - stiff - mass);
  const double scale = std::abs(out.boundary_side) + std::abs(stiff) + std::abs(mass);
  out.relative = scale > 0.0 ? out.residual / scale : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Export

/// Row-major CSV, each row "re,im,re,im,...".
inline void write_dn_csv(std::ostream& os, const Eigen::MatrixXcd& L) {
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    for (Eigen::Index j = 0; j < L.cols(); ++j) {
      if (j > 0) os << ',';
      os << format_double(L(i, j).real()) << ',' << format_double(L(i, j).imag());
    }
    os << '\n';
  }
}

inline nlohmann::ordered_json dn_sidecar(const DnMatrix& dn) {
  nlohmann::ordered_json j;
  j["rows"] = dn.Lambda.rows();
  j["cols"] = dn.Lambda.cols();
  j["layout"] = "row-major, re,im pairs";
  j["mesh_fingerprint"] = dn.meta.mesh_fingerprint;
  j["coefficient_hash"] = dn.meta.coefficient_hash;
  j["k"] = dn.meta.k;
  return j;
}

}  // namespace otstab
