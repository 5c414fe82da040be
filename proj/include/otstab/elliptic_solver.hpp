#pragma once

// P1 assembly and Dirichlet solves for
//   -div(K grad u) + q u = 0,   q = mu_a - i k,
// written as the equivalent real 2x2 system. Unknowns are interleaved per
// vertex: dof 2v carries Re u(v), dof 2v+1 carries Im u(v), so every complex
// entry a = a_R + i a_I becomes the block [[a_R, -a_I], [a_I, a_R]].

#include "otstab/coefficient_model.hpp"
#include "otstab/common.hpp"
#include "otstab/mesh.hpp"
#include "otstab/quadrature.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace otstab {

using SparseReal = Eigen::SparseMatrix<double>;
using SparseComplex = Eigen::SparseMatrix<Complex>;

/// Above this many real unknowns the interior solve switches to BiCGSTAB.
inline constexpr long kDirectSolveLimit = 50000;

struct DiscreteSystem {
  std::shared_ptr<const Mesh> mesh;
  std::shared_ptr<const DiffusionTensor> tensor;
  /// 2N x 2N interleaved real matrix.
  SparseReal A;
  /// Per-vertex position in the boundary (or interior) ordering, -1 otherwise.
  std::vector<int> boundary_index;
  std::vector<int> interior_index;
  std::vector<int> interior_vertices;

  std::size_t num_vertices() const { return mesh->num_vertices(); }
  const std::vector<int>& boundary_vertices() const { return mesh->boundary_vertices; }

  static int dof_real(int v) { return 2 * v; }
  static int dof_imag(int v) { return 2 * v + 1; }
};

struct SolveStats {
  std::string method;
  int iterations = 0;
};

struct FemSolution {
  Eigen::VectorXcd u;
  /// Relative residual of the interior equations.
  double residual = 0.0;
  SolveStats stats;
};

// ---------------------------------------------------------------------------
// Element kernels

/// Barycentric gradients (rows) of a tet and its volume.
struct TetGeometry {
  Eigen::Matrix<double, 4, 3> grad;
  double volume = 0.0;
};

inline TetGeometry tet_geometry(const std::array<Point, 4>& v) {
  Eigen::Matrix3d J;
  J.col(0) = v[1] - v[0];
  J.col(1) = v[2] - v[0];
  J.col(2) = v[3] - v[0];
  TetGeometry g;
  g.volume = J.determinant() / 6.0;
  if (!(std::abs(g.volume) > 0.0)) throw ValidationError("degenerate element (zero volume)");
  g.volume = std::abs(g.volume);
  const Eigen::Matrix3d Jinv = J.inverse();
  g.grad.row(1) = Jinv.row(0);
  g.grad.row(2) = Jinv.row(1);
  g.grad.row(3) = Jinv.row(2);
  g.grad.row(0) = -(g.grad.row(1) + g.grad.row(2) + g.grad.row(3));
  return g;
}

/// Complex local matrix: K at the centroid for stiffness, q by the 4-point rule.
inline Eigen::Matrix4cd local_matrix(const std::array<Point, 4>& v, const DiffusionTensor& tensor,
                                     const TetRule& mass_rule) {
  const TetGeometry g = tet_geometry(v);
  const Point centroid = 0.25 * (v[0] + v[1] + v[2] + v[3]);
  const Eigen::Matrix3cd K = tensor.K(centroid);
  const Eigen::Matrix<Complex, 4, 3> gc = g.grad.cast<Complex>();
  Eigen::Matrix4cd a = g.volume * gc * K * gc.transpose();
  for (std::size_t q = 0; q < mass_rule.size(); ++q) {
    const Eigen::Vector4d& l = mass_rule.bary[q];
    const Complex qv = tensor.q(map_bary(v, l));
    a += (g.volume * mass_rule.weights[q] * qv) * (l * l.transpose()).cast<Complex>();
  }
  return a;
}

// ---------------------------------------------------------------------------
// Assembly

inline DiscreteSystem assemble(std::shared_ptr<const Mesh> mesh, std::shared_ptr<const DiffusionTensor> tensor) {
  if (tensor->dim() != 3) throw ValidationError("assemble: tensor dimension must match the 3D mesh");
  DiscreteSystem sys;
  sys.mesh = std::move(mesh);
  sys.tensor = std::move(tensor);
  const Mesh& m = *sys.mesh;
  const auto N = static_cast<int>(m.num_vertices());

  sys.boundary_index.assign(N, -1);
  sys.interior_index.assign(N, -1);
  for (std::size_t i = 0; i < m.boundary_vertices.size(); ++i) sys.boundary_index[m.boundary_vertices[i]] = static_cast<int>(i);
  for (int v = 0; v < N; ++v) {
    if (sys.boundary_index[v] < 0) {
      sys.interior_index[v] = static_cast<int>(sys.interior_vertices.size());
      sys.interior_vertices.push_back(v);
    }
  }

  const TetRule rule = tet_rule_degree2();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m.num_tets() * 64);
  for (std::size_t t = 0; t < m.num_tets(); ++t) {
    const Eigen::Matrix4cd a = local_matrix(m.tet_points(t), *sys.tensor, rule);
    const auto& c = m.tets[t];
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const double re = a(i, j).real(), im = a(i, j).imag();
        const int r = 2 * c[i], s = 2 * c[j];
        trip.emplace_back(r, s, re);
        trip.emplace_back(r, s + 1, -im);
        trip.emplace_back(r + 1, s, im);
        trip.emplace_back(r + 1, s + 1, re);
      }
    }
  }
  sys.A.resize(2 * N, 2 * N);
  sys.A.setFromTriplets(trip.begin(), trip.end());
  sys.A.makeCompressed();
  return sys;
}

inline DiscreteSystem assemble(const Mesh& mesh, const DiffusionTensor& tensor) {
  return assemble(std::make_shared<const Mesh>(mesh), std::make_shared<const DiffusionTensor>(tensor));
}

/// Collapses the interleaved real matrix back to the N x N complex one.
inline SparseComplex to_complex_matrix(const SparseReal& A) {
  if (A.rows() % 2 != 0 || A.cols() % 2 != 0) throw std::invalid_argument("to_complex_matrix: odd dimension");
  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(A.nonZeros() / 2);
  for (int col = 0; col < A.outerSize(); ++col) {
    if (col % 2 != 0) continue;
    for (SparseReal::InnerIterator it(A, col); it; ++it) {
      // Column 2j holds (a_R, a_I) in rows (2i, 2i+1).
      const int i = static_cast<int>(it.row()) / 2;
      if (it.row() % 2 == 0)
        trip.emplace_back(i, col / 2, Complex(it.value(), 0.0));
      else
        trip.emplace_back(i, col / 2, Complex(0.0, it.value()));
    }
  }
  SparseComplex C(A.rows() / 2, A.cols() / 2);
  C.setFromTriplets(trip.begin(), trip.end());
  C.makeCompressed();
  return C;
}

inline Eigen::VectorXd interleave(const Eigen::VectorXcd& u) {
  Eigen::VectorXd x(2 * u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    x[2 * i] = u[i].real();
    x[2 * i + 1] = u[i].imag();
  }
  return x;
}

inline Eigen::VectorXcd deinterleave(const Eigen::VectorXd& x) {
  Eigen::VectorXcd u(x.size() / 2);
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = Complex(x[2 * i], x[2 * i + 1]);
  return u;
}

/// A u in complex form, computed through the interleaved matrix.
inline Eigen::VectorXcd apply_operator(const DiscreteSystem& sys, const Eigen::VectorXcd& u) {
  if (static_cast<std::size_t>(u.size()) != sys.num_vertices())
    throw std::invalid_argument("apply_operator: expected " + std::to_string(sys.num_vertices()) + " values, got " +
                                std::to_string(u.size()));
  return deinterleave(sys.A * interleave(u));
}

// ---------------------------------------------------------------------------
// Dirichlet solves

namespace detail {

inline SparseReal select_dofs(const SparseReal& A, const std::vector<int>& row_vertices,
                              const std::vector<int>& col_index_of_vertex, int ncols) {
  // Rows: the listed vertices (both components). Columns: vertices mapped through col_index_of_vertex.
  std::vector<Eigen::Triplet<double>> trip;
  const SparseReal At = A.transpose();  // row access
  for (std::size_t r = 0; r < row_vertices.size(); ++r) {
    for (int comp = 0; comp < 2; ++comp) {
      const int row = 2 * row_vertices[r] + comp;
      for (SparseReal::InnerIterator it(At, row); it; ++it) {
        const int v = static_cast<int>(it.row()) / 2;
        const int c = col_index_of_vertex[v];
        if (c < 0) continue;
        trip.emplace_back(static_cast<int>(2 * r + comp), 2 * c + static_cast<int>(it.row() % 2), it.value());
      }
    }
  }
  SparseReal S(2 * static_cast<int>(row_vertices.size()), 2 * ncols);
  S.setFromTriplets(trip.begin(), trip.end());
  S.makeCompressed();
  return S;
}

}  // namespace detail

/// Factorizes the interior block once; each call to solve() lifts boundary
/// data by elimination.
class DirichletSolver {
 public:
  explicit DirichletSolver(const DiscreteSystem& sys, double tolerance = 1e-10) : sys_(&sys), tol_(tolerance) {
    const int ni = static_cast<int>(sys.interior_vertices.size());
    const int nb = static_cast<int>(sys.boundary_vertices().size());
    A_ii_ = detail::select_dofs(sys.A, sys.interior_vertices, sys.interior_index, ni);
    A_ib_ = detail::select_dofs(sys.A, sys.interior_vertices, sys.boundary_index, nb);
    if (ni == 0) return;
    direct_ = A_ii_.rows() <= kDirectSolveLimit;
    if (direct_) {
      lu_.analyzePattern(A_ii_);
      lu_.factorize(A_ii_);
      if (lu_.info() != Eigen::Success) throw SolverError("sparse LU factorization failed", 0, std::numeric_limits<double>::quiet_NaN());
    } else {
      krylov_.setTolerance(tol_);
      krylov_.setMaxIterations(20000);
      krylov_.compute(A_ii_);
    }
  }

  /// Solves A u = load at interior vertices with u = g on the boundary.
  /// g is ordered like mesh.boundary_vertices; load has one entry per vertex.
  FemSolution solve(const Eigen::VectorXcd& g, const Eigen::VectorXcd* load = nullptr) const {
    const DiscreteSystem& sys = *sys_;
    const auto& bv = sys.boundary_vertices();
    if (static_cast<std::size_t>(g.size()) != bv.size())
      throw std::invalid_argument("solve_dirichlet: boundary data has " + std::to_string(g.size()) + " entries, expected " +
                                  std::to_string(bv.size()));
    FemSolution sol;
    sol.u = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(sys.num_vertices()));
    for (std::size_t i = 0; i < bv.size(); ++i) sol.u[bv[i]] = g[static_cast<Eigen::Index>(i)];
    const auto ni = static_cast<Eigen::Index>(sys.interior_vertices.size());
    if (ni == 0) {
      sol.stats.method = "none";
      return sol;
    }

    Eigen::VectorXd rhs = -(A_ib_ * interleave(g));
    if (load) {
      for (Eigen::Index i = 0; i < ni; ++i) {
        const Complex f = (*load)[sys.interior_vertices[i]];
        rhs[2 * i] += f.real();
        rhs[2 * i + 1] += f.imag();
      }
    }
    Eigen::VectorXd x;
    if (direct_) {
      x = lu_.solve(rhs);
      sol.stats.method = "sparse-lu";
    } else {
      x = krylov_.solve(rhs);
      sol.stats.method = "bicgstab-jacobi";
      sol.stats.iterations = static_cast<int>(krylov_.iterations());
      if (krylov_.info() != Eigen::Success)
        throw SolverError("BiCGSTAB did not converge", sol.stats.iterations, krylov_.error());
    }
    const double scale = rhs.norm();
    sol.residual = scale > 0.0 ? (A_ii_ * x - rhs).norm() / scale : (A_ii_ * x).norm();
    if (!(sol.residual <= tol_))
      throw SolverError("interior residual above tolerance", sol.stats.iterations, sol.residual);
    for (Eigen::Index i = 0; i < ni; ++i) sol.u[sys.interior_vertices[i]] = Complex(x[2 * i], x[2 * i + 1]);
    return sol;
  }

  const SparseReal& interior_block() const { return A_ii_; }
  const SparseReal& coupling_block() const { return A_ib_; }

 private:
  const DiscreteSystem* sys_;
  double tol_;
  bool direct_ = true;
  SparseReal A_ii_, A_ib_;
  Eigen::SparseLU<SparseReal> lu_;
  Eigen::BiCGSTAB<SparseReal, Eigen::DiagonalPreconditioner<double>> krylov_;
};

inline FemSolution solve_dirichlet(const DiscreteSystem& sys, const Eigen::VectorXcd& g) {
  return DirichletSolver(sys).solve(g);
}

// ---------------------------------------------------------------------------
// Post-processing

/// Boundary nodal values of a pointwise function, ordered like boundary_vertices.
inline Eigen::VectorXcd boundary_trace(const Mesh& mesh, const std::function<Complex(const Point&)>& fn) {
  Eigen::VectorXcd g(static_cast<Eigen::Index>(mesh.boundary_vertices.size()));
  for (std::size_t i = 0; i < mesh.boundary_vertices.size(); ++i) g[static_cast<Eigen::Index>(i)] = fn(mesh.vertices[mesh.boundary_vertices[i]]);
  return g;
}

/// L2(Omega) distance between the P1 interpolant of nodal values and exact(x).
inline double l2_error(const Mesh& mesh, const Eigen::VectorXcd& u, const std::function<Complex(const Point&)>& exact,
                       int order = 5) {
  const TetRule rule = tet_rule_collapsed(order);
  double acc = 0.0;
  for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
    const auto v = mesh.tet_points(t);
    const auto& c = mesh.tets[t];
    const double vol = std::abs(tet_volume(mesh, t));
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Eigen::Vector4d& l = rule.bary[q];
      const Complex uh = l[0] * u[c[0]] + l[1] * u[c[1]] + l[2] * u[c[2]] + l[3] * u[c[3]];
      acc += vol * rule.weights[q] * std::norm(uh - exact(map_bary(v, l)));
    }
  }
  return std::sqrt(acc);
}

/// Coordinate-format dump: one "row col value" line per stored entry.
inline void write_coo(std::ostream& os, const SparseReal& A) {
  os << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
  for (int col = 0; col < A.outerSize(); ++col)
    for (SparseReal::InnerIterator it(A, col); it; ++it) os << it.row() << ' ' << it.col() << ' ' << format_double(it.value()) << '\n';
}

}  // namespace otstab
