#pragma once

// Optical coefficients, the complex diffusion tensor
//   K = (1/n) ((mu_a - i k) I + (I - B) mu_s)^{-1},  q = mu_a - i k,
// its real/imaginary splittings, the equivalent real 2x2 system tensor,
// a-priori assumption checks, admissible wave-number ranges and the phase
// condition on F used by the boundary stability argument.

#include "otstab/common.hpp"
#include "otstab/complex_power.hpp"
#include "otstab/fields.hpp"
#include "otstab/mesh.hpp"
#include "otstab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace otstab {

/// The constants every stability estimate depends on.
struct AprioriBounds {
  double lambda = 2.0;
  double E = 10.0;
  double calE = 1.0;
  double p = 6.0;
  int n = 3;
  double k = 0.03;
  double r0 = 0.5;
  double L_lip = 1.0;
  double diam = std::sqrt(3.0);

  /// Hoelder exponent 1 - n/p.
  double beta() const { return 1.0 - static_cast<double>(n) / p; }
  /// Midpoint of (0, beta).
  double default_alpha() const { return 0.5 * beta(); }

  void validate() const {
    if (!(lambda > 0.0)) throw ValidationError("bounds: lambda must be positive");
    if (!(E > 0.0)) throw ValidationError("bounds: E must be positive");
    if (!(calE > 0.0)) throw ValidationError("bounds: calE must be positive");
    if (n < 3) throw ValidationError("bounds: n must be >= 3");
    if (!(p > n)) throw ValidationError("bounds: p must exceed n");
    if (!(k > 0.0)) throw ValidationError("bounds: k must be positive");
    if (!(r0 > 0.0 && L_lip > 0.0 && diam > 0.0)) throw ValidationError("bounds: r0, L_lip, diam must be positive");
  }
};

struct OpticalCoefficients {
  ScalarField mu_a = ScalarField::constant(1.0);
  ScalarField mu_s = ScalarField::constant(1.0);
  MatrixField B = MatrixField::constant(Eigen::MatrixXd::Zero(3, 3));

  int dim() const { return B.dim(); }
};

// ---------------------------------------------------------------------------
// Assumption checks

struct InequalityCheck {
  std::string name;
  double observed_min = 0.0;
  double observed_max = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct ValidationReport {
  std::vector<InequalityCheck> checks;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const InequalityCheck& c) { return c.pass; });
  }

  const InequalityCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }

  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
      if (!c.pass) out.push_back(c.name);
    return out;
  }
};

namespace detail {

inline double checked(double v, const char* what, const Point& x) {
  if (!std::isfinite(v)) throw EvaluationError(std::string(what) + " is not finite at " + format_point(x));
  return v;
}

struct Extrema {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

}  // namespace detail

/// Pointwise bounds on mu_a, mu_s and the spectrum of I - B at the given points.
inline ValidationReport validate_assumptions(const OpticalCoefficients& coeffs, const AprioriBounds& bounds,
                                             std::span<const Point> points) {
  bounds.validate();
  if (coeffs.dim() != bounds.n) throw ValidationError("B dimension does not match n");
  detail::Extrema mu_a, mu_s, eig;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(bounds.n, bounds.n);
  for (const auto& x : points) {
    mu_a.add(detail::checked(coeffs.mu_a(x), "mu_a", x));
    mu_s.add(detail::checked(coeffs.mu_s(x), "mu_s", x));
    const Eigen::MatrixXd B = coeffs.B(x);
    if (!B.allFinite()) throw EvaluationError("B is not finite at " + format_point(x));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(I - B, Eigen::EigenvaluesOnly);
    eig.add(es.eigenvalues().minCoeff());
    eig.add(es.eigenvalues().maxCoeff());
  }
  const double lam = bounds.lambda, E = bounds.calE;
  ValidationReport report;
  report.checks.push_back({"mu_a >= 1/lambda", mu_a.lo, mu_a.hi, 1.0 / lam, mu_a.lo >= 1.0 / lam});
  report.checks.push_back({"mu_a <= lambda", mu_a.lo, mu_a.hi, lam, mu_a.hi <= lam});
  report.checks.push_back({"mu_s >= 1/lambda", mu_s.lo, mu_s.hi, 1.0 / lam, mu_s.lo >= 1.0 / lam});
  report.checks.push_back({"mu_s <= lambda", mu_s.lo, mu_s.hi, lam, mu_s.hi <= lam});
  report.checks.push_back({"eig(I-B) >= 1/calE", eig.lo, eig.hi, 1.0 / E, eig.lo >= 1.0 / E});
  report.checks.push_back({"eig(I-B) <= calE", eig.lo, eig.hi, E, eig.hi <= E});
  return report;
}

/// Sampled W^{1,p} norm: 4-point rule per tet, central-difference gradients.
inline double sobolev_w1p_surrogate(const ScalarField& f, const Mesh& mesh, double p) {
  const auto rule = tet_rule_degree2();
  double acc = 0.0;
  for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
    const auto v = mesh.tet_points(t);
    const double vol = tet_volume(mesh, t);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Point x = map_bary(v, rule.bary[q]);
      const double val = detail::checked(f(x), "field", x);
      const double g = f.gradient(x).norm();
      acc += rule.weights[q] * vol * (std::pow(std::abs(val), p) + std::pow(g, p));
    }
  }
  return std::pow(acc, 1.0 / p);
}

/// Pointwise checks at mesh vertices and tet quadrature points, plus the
/// sampled W^{1,p} bounds on mu_a and mu_s.
inline ValidationReport validate_assumptions(const OpticalCoefficients& coeffs, const AprioriBounds& bounds,
                                             const Mesh& mesh) {
  const auto points = volume_sample_points(mesh);
  ValidationReport report = validate_assumptions(coeffs, bounds, std::span<const Point>(points));
  const double wa = sobolev_w1p_surrogate(coeffs.mu_a, mesh, bounds.p);
  const double ws = sobolev_w1p_surrogate(coeffs.mu_s, mesh, bounds.p);
  report.checks.push_back({"||mu_a||_W1p <= E", wa, wa, bounds.E, wa <= bounds.E});
  report.checks.push_back({"||mu_s||_W1p <= E", ws, ws, bounds.E, ws <= bounds.E});
  return report;
}

// ---------------------------------------------------------------------------
// Diffusion tensor

/// Everything derived from K at one point.
struct TensorSample {
  Eigen::MatrixXcd K;
  Eigen::MatrixXcd Kinv;
  Eigen::MatrixXd K_R, K_I;
  Eigen::MatrixXd Kinv_R, Kinv_I;
  Complex q;
};

/// Closed-form tensor algebra at one point for any n:
///   K^{-1}_R = n (mu_a I + (I-B) mu_s),  K^{-1}_I = -n k I,
///   K_R = (1/n) (P^2 + k^2 I)^{-1} P,    K_I = (k/n) (P^2 + k^2 I)^{-1},
/// with P = mu_a I + (I-B) mu_s.
inline TensorSample tensor_from_values(double mu_a, double mu_s, const Eigen::MatrixXd& B, double k) {
  const int n = static_cast<int>(B.rows());
  const double nd = n;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd P = mu_a * I + (I - B) * mu_s;
  Eigen::LLT<Eigen::MatrixXd> llt(P * P + k * k * I);
  if (llt.info() != Eigen::Success) throw ValidationError("P^2 + k^2 I is not positive definite");
  const Eigen::MatrixXd R = llt.solve(I);

  TensorSample s;
  s.K_R = R * P / nd;
  s.K_R = 0.5 * (s.K_R + s.K_R.transpose()).eval();
  s.K_I = (k / nd) * R;
  s.K_I = 0.5 * (s.K_I + s.K_I.transpose()).eval();
  s.Kinv_R = nd * P;
  s.Kinv_I = -nd * k * I;
  s.K = s.K_R.cast<Complex>() + Complex(0.0, 1.0) * s.K_I.cast<Complex>();
  s.Kinv = s.Kinv_R.cast<Complex>() + Complex(0.0, 1.0) * s.Kinv_I.cast<Complex>();
  s.q = Complex(mu_a, -k);
  return s;
}

/// Complex symmetric tensor field K together with the zeroth-order coefficient q.
/// Built either from optical coefficients or directly from prescribed K and q
/// (manufactured and frozen-coefficient problems).
class DiffusionTensor {
 public:
  using KFn = std::function<Eigen::MatrixXcd(const Point&)>;
  using QFn = std::function<Complex(const Point&)>;

  static DiffusionTensor from_coefficients(const OpticalCoefficients& coeffs, double k) {
    if (!(k > 0.0)) throw ValidationError("wave number must be positive");
    DiffusionTensor t;
    t.n_ = coeffs.dim();
    t.k_ = k;
    t.coeffs_ = coeffs;
    t.sample_ = [coeffs, k](const Point& x) {
      return tensor_from_values(detail::checked(coeffs.mu_a(x), "mu_a", x), detail::checked(coeffs.mu_s(x), "mu_s", x),
                                coeffs.B(x), k);
    };
    t.q_ = [mu_a = coeffs.mu_a, k](const Point& x) { return Complex(mu_a(x), -k); };
    return t;
  }

  static DiffusionTensor from_functions(int n, KFn K, QFn q) {
    DiffusionTensor t;
    t.n_ = n;
    t.k_ = std::numeric_limits<double>::quiet_NaN();
    t.sample_ = [K, q](const Point& x) {
      TensorSample s;
      s.K = K(x);
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(s.K);
      if (std::abs(lu.determinant()) == 0.0) throw ValidationError("singular K at " + format_point(x));
      s.Kinv = lu.inverse();
      s.K_R = s.K.real();
      s.K_I = s.K.imag();
      s.Kinv_R = s.Kinv.real();
      s.Kinv_I = s.Kinv.imag();
      s.q = q(x);
      return s;
    };
    t.q_ = std::move(q);
    return t;
  }

  /// Constant K and q everywhere.
  static DiffusionTensor constant(const Eigen::MatrixXcd& K, Complex q) {
    return from_functions(static_cast<int>(K.rows()), [K](const Point&) { return K; }, [q](const Point&) { return q; });
  }

  TensorSample at(const Point& x) const { return sample_(x); }
  Eigen::MatrixXcd K(const Point& x) const { return sample_(x).K; }
  Complex q(const Point& x) const { return q_(x); }
  int dim() const { return n_; }
  /// NaN for tensors not built from optical coefficients.
  double wave_number() const { return k_; }
  const std::optional<OpticalCoefficients>& coefficients() const { return coeffs_; }

 private:
  DiffusionTensor() = default;

  int n_ = 3;
  double k_ = 0.0;
  std::optional<OpticalCoefficients> coeffs_;
  std::function<TensorSample(const Point&)> sample_;
  QFn q_;
};

inline DiffusionTensor assemble_diffusion_tensor(const OpticalCoefficients& coeffs, double k) {
  return DiffusionTensor::from_coefficients(coeffs, k);
}

/// Lower bounds on the spectra of K_R and K_I implied by the assumptions.
struct TensorLowerBounds {
  double K_R_min;
  double K_I_min;
};

inline TensorLowerBounds tensor_lower_bounds(const AprioriBounds& b) {
  const double a = b.lambda * (1.0 + b.calE);
  const double denom = a * a + b.k * b.k;
  return {a / (b.n * denom), b.k / (b.n * denom)};
}

// ---------------------------------------------------------------------------
// Wave-number ranges

struct KRanges {
  double k0 = 0.0;
  double k0_tilde = 0.0;

  bool admissible(double k) const { return (k > 0.0 && k <= k0) || k >= k0_tilde; }
};

/// k0 and k0_tilde for general n, with t = tan(pi / (2n)).
inline KRanges admissible_k_ranges(const AprioriBounds& b) {
  if (!(b.lambda > 0.0 && b.calE > 0.0) || b.n < 3) throw ValidationError("admissible_k_ranges: invalid bounds");
  const double t = std::tan(std::numbers::pi / (2.0 * b.n));
  const double upper = b.lambda * (1.0 + b.calE);
  const double lower = (1.0 + 1.0 / b.calE) / b.lambda;
  KRanges r;
  r.k0 = (std::sqrt(upper * upper + lower * lower * t * t) - upper) / t;
  r.k0_tilde = (1.0 + std::sqrt(1.0 + t * t)) / t * upper;
  return r;
}

/// The simplified closed forms valid for n = 3.
inline KRanges admissible_k_ranges_n3(double lambda, double calE) {
  const double upper = lambda * (1.0 + calE);
  const double lower = (1.0 + 1.0 / calE) / lambda;
  KRanges r;
  r.k0 = std::sqrt(3.0 * upper * upper + lower * lower) - std::sqrt(3.0) * upper;
  r.k0_tilde = (2.0 + std::sqrt(3.0)) * upper;
  return r;
}

// ---------------------------------------------------------------------------
// Phase condition on F

struct FConditionSample {
  Eigen::VectorXd direction;
  Complex F;
  bool pass = false;
};

struct FConditionReport {
  std::vector<FConditionSample> samples;
  bool pass() const {
    return std::all_of(samples.begin(), samples.end(), [](const FConditionSample& s) { return s.pass; });
  }
};

/// F(d) = [(conj(K1^{-1}) d.d) (conj(K2^{-1}) d.d)]^{n/2} (principal branch),
/// passing when Re F > 0 and |Im F| <= Re F.
inline FConditionReport check_F_condition(const Eigen::MatrixXcd& K1inv, const Eigen::MatrixXcd& K2inv,
                                          std::span<const Eigen::VectorXd> directions, int n) {
  FConditionReport report;
  report.samples.reserve(directions.size());
  const Eigen::MatrixXcd A1 = K1inv.conjugate();
  const Eigen::MatrixXcd A2 = K2inv.conjugate();
  for (const auto& d : directions) {
    const Eigen::VectorXcd dc = d.cast<Complex>();
    const Complex base = (A1 * dc).cwiseProduct(dc).sum() * (A2 * dc).cwiseProduct(dc).sum();
    FConditionSample s;
    s.direction = d;
    s.F = principal_pow(base, 0.5 * n);
    s.pass = s.F.real() > 0.0 && std::abs(s.F.imag()) <= s.F.real();
    report.samples.push_back(std::move(s));
  }
  return report;
}

/// Uniform random unit vector in R^n.
template <class Rng>
Eigen::VectorXd random_unit_vector(int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd d(n);
  do {
    for (int i = 0; i < n; ++i) d[i] = normal(rng);
  } while (d.norm() < 1e-12);
  return d.normalized();
}

struct FMonteCarloResult {
  int samples = 0;
  int passed = 0;
  /// Largest |arg F| seen; the condition is |arg F| <= pi/4.
  double worst_arg = 0.0;
  double worst_k = 0.0;
  double pass_rate() const { return samples > 0 ? static_cast<double>(passed) / samples : 0.0; }
};

/// Draws isotropic coefficient pairs (shared mu_s, independent mu_a1, mu_a2,
/// all uniform in [1/lambda, lambda], B = 0), k uniform in [k_lo, k_hi] and a
/// random direction, and evaluates the phase condition on each draw.
inline FMonteCarloResult f_condition_monte_carlo(const AprioriBounds& b, double k_lo, double k_hi, int samples,
                                                 std::uint64_t seed) {
  if (!(k_lo > 0.0 && k_hi >= k_lo)) throw ValidationError("f_condition_monte_carlo: need 0 < k_lo <= k_hi");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coeff(1.0 / b.lambda, b.lambda);
  std::uniform_real_distribution<double> wave(k_lo, k_hi);
  const Eigen::MatrixXd B = Eigen::MatrixXd::Zero(b.n, b.n);
  FMonteCarloResult out;
  for (int i = 0; i < samples; ++i) {
    const double mu_s = coeff(rng), mu_a1 = coeff(rng), mu_a2 = coeff(rng);
    const double k = wave(rng);
    const Eigen::VectorXd d = random_unit_vector(b.n, rng);
    const auto s1 = tensor_from_values(mu_a1, mu_s, B, k);
    const auto s2 = tensor_from_values(mu_a2, mu_s, B, k);
    const auto report = check_F_condition(s1.Kinv, s2.Kinv, std::span<const Eigen::VectorXd>(&d, 1), b.n);
    const auto& s = report.samples.front();
    ++out.samples;
    if (s.pass) ++out.passed;
    const double a = std::abs(std::arg(s.F));
    if (a > out.worst_arg) {
      out.worst_arg = a;
      out.worst_k = k;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Real system form

/// Pointwise coefficients of the equivalent real system
///   -d_h (C^{hk}_{lj} d_k u^j) + q_{lj} u^j = 0,   l = 1, 2.
/// C is stored as a 2n x 2n matrix with row (l, h) -> l*n + h and column
/// (j, k) -> j*n + k, i.e. the blocks [[K_R, -K_I], [K_I, K_R]].
struct SystemTensor {
  int n = 3;
  Eigen::MatrixXd C;
  Eigen::Matrix2d q_mat;

  /// C^{hk}_{lj}, zero-based indices.
  double operator()(int h, int k, int l, int j) const { return C(l * n + h, j * n + k); }

  double quadratic_form(const Eigen::VectorXd& xi) const { return xi.dot(C * xi); }
};

inline SystemTensor build_system_tensor(const TensorSample& s) {
  const int n = static_cast<int>(s.K_R.rows());
  SystemTensor st;
  st.n = n;
  st.C.resize(2 * n, 2 * n);
  // C^{hk}_{lj} = K_R^{hk} delta_{lj} - K_I^{hk} (delta_{l1} delta_{j2} - delta_{l2} delta_{j1})
  st.C.topLeftCorner(n, n) = s.K_R;
  st.C.bottomRightCorner(n, n) = s.K_R;
  st.C.topRightCorner(n, n) = -s.K_I;
  st.C.bottomLeftCorner(n, n) = s.K_I;
  st.q_mat << s.q.real(), -s.q.imag(), s.q.imag(), s.q.real();
  return st;
}

/// Sampled strong-ellipticity range of C and positivity range of q_mat.
struct EllipticityEstimate {
  double C_min_ratio = std::numeric_limits<double>::infinity();
  double C_max_ratio = 0.0;
  double q_min_ratio = std::numeric_limits<double>::infinity();
  double q_max_ratio = 0.0;
  /// Smallest C2 with C2^{-1} |xi|^2 <= C xi.xi <= C2 |xi|^2 over the samples.
  double C2() const { return std::max(C_max_ratio, 1.0 / C_min_ratio); }
};

inline EllipticityEstimate estimate_strong_ellipticity(const DiffusionTensor& tensor, std::span<const Point> points,
                                                       std::uint64_t seed, int samples = 1000) {
  if (points.empty()) throw std::invalid_argument("estimate_strong_ellipticity: no points");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  EllipticityEstimate est;
  const int n = tensor.dim();
  for (int i = 0; i < samples; ++i) {
    const Point& x = points[pick(rng)];
    const SystemTensor st = build_system_tensor(tensor.at(x));
    Eigen::VectorXd xi(2 * n);
    for (int j = 0; j < 2 * n; ++j) xi[j] = normal(rng);
    const double rc = st.quadratic_form(xi) / xi.squaredNorm();
    est.C_min_ratio = std::min(est.C_min_ratio, rc);
    est.C_max_ratio = std::max(est.C_max_ratio, rc);
    const Eigen::Vector2d eta(normal(rng), normal(rng));
    const double rq = eta.dot(st.q_mat * eta) / eta.squaredNorm();
    est.q_min_ratio = std::min(est.q_min_ratio, rq);
    est.q_max_ratio = std::max(est.q_max_ratio, rq);
  }
  return est;
}

}  // namespace otstab
