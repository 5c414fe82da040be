#pragma once

// Scalar and matrix coefficient fields evaluated pointwise.

#include "otstab/common.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace otstab {

/// Axis-aligned box [lo, hi] carrying a constant value.
struct BoxRegion {
  Point lo = Point::Zero();
  Point hi = Point::Ones();
  double value = 0.0;

  bool contains(const Point& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
};

/// Immutable real scalar field. Copies share the underlying callable.
class ScalarField {
 public:
  using Fn = std::function<double(const Point&)>;

  ScalarField() : ScalarField(constant(0.0)) {}
  ScalarField(Fn fn, std::string description)
      : fn_(std::make_shared<const Fn>(std::move(fn))), description_(std::move(description)) {}

  static ScalarField constant(double c) {
    return ScalarField([c](const Point&) { return c; }, "constant(" + format_double(c) + ")");
  }

  static ScalarField affine(double c0, const Point& slope) {
    return ScalarField([c0, slope](const Point& x) { return c0 + slope.dot(x); },
                       "affine(" + format_double(c0) + ", " + format_point(slope) + ")");
  }

  /// First matching region wins; `fallback` elsewhere.
  static ScalarField piecewise(double fallback, std::vector<BoxRegion> regions) {
    const std::size_t count = regions.size();
    return ScalarField(
        [fallback, regions = std::move(regions)](const Point& x) {
          for (const auto& r : regions)
            if (r.contains(x)) return r.value;
          return fallback;
        },
        "piecewise(" + format_double(fallback) + ", " + std::to_string(count) + " regions)");
  }

  /// C-infinity mollifier exp(1 - 1/(1 - t^2)), t = |x - center| / radius.
  /// Equals 1 at the center and vanishes outside the ball.
  static ScalarField bump(const Point& center, double radius) {
    return ScalarField(
        [center, radius](const Point& x) {
          const double t = (x - center).norm() / radius;
          if (t >= 1.0) return 0.0;
          return std::exp(1.0 - 1.0 / (1.0 - t * t));
        },
        "bump(" + format_point(center) + ", " + format_double(radius) + ")");
  }

  double operator()(const Point& x) const { return (*fn_)(x); }

  const std::string& description() const { return description_; }

  ScalarField scaled(double a) const {
    auto fn = fn_;
    return ScalarField([fn, a](const Point& x) { return a * (*fn)(x); },
                       format_double(a) + " * " + description_);
  }

  friend ScalarField operator+(const ScalarField& f, const ScalarField& g) {
    auto a = f.fn_;
    auto b = g.fn_;
    return ScalarField([a, b](const Point& x) { return (*a)(x) + (*b)(x); },
                       f.description_ + " + " + g.description_);
  }

  /// Central-difference gradient.
  Point gradient(const Point& x, double step = 1e-6) const {
    Point g;
    for (int i = 0; i < 3; ++i) {
      Point xp = x, xm = x;
      xp[i] += step;
      xm[i] -= step;
      g[i] = ((*fn_)(xp) - (*fn_)(xm)) / (2.0 * step);
    }
    return g;
  }

 private:
  std::shared_ptr<const Fn> fn_;
  std::string description_;
};

/// Immutable real symmetric matrix field (the anisotropy B).
class MatrixField {
 public:
  using Fn = std::function<Eigen::MatrixXd(const Point&)>;

  MatrixField() : MatrixField(constant(Eigen::MatrixXd::Zero(3, 3))) {}
  MatrixField(Fn fn, int dim, std::string description)
      : fn_(std::make_shared<const Fn>(std::move(fn))), dim_(dim), description_(std::move(description)) {}

  static MatrixField constant(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw ValidationError("matrix field must be square");
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-14 * (1.0 + m.cwiseAbs().maxCoeff()))
      throw ValidationError("matrix field must be symmetric");
    return MatrixField([m](const Point&) { return m; }, static_cast<int>(m.rows()), "constant matrix");
  }

  Eigen::MatrixXd operator()(const Point& x) const { return (*fn_)(x); }
  int dim() const { return dim_; }
  const std::string& description() const { return description_; }

 private:
  std::shared_ptr<const Fn> fn_;
  int dim_ = 3;
  std::string description_;
};

}  // namespace otstab
