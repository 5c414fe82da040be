#pragma once

// Shared aliases, error types and small numeric helpers.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace otstab {

using Complex = std::complex<double>;
using Point = Eigen::Vector3d;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A coefficient field produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Inputs violate an a-priori assumption or a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A complex power was requested on the negative real axis.
class BranchCutError : public Error {
 public:
  using Error::Error;
};

/// Linear solve did not reach the requested tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}

  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// Round-trip decimal formatting used by every text writer.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_point(const Point& x) {
  return "(" + format_double(x[0]) + ", " + format_double(x[1]) + ", " + format_double(x[2]) + ")";
}

/// 64-bit FNV-1a, used for mesh and config fingerprints.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace otstab
