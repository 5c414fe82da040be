#pragma once

#include "otstab/common.hpp"

#include <cmath>

namespace otstab {

/// True when z lies on the cut of the principal logarithm (negative real axis, zero included).
inline bool on_branch_cut(Complex z) { return z.imag() == 0.0 && z.real() <= 0.0; }

/// Principal-branch power z^s = exp(s (log|z| + i arg z)), arg z in (-pi, pi).
/// Arguments on the negative real axis are rejected rather than assigned arg = pi.
inline Complex principal_pow(Complex z, double s) {
  if (on_branch_cut(z)) {
    throw BranchCutError("principal power of " + format_double(z.real()) + " + " +
                         format_double(z.imag()) + "i: argument lies on the branch cut");
  }
  return std::exp(s * Complex(std::log(std::abs(z)), std::arg(z)));
}

}  // namespace otstab
