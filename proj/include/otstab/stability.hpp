#pragma once

// End-to-end boundary stability experiment: coefficient pairs differing by a
// boundary-visible perturbation of mu_a, D-N differences in the
// H^{1/2} -> H^{-1/2} norm, the ratio against the L-infinity boundary
// difference, and sweeps over the wave number.

#include "otstab/coefficient_model.hpp"
#include "otstab/common.hpp"
#include "otstab/dn_map.hpp"
#include "otstab/elliptic_solver.hpp"
#include "otstab/fields.hpp"
#include "otstab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace otstab {

/// A wave number either given directly or as a multiple of k0, k0_tilde or
/// the midpoint of the gap between them.
struct WaveNumberSpec {
  enum class Ref { absolute, k0, k0_tilde, gap };
  Ref ref = Ref::k0;
  double scale = 0.5;

  double resolve(const KRanges& r) const {
    switch (ref) {
      case Ref::absolute: return scale;
      case Ref::k0: return scale * r.k0;
      case Ref::k0_tilde: return scale * r.k0_tilde;
      case Ref::gap: return scale * 0.5 * (r.k0 + r.k0_tilde);
    }
    return scale;
  }
};

struct PerturbationSpec {
  enum class Kind { bump, constant };
  Kind kind = Kind::bump;
  Point center = Point(0.5, 0.5, 1.0);
  double radius = 0.3;
  std::vector<double> amplitudes{0.025, 0.05, 0.1};

  /// Unit-amplitude profile chi.
  ScalarField profile() const {
    return kind == Kind::bump ? ScalarField::bump(center, radius) : ScalarField::constant(1.0);
  }
};

struct ExperimentConfig {
  int divisions = 8;
  AprioriBounds bounds;
  OpticalCoefficients base;
  PerturbationSpec perturbation;
  std::vector<WaveNumberSpec> k_values{WaveNumberSpec{}};
  std::string out_dir = "out";
  std::uint64_t seed = 20240607;
  /// Monte-Carlo draws for the phase-condition pass rate in sweeps.
  int f_samples = 10000;
};

struct StabilityRecord {
  double k = 0.0;
  bool k_in_range = false;
  double amplitude = 0.0;
  double linf_boundary_diff = 0.0;
  double dn_diff_norm = 0.0;
  std::optional<double> ratio;
  double h = 0.0;
};

/// Largest |mu1 - mu2| over the boundary sample points; ties (relative
/// 1e-12) go to the lexicographically smallest point.
struct BoundaryPeak {
  Point x0 = Point::Zero();
  double value = 0.0;
};

inline BoundaryPeak probe_boundary_peak(const ScalarField& mu1, const ScalarField& mu2, const Mesh& mesh) {
  const auto pts = boundary_sample_points(mesh);
  if (pts.empty()) throw ValidationError("probe_boundary_peak: mesh has no boundary");
  std::vector<double> vals(pts.size());
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    vals[i] = std::abs(mu1(pts[i]) - mu2(pts[i]));
    best = std::max(best, vals[i]);
  }
  const double cutoff = best - 1e-12 * best;
  BoundaryPeak peak;
  bool found = false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (vals[i] < cutoff) continue;
    const auto lex_less = [](const Point& a, const Point& b) {
      return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
    };
    if (!found || lex_less(pts[i], peak.x0)) {
      peak.x0 = pts[i];
      found = true;
    }
  }
  peak.value = best;
  return peak;
}

namespace detail {

inline std::string cell_label(double k, double amplitude) {
  return "(k = " + format_double(k) + ", amplitude = " + format_double(amplitude) + ")";
}

inline AprioriBounds with_wave_number(AprioriBounds b, double k) {
  b.k = k;
  return b;
}

}  // namespace detail

/// Everything fixed by the mesh, shared by all cells of an experiment.
struct ExperimentContext {
  std::shared_ptr<const Mesh> mesh;
  TraceSpace trace;
  KRanges ranges;

  static ExperimentContext build(const ExperimentConfig& cfg) {
    ExperimentContext ctx;
    ctx.mesh = std::make_shared<const Mesh>(build_cube_mesh(cfg.divisions));
    ctx.trace = build_trace_space(*ctx.mesh);
    ctx.ranges = admissible_k_ranges(cfg.bounds);
    return ctx;
  }
};

inline OpticalCoefficients perturbed(const ExperimentConfig& cfg, double amplitude) {
  OpticalCoefficients c = cfg.base;
  c.mu_a = cfg.base.mu_a + cfg.perturbation.profile().scaled(amplitude);
  return c;
}

/// Records for one wave number, one per amplitude, in configuration order.
inline std::vector<StabilityRecord> stability_records_for_k(const ExperimentConfig& cfg, const ExperimentContext& ctx,
                                                            double k) {
  const Mesh& mesh = *ctx.mesh;
  const AprioriBounds bounds = detail::with_wave_number(cfg.bounds, k);
  const auto base_report = validate_assumptions(cfg.base, bounds, mesh);
  if (!base_report.pass())
    throw ValidationError("base coefficients violate " + base_report.failures().front() + " " + detail::cell_label(k, 0.0));

  auto tensor1 = std::make_shared<const DiffusionTensor>(assemble_diffusion_tensor(cfg.base, k));
  const DiscreteSystem sys1 = assemble(ctx.mesh, tensor1);
  const DnMatrix L1 = assemble_dn_matrix(sys1, ctx.trace);

  std::vector<StabilityRecord> out;
  for (double a : cfg.perturbation.amplitudes) {
    const std::string where = detail::cell_label(k, a);
    StabilityRecord rec;
    rec.k = k;
    rec.k_in_range = ctx.ranges.admissible(k);
    rec.amplitude = a;
    rec.h = mesh.h;
    const OpticalCoefficients c2 = perturbed(cfg, a);
    try {
      const auto report = validate_assumptions(c2, bounds, mesh);
      if (!report.pass()) throw ValidationError("perturbed coefficients violate " + report.failures().front());
      rec.linf_boundary_diff = probe_boundary_peak(cfg.base.mu_a, c2.mu_a, mesh).value;
      if (a != 0.0) {
        auto tensor2 = std::make_shared<const DiffusionTensor>(assemble_diffusion_tensor(c2, k));
        const DiscreteSystem sys2 = assemble(ctx.mesh, tensor2);
        const DnMatrix L2 = assemble_dn_matrix(sys2, ctx.trace);
        rec.dn_diff_norm = dn_operator_norm(Eigen::MatrixXcd(L1.Lambda - L2.Lambda), ctx.trace);
      }
    } catch (const SolverError& e) {
      throw SolverError(std::string(e.what()) + " " + where, e.iterations(), e.residual());
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(e.what()) + " " + where);
    }
    if (rec.dn_diff_norm > 0.0) rec.ratio = rec.linf_boundary_diff / rec.dn_diff_norm;
    out.push_back(rec);
  }
  return out;
}

inline std::vector<double> resolve_wave_numbers(const ExperimentConfig& cfg) {
  if (cfg.k_values.empty()) throw ValidationError("experiment needs at least one wave number");
  const KRanges r = admissible_k_ranges(cfg.bounds);
  std::vector<double> ks;
  for (const auto& spec : cfg.k_values) {
    const double k = spec.resolve(r);
    if (!(k > 0.0) || !std::isfinite(k)) throw ValidationError("wave number must be positive, got " + format_double(k));
    ks.push_back(k);
  }
  return ks;
}

inline std::vector<StabilityRecord> run_stability_experiment(const ExperimentConfig& cfg) {
  const auto ks = resolve_wave_numbers(cfg);
  const ExperimentContext ctx = ExperimentContext::build(cfg);
  std::vector<StabilityRecord> out;
  for (double k : ks) {
    auto recs = stability_records_for_k(cfg, ctx, k);
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

struct StabilityFit {
  double C_hat = 0.0;
  double r2 = 0.0;
  /// Slope of linf against dn_diff_norm through the origin.
  double slope = 0.0;
  int used = 0;
};

/// C_hat = largest ratio; r2 of the least-squares line linf = slope * dn
/// through the origin, measured against the mean of linf.
inline StabilityFit fit_stability_constant(const std::vector<StabilityRecord>& records) {
  std::vector<const StabilityRecord*> use;
  for (const auto& r : records)
    if (r.dn_diff_norm > 0.0 && r.ratio) use.push_back(&r);
  if (use.size() < 3)
    throw ValidationError("fit_stability_constant: need at least 3 records with positive dn_diff_norm, got " +
                          std::to_string(use.size()));
  StabilityFit fit;
  fit.used = static_cast<int>(use.size());
  double sxy = 0.0, sxx = 0.0, mean = 0.0;
  for (const auto* r : use) {
    fit.C_hat = std::max(fit.C_hat, *r->ratio);
    sxy += r->dn_diff_norm * r->linf_boundary_diff;
    sxx += r->dn_diff_norm * r->dn_diff_norm;
    mean += r->linf_boundary_diff;
  }
  mean /= static_cast<double>(use.size());
  fit.slope = sxy / sxx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto* r : use) {
    const double e = r->linf_boundary_diff - fit.slope * r->dn_diff_norm;
    ss_res += e * e;
    ss_tot += (r->linf_boundary_diff - mean) * (r->linf_boundary_diff - mean);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

// ---------------------------------------------------------------------------
// Wave-number sweep

struct SweepEntry {
  double k = 0.0;
  bool in_range = false;
  /// Phase-condition pass rate for the configured pair (base, largest amplitude).
  double f_pass_rate = 0.0;
  std::vector<StabilityRecord> records;
  std::optional<StabilityFit> fit;
};

struct SweepResult {
  double k0 = 0.0;
  double k0_tilde = 0.0;
  std::vector<SweepEntry> entries;
};

/// Pass rate of the phase condition at random mesh quadrature points and
/// random directions, pairing the base coefficients with perturbation `amplitude`.
inline double f_pass_rate_for_pair(const ExperimentConfig& cfg, const Mesh& mesh, double k, double amplitude) {
  const auto t1 = assemble_diffusion_tensor(cfg.base, k);
  const auto t2 = assemble_diffusion_tensor(perturbed(cfg, amplitude), k);
  const auto pts = volume_sample_points(mesh);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  int passed = 0;
  for (int i = 0; i < cfg.f_samples; ++i) {
    const Point& x = pts[pick(rng)];
    const Eigen::VectorXd d = random_unit_vector(t1.dim(), rng);
    const auto rep = check_F_condition(t1.at(x).Kinv, t2.at(x).Kinv, std::span<const Eigen::VectorXd>(&d, 1), t1.dim());
    if (rep.pass()) ++passed;
  }
  return cfg.f_samples > 0 ? static_cast<double>(passed) / cfg.f_samples : 0.0;
}

inline SweepResult k_sweep(const ExperimentConfig& cfg) {
  const auto ks = resolve_wave_numbers(cfg);
  const ExperimentContext ctx = ExperimentContext::build(cfg);
  SweepResult out;
  out.k0 = ctx.ranges.k0;
  out.k0_tilde = ctx.ranges.k0_tilde;
  const double a_max = cfg.perturbation.amplitudes.empty()
                           ? 0.0
                           : *std::max_element(cfg.perturbation.amplitudes.begin(), cfg.perturbation.amplitudes.end());
  for (double k : ks) {
    SweepEntry e;
    e.k = k;
    e.in_range = ctx.ranges.admissible(k);
    e.f_pass_rate = f_pass_rate_for_pair(cfg, *ctx.mesh, k, a_max);
    e.records = stability_records_for_k(cfg, ctx, k);
    try {
      e.fit = fit_stability_constant(e.records);
    } catch (const ValidationError&) {
      e.fit.reset();
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline void write_records_csv(std::ostream& os, const std::vector<StabilityRecord>& records) {
  os << "k,k_in_range,amplitude,linf_boundary_diff,dn_diff_norm,ratio,h\n";
  for (const auto& r : records) {
    os << format_double(r.k) << ',' << (r.k_in_range ? 1 : 0) << ',' << format_double(r.amplitude) << ','
       << format_double(r.linf_boundary_diff) << ',' << format_double(r.dn_diff_norm) << ','
       << (r.ratio ? format_double(*r.ratio) : std::string()) << ',' << format_double(r.h) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& sweep) {
  os << "k,in_range,f_pass_rate,C_hat,r2\n";
  for (const auto& e : sweep.entries) {
    os << format_double(e.k) << ',' << (e.in_range ? 1 : 0) << ',' << format_double(e.f_pass_rate) << ','
       << (e.fit ? format_double(e.fit->C_hat) : std::string()) << ',' << (e.fit ? format_double(e.fit->r2) : std::string())
       << '\n';
  }
}

}  // namespace otstab
