// Command-line driver: k-ranges, validate, solve, dn, singular, stability, sweep.
// Exit codes: 0 success, 2 validation failure, 3 solver failure, 1 anything else.

#include "otstab/otstab.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace otstab;
using ordered_json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> divisions;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? parse_config(Json::object()) : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.divisions) cfg.divisions = *c.divisions;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (cfg.divisions < 1) throw ValidationError("--divisions must be >= 1");
  return cfg;
}

std::ofstream open_out(const ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  const fs::path path = fs::path(cfg.out_dir) / name;
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

void write_json(const ExperimentConfig& cfg, const std::string& name, const ordered_json& j) {
  auto os = open_out(cfg, name);
  os << j.dump(2) << '\n';
}

ordered_json bounds_json(const AprioriBounds& b) {
  return {{"lambda", b.lambda}, {"E", b.E}, {"calE", b.calE}, {"p", b.p}, {"n", b.n}};
}

int cmd_k_ranges(const Common& c) {
  const auto cfg = load(c);
  const KRanges r = admissible_k_ranges(cfg.bounds);
  ordered_json j = {{"bounds", bounds_json(cfg.bounds)}, {"k0", r.k0}, {"k0_tilde", r.k0_tilde}};
  if (cfg.bounds.n == 3) {
    const KRanges r3 = admissible_k_ranges_n3(cfg.bounds.lambda, cfg.bounds.calE);
    j["k0_n3_closed_form"] = r3.k0;
    j["k0_tilde_n3_closed_form"] = r3.k0_tilde;
  }
  std::cout << "k0," << format_double(r.k0) << "\nk0_tilde," << format_double(r.k0_tilde) << '\n';
  if (!c.out.empty()) write_json(cfg, "k_ranges.json", j);
  return 0;
}

int cmd_validate(const Common& c) {
  const auto cfg = load(c);
  const Mesh mesh = build_cube_mesh(cfg.divisions);
  const auto ks = resolve_wave_numbers(cfg);
  const auto report = validate_assumptions(cfg.base, detail::with_wave_number(cfg.bounds, ks.front()), mesh);
  std::ostringstream csv;
  csv << "check,observed_min,observed_max,bound,pass\n";
  for (const auto& ch : report.checks)
    csv << ch.name << ',' << format_double(ch.observed_min) << ',' << format_double(ch.observed_max) << ','
        << format_double(ch.bound) << ',' << (ch.pass ? 1 : 0) << '\n';
  std::cout << csv.str();
  if (!c.out.empty()) open_out(cfg, "validation.csv") << csv.str();
  return report.pass() ? 0 : 2;
}

int cmd_solve(const Common& c, const std::string& data) {
  const auto cfg = load(c);
  const double k = resolve_wave_numbers(cfg).front();
  const Mesh mesh = build_cube_mesh(cfg.divisions);
  const auto report = validate_assumptions(cfg.base, detail::with_wave_number(cfg.bounds, k), mesh);
  if (!report.pass()) throw ValidationError("coefficients violate " + report.failures().front());
  const DiscreteSystem sys = assemble(mesh, assemble_diffusion_tensor(cfg.base, k));
  std::function<Complex(const Point&)> g;
  if (data == "one") g = [](const Point&) { return Complex(1.0, 0.0); };
  else if (data == "x1") g = [](const Point& x) { return Complex(x[0], 0.0); };
  else throw ValidationError("unknown boundary data '" + data + "' (expected one or x1)");
  const FemSolution sol = solve_dirichlet(sys, boundary_trace(mesh, g));
  auto os = open_out(cfg, "solution.csv");
  os << "vertex,x,y,z,re,im\n";
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    const auto& x = mesh.vertices[v];
    os << v << ',' << format_double(x[0]) << ',' << format_double(x[1]) << ',' << format_double(x[2]) << ','
       << format_double(sol.u[static_cast<Eigen::Index>(v)].real()) << ','
       << format_double(sol.u[static_cast<Eigen::Index>(v)].imag()) << '\n';
  }
  write_json(cfg, "solution.json",
             {{"k", k}, {"divisions", cfg.divisions}, {"residual", sol.residual}, {"method", sol.stats.method},
              {"mesh_fingerprint", mesh_fingerprint(mesh)}});
  std::cout << "residual," << format_double(sol.residual) << '\n';
  return 0;
}

int cmd_dn(const Common& c) {
  const auto cfg = load(c);
  const double k = resolve_wave_numbers(cfg).front();
  const Mesh mesh = build_cube_mesh(cfg.divisions);
  const auto report = validate_assumptions(cfg.base, detail::with_wave_number(cfg.bounds, k), mesh);
  if (!report.pass()) throw ValidationError("coefficients violate " + report.failures().front());
  const DiscreteSystem sys = assemble(mesh, assemble_diffusion_tensor(cfg.base, k));
  const TraceSpace trace = build_trace_space(mesh);
  const DnMatrix dn = assemble_dn_matrix(sys, trace);
  auto os = open_out(cfg, "dn_matrix.csv");
  write_dn_csv(os, dn.Lambda);
  write_json(cfg, "dn_matrix.json", dn_sidecar(dn));
  std::cout << "boundary_dofs," << dn.Lambda.rows() << '\n';
  return 0;
}

int cmd_singular(const Common& c, double tau, int shells) {
  const auto cfg = load(c);
  const double k = resolve_wave_numbers(cfg).front();
  const Mesh mesh = build_cube_mesh(cfg.divisions);
  const auto tensor = assemble_diffusion_tensor(cfg.base, k);
  const BoundaryFrame frame = make_boundary_frame(mesh, Point(0.5, 0.5, 1.0), std::max(tau, 0.25));
  const Point z = offset_point(frame, tau);
  const LeadingTerm lead = make_leading_term(tensor, z);
  const auto corr = solve_correction(mesh, tensor, lead);

  std::vector<double> radii;
  for (int j = 0; j < shells; ++j) radii.push_back(std::ldexp(1.0, -j));
  std::vector<double> sup_w, sup_grad;
  field_shell_suprema(mesh, corr.w.u, z, radii, sup_w, sup_grad);
  // Keep the shells that contain sample points.
  std::vector<double> r_used, w_used, g_used;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (sup_w[i] > 0.0 && sup_grad[i] > 0.0) {
      r_used.push_back(radii[i]);
      w_used.push_back(sup_w[i]);
      g_used.push_back(sup_grad[i]);
    }
  }
  const double alpha = cfg.bounds.default_alpha();
  auto os = open_out(cfg, "decay.csv");
  os << "radius,sup_abs_w,sup_r_grad_w\n";
  for (std::size_t i = 0; i < r_used.size(); ++i)
    os << format_double(r_used[i]) << ',' << format_double(w_used[i]) << ',' << format_double(g_used[i]) << '\n';
  ordered_json j = {{"z", {z[0], z[1], z[2]}}, {"tau", tau}, {"k", k}, {"alpha", alpha},
                    {"interior_residual", corr.interior_residual}, {"shells", r_used.size()}};
  if (r_used.size() >= 4) {
    const DecayFit fit = decay_exponent_fit(r_used, w_used, alpha, 3, g_used);
    j["fitted_exponent"] = fit.fitted_exponent;
    j["grad_exponent"] = fit.grad_exponent;
    j["target_exponent"] = 2.0 - 3 + alpha;
    j["constants"] = fit.constants;
  } else {
    j["fitted_exponent"] = nullptr;
  }
  write_json(cfg, "decay.json", j);
  std::cout << "interior_residual," << format_double(corr.interior_residual) << '\n';
  return 0;
}

ordered_json fit_json(const std::vector<StabilityRecord>& recs) {
  try {
    const auto fit = fit_stability_constant(recs);
    return {{"C_hat", fit.C_hat}, {"r2", fit.r2}, {"slope", fit.slope}, {"records_used", fit.used}};
  } catch (const ValidationError& e) {
    return {{"error", e.what()}};
  }
}

int cmd_stability(const Common& c) {
  const auto cfg = load(c);
  const auto records = run_stability_experiment(cfg);
  auto os = open_out(cfg, "stability.csv");
  write_records_csv(os, records);
  ordered_json fits = ordered_json::array();
  for (double k : resolve_wave_numbers(cfg)) {
    std::vector<StabilityRecord> at_k;
    for (const auto& r : records)
      if (r.k == k) at_k.push_back(r);
    ordered_json entry = fit_json(at_k);
    entry["k"] = k;
    fits.push_back(entry);
  }
  const KRanges r = admissible_k_ranges(cfg.bounds);
  write_json(cfg, "stability.json",
             {{"divisions", cfg.divisions}, {"seed", cfg.seed}, {"k0", r.k0}, {"k0_tilde", r.k0_tilde}, {"fits", fits}});
  write_records_csv(std::cout, records);
  return 0;
}

int cmd_sweep(const Common& c) {
  const auto cfg = load(c);
  const SweepResult sweep = k_sweep(cfg);
  auto os = open_out(cfg, "sweep.csv");
  write_sweep_csv(os, sweep);
  std::vector<StabilityRecord> all;
  for (const auto& e : sweep.entries) all.insert(all.end(), e.records.begin(), e.records.end());
  auto rs = open_out(cfg, "sweep_records.csv");
  write_records_csv(rs, all);
  write_json(cfg, "sweep.json",
             {{"divisions", cfg.divisions}, {"seed", cfg.seed}, {"k0", sweep.k0}, {"k0_tilde", sweep.k0_tilde},
              {"f_samples", cfg.f_samples}});
  write_sweep_csv(std::cout, sweep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary stability toolkit for the diffusion approximation of optical tomography"};
  app.require_subcommand(1);
  Common common;
  std::string data = "one";
  double tau = 0.05;
  int shells = 6;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON configuration file");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", common.seed, "random seed");
    sub->add_option("--divisions", common.divisions, "cube mesh divisions per axis");
  };
  auto* k_ranges = app.add_subcommand("k-ranges", "print k0 and k0_tilde for the configured bounds");
  auto* validate = app.add_subcommand("validate", "check the a-priori assumptions on the mesh");
  auto* solve = app.add_subcommand("solve", "one Dirichlet solve with a field dump");
  solve->add_option("--data", data, "boundary data: one | x1");
  auto* dn = app.add_subcommand("dn", "export the D-N matrix");
  auto* singular = app.add_subcommand("singular", "singular-solution correction and decay fit");
  singular->add_option("--tau", tau, "offset of the singularity from the top face center");
  singular->add_option("--shells", shells, "number of dyadic shells");
  auto* stability = app.add_subcommand("stability", "full stability experiment");
  auto* sweep = app.add_subcommand("sweep", "wave-number sweep");
  for (auto* sub : {k_ranges, validate, solve, dn, singular, stability, sweep}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*k_ranges) return cmd_k_ranges(common);
    if (*validate) return cmd_validate(common);
    if (*solve) return cmd_solve(common, data);
    if (*dn) return cmd_dn(common);
    if (*singular) return cmd_singular(common, tau, shells);
    if (*stability) return cmd_stability(common);
    if (*sweep) return cmd_sweep(common);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const EvaluationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << " (iterations " << e.iterations() << ", residual "
              << format_double(e.residual()) << ")\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
