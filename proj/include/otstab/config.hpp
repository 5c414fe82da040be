#pragma once

// JSON experiment configuration. Every key is optional; missing keys keep the
// defaults of ExperimentConfig. See README for the schema.

#include "otstab/coefficient_model.hpp"
#include "otstab/common.hpp"
#include "otstab/fields.hpp"
#include "otstab/stability.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace otstab {

using Json = nlohmann::json;

namespace detail {

inline Point json_point(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(std::string(what) + " must be an array of 3 numbers");
  return Point(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace detail

inline ScalarField parse_scalar_field(const Json& j) {
  if (j.is_number()) return ScalarField::constant(j.get<double>());
  const std::string type = j.value("type", "constant");
  if (type == "constant") return ScalarField::constant(j.at("value").get<double>());
  if (type == "affine") return ScalarField::affine(j.at("c0").get<double>(), detail::json_point(j.at("slope"), "slope"));
  if (type == "piecewise") {
    std::vector<BoxRegion> regions;
    for (const auto& r : j.at("regions")) {
      BoxRegion box;
      box.lo = detail::json_point(r.at("lo"), "lo");
      box.hi = detail::json_point(r.at("hi"), "hi");
      box.value = r.at("value").get<double>();
      regions.push_back(box);
    }
    return ScalarField::piecewise(j.at("fallback").get<double>(), std::move(regions));
  }
  throw ValidationError("unknown scalar field type '" + type + "'");
}

inline MatrixField parse_matrix_field(const Json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("B must be a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != n) throw ValidationError("B must be square");
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = j[r][c].get<double>();
  }
  return MatrixField::constant(m);
}

inline WaveNumberSpec parse_wave_number(const Json& j) {
  WaveNumberSpec spec;
  if (j.is_number()) {
    spec.ref = WaveNumberSpec::Ref::absolute;
    spec.scale = j.get<double>();
    return spec;
  }
  const std::string ref = j.value("ref", "absolute");
  spec.scale = j.value("scale", 1.0);
  if (ref == "absolute") spec.ref = WaveNumberSpec::Ref::absolute;
  else if (ref == "k0") spec.ref = WaveNumberSpec::Ref::k0;
  else if (ref == "k0_tilde") spec.ref = WaveNumberSpec::Ref::k0_tilde;
  else if (ref == "gap") spec.ref = WaveNumberSpec::Ref::gap;
  else throw ValidationError("unknown wave-number reference '" + ref + "'");
  return spec;
}

inline ExperimentConfig parse_config(const Json& root) {
  ExperimentConfig cfg;
  try {
    if (root.contains("bounds")) {
      const Json& b = root["bounds"];
      cfg.bounds.lambda = b.value("lambda", cfg.bounds.lambda);
      cfg.bounds.E = b.value("E", cfg.bounds.E);
      cfg.bounds.calE = b.value("calE", cfg.bounds.calE);
      cfg.bounds.p = b.value("p", cfg.bounds.p);
      cfg.bounds.n = b.value("n", cfg.bounds.n);
      cfg.bounds.k = b.value("k", cfg.bounds.k);
      cfg.bounds.r0 = b.value("r0", cfg.bounds.r0);
      cfg.bounds.L_lip = b.value("L_lip", cfg.bounds.L_lip);
      cfg.bounds.diam = b.value("diam", cfg.bounds.diam);
    }
    if (root.contains("coefficients")) {
      const Json& c = root["coefficients"];
      if (c.contains("mu_a")) cfg.base.mu_a = parse_scalar_field(c["mu_a"]);
      if (c.contains("mu_s")) cfg.base.mu_s = parse_scalar_field(c["mu_s"]);
      if (c.contains("B")) cfg.base.B = parse_matrix_field(c["B"]);
    }
    if (root.contains("mesh")) cfg.divisions = root["mesh"].value("divisions", cfg.divisions);
    if (root.contains("experiment")) {
      const Json& e = root["experiment"];
      if (e.contains("k_values")) {
        cfg.k_values.clear();
        for (const auto& k : e["k_values"]) cfg.k_values.push_back(parse_wave_number(k));
      }
      if (e.contains("amplitudes")) cfg.perturbation.amplitudes = e["amplitudes"].get<std::vector<double>>();
      if (e.contains("perturbation")) {
        const Json& p = e["perturbation"];
        const std::string kind = p.value("type", "bump");
        if (kind == "bump") cfg.perturbation.kind = PerturbationSpec::Kind::bump;
        else if (kind == "constant") cfg.perturbation.kind = PerturbationSpec::Kind::constant;
        else throw ValidationError("unknown perturbation type '" + kind + "'");
        if (p.contains("center")) cfg.perturbation.center = detail::json_point(p["center"], "perturbation.center");
        cfg.perturbation.radius = p.value("radius", cfg.perturbation.radius);
      }
      cfg.seed = e.value("seed", cfg.seed);
      cfg.f_samples = e.value("f_samples", cfg.f_samples);
      cfg.out_dir = e.value("out_dir", cfg.out_dir);
    }
  } catch (const Json::exception& ex) {
    throw ValidationError(std::string("config: ") + ex.what());
  }
  if (cfg.divisions < 1) throw ValidationError("config: mesh.divisions must be >= 1");
  if (cfg.base.dim() != cfg.bounds.n) throw ValidationError("config: B dimension does not match bounds.n");
  cfg.bounds.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  Json root;
  try {
    in >> root;
  } catch (const Json::exception& ex) {
    throw ValidationError("config '" + path + "': " + ex.what());
  }
  return parse_config(root);
}

}  // namespace otstab
