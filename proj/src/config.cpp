#include "fracsim/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace fracsim {

namespace {

using nlohmann::json;

double num_or_inf(const json& j, const char* key, double fallback, bool required = false) {
  if (!j.contains(key)) {
    if (required) throw ConfigError(std::string("missing field: ") + key);
    return fallback;
  }
  const auto& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw ConfigError(std::string("field ") + key + " must be a number or \"inf\"");
  }
  return v.get<double>();
}

FlowBC parse_flow_bc(const json& j) {
  FlowBC bc;
  std::string type = j.at("type").get<std::string>();
  if (type == "no_flux") {
    bc.type = FlowBC::Type::NoFlux;
  } else if (type == "dirichlet") {
    bc.type = FlowBC::Type::Dirichlet;
    bc.value = j.at("p_pa").get<double>();
  } else {
    throw ConfigError("unknown flow bc type: " + type);
  }
  return bc;
}

MechBC parse_mech_bc(const json& j) {
  MechBC bc;
  std::string type = j.at("type").get<std::string>();
  if (type == "free")
    bc.type = MechBC::Type::Free;
  else if (type == "clamped")
    bc.type = MechBC::Type::Clamped;
  else if (type == "roller_x")
    bc.type = MechBC::Type::RollerX;
  else if (type == "roller_y")
    bc.type = MechBC::Type::RollerY;
  else if (type == "prescribed") {
    bc.type = MechBC::Type::Prescribed;
    bc.value = Vec2(j.at("u_m").at(0).get<double>(), j.at("u_m").at(1).get<double>());
  } else if (type == "ramp") {
    bc.type = MechBC::Type::Ramp;
    bc.value = Vec2(j.at("u_m").at(0).get<double>(), j.at("u_m").at(1).get<double>());
    bc.ramp_end_s = j.at("ramp_end_s").get<double>();
  } else {
    throw ConfigError("unknown mech bc type: " + type);
  }
  return bc;
}

}  // namespace

SimConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  SimConfig cfg;
  const json& ph = j.at("physics");
  cfg.E = num_or_inf(ph, "E_pa", 0, true);
  cfg.nu = ph.at("nu").get<double>();
  cfg.b = ph.at("b").get<double>();
  cfg.M = num_or_inf(ph, "M_pa", 0, true);
  cfg.eta = ph.at("eta_pa_s").get<double>();
  if (ph.at("K_m_m2").is_array()) {
    const auto& K = ph.at("K_m_m2");
    if (K.at(0).is_array())
      cfg.Km << K.at(0).at(0).get<double>(), K.at(0).at(1).get<double>(),
          K.at(1).at(0).get<double>(), K.at(1).at(1).get<double>();
    else
      cfg.Km << K.at(0).get<double>(), 0, 0, K.at(1).get<double>();
  } else {
    double k = ph.at("K_m_m2").get<double>();
    cfg.Km << k, 0, 0, k;
  }
  cfg.Lambda_f = num_or_inf(ph, "Lambda_f", 0, true);
  cfg.lambda_df_dependent = ph.value("lambda_df_dependent", false);
  cfg.delta0 = ph.at("delta0_m").get<double>();
  cfg.a_per_m = ph.at("a_per_m").get<double>();
  cfg.phi0 = ph.at("phi0").get<double>();
  cfg.p0_m = ph.at("p0_m_pa").get<double>();
  cfg.p0_f = ph.at("p0_f_pa").get<double>();
  if (ph.contains("body_force_n_m3"))
    cfg.body_force =
        Vec2(ph["body_force_n_m3"].at(0).get<double>(), ph["body_force_n_m3"].at(1).get<double>());
  cfg.h_m = ph.value("h_m", 0.0);
  cfg.h_f = ph.value("h_f", 0.0);

  cfg.T = j.at("time").at("T_s").get<double>();
  cfg.steps = j.at("time").at("steps").get<int>();

  if (j.contains("bc"))
    for (auto it = j["bc"].begin(); it != j["bc"].end(); ++it) {
      if (it.value().contains("flow")) cfg.flow_bc[it.key()] = parse_flow_bc(it.value()["flow"]);
      if (it.value().contains("mech")) cfg.mech_bc[it.key()] = parse_mech_bc(it.value()["mech"]);
    }

  if (j.contains("solver")) {
    const json& s = j["solver"];
    cfg.fp_atol_pa = s.value("fp_atol_pa", cfg.fp_atol_pa);
    cfg.fp_rtol = s.value("fp_rtol", cfg.fp_rtol);
    cfg.fp_max_iter = s.value("fp_max_iter", cfg.fp_max_iter);
    cfg.anderson_depth = s.value("anderson_depth", cfg.anderson_depth);
    cfg.active_set_max_iter = s.value("active_set_max_iter", cfg.active_set_max_iter);
  }
  if (j.contains("output") && j["output"].contains("field_times_s"))
    for (const auto& t : j["output"]["field_times_s"]) cfg.field_times.push_back(t.get<double>());

  validate_config(cfg);
  return cfg;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

void validate_config(const SimConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
  if (!(cfg.E > 0)) fail("E_pa must be positive");
  if (!(cfg.nu > -1 && cfg.nu < 0.5)) fail("nu must lie in (-1, 1/2)");
  if (!(cfg.b >= 0 && cfg.b <= 1)) fail("b must lie in [0, 1]");
  if (!(cfg.M > 0)) fail("M_pa must be positive (or \"inf\")");
  if (!(cfg.eta > 0)) fail("eta_pa_s must be positive");
  if (std::abs(cfg.Km(0, 1) - cfg.Km(1, 0)) > 1e-14 * cfg.Km.norm())
    fail("K_m_m2 must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cfg.Km);
  if (!(es.eigenvalues().minCoeff() > 0)) fail("K_m_m2 must be positive definite");
  if (!(cfg.Lambda_f > 0)) fail("Lambda_f must be positive");
  if (!(cfg.delta0 > 0)) fail("delta0_m must be positive");
  if (!(cfg.a_per_m > 0)) fail("a_per_m must be positive");
  if (!(cfg.phi0 >= 0)) fail("phi0 must be nonnegative");
  if (!(cfg.T > 0)) fail("T_s must be positive");
  if (cfg.steps < 0) fail("steps must be nonnegative");
  if (!(cfg.fp_atol_pa > 0) || !(cfg.fp_rtol > 0)) fail("fixed-point tolerances must be positive");
  for (const auto& [tag, bc] : cfg.mech_bc)
    if (bc.type == MechBC::Type::Ramp && !(bc.ramp_end_s > 0))
      fail("ramp_end_s must be positive on tag " + tag);
}

}  // namespace fracsim
