/**
 * @file config.hpp
 * @brief Simulation configuration: physics constants, boundary conditions,
 *        time grid, solver tolerances. JSON field names carry SI units.
 */
#pragma once

#include "fracsim/flow.hpp"
#include "fracsim/mech.hpp"

#include <string>
#include <vector>

namespace fracsim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  // physics
  double E = 0;          // Pa
  double nu = 0;
  double b = 0;
  double M = 0;          // Pa; +inf means incompressible rock (1/M = 0)
  double eta = 0;        // Pa s
  Eigen::Matrix2d Km = Eigen::Matrix2d::Zero();  // m^2
  double Lambda_f = 0;   // m/(Pa s)
  bool lambda_df_dependent = false;
  double delta0 = 0;     // m
  double a_per_m = 0;    // 1/m
  double phi0 = 0;
  double p0_m = 0;       // Pa
  double p0_f = 0;       // Pa
  Vec2 body_force = Vec2::Zero();  // N/m^3
  double h_m = 0;        // 1/s (volumetric source density)
  double h_f = 0;        // m/s (fracture source density)

  // time
  double T = 0;          // s
  int steps = 0;

  FlowBCTable flow_bc;
  MechBCTable mech_bc;

  // solver
  double fp_atol_pa = 1.0;
  double fp_rtol = 1e-8;
  int fp_max_iter = 100;
  int anderson_depth = 5;
  int active_set_max_iter = 50;

  // output
  std::vector<double> field_times;

  double inv_M() const { return std::isinf(M) ? 0.0 : 1.0 / M; }
  StressParams stress() const { return {E, nu, b}; }
  FlowCoeffs flow_coeffs() const { return {Km, eta, Lambda_f, lambda_df_dependent}; }
};

SimConfig load_config(const std::string& path);
SimConfig parse_config(const std::string& json_text);

/// Checks the model assumptions (parameter ranges, SPD permeability, time grid);
/// throws ConfigError naming the offending field.
void validate_config(const SimConfig& cfg);

}  // namespace fracsim
