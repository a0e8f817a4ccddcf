/**
 * @file coupling.hpp
 * @brief Implicit-Euler time stepping of the coupled scheme: contact mechanics
 *        at the current pressures, closure update of porosity and aperture,
 *        linear backward-Euler flow solve, iterated to a fixed point on the
 *        cell and fracture-face pressures with Anderson acceleration.
 */
#pragma once

#include "fracsim/config.hpp"
#include "fracsim/contact.hpp"
#include "fracsim/flow.hpp"
#include "fracsim/mesh.hpp"

#include <map>
#include <set>

namespace fracsim {

struct TimeGrid {
  double T = 0;
  std::vector<double> t;  // t[0] = 0, ..., t[N] = T, strictly increasing
  static TimeGrid uniform(double T, int N);
  int steps() const { return (int)t.size() - 1; }
  double dt(int k) const { return t[k + 1] - t[k]; }
};

struct StepState {
  double t = 0;
  Vector p_full;            // flow unknowns (full layout)
  Vector u_full;            // displacement
  Vector lambda;            // contact multipliers per face
  ActiveSet set;
  Vector phi;               // cell porosities
  std::vector<double> df;   // face apertures
  Vector divu;              // cell-average divergence of u
};

struct SeriesRow {
  double t = 0;
  double mean_phi = 0, mean_df = 0, mean_pm = 0, mean_pf = 0;
  int outer_iters = 0;
};

struct EnergyTable {
  // L2-in-time norms over (0,T] and Linf-in-time norms over [0,T].
  double grad_pm = 0;        // ||grad_m p_m||_{L2 L2}
  double grad_pf_w = 0;      // ||d_f^{3/2} grad_f p_f||_{L2 L2}
  double jump_p = 0;         // sum over sides of ||[p]_a||_{L2 L2} (rms combined)
  double pm_over_sqrtM = 0;  // M^{-1/2} ||Pi_m p_m||_{Linf L2}
  double u_U0 = 0;           // max_t ||u(t)||_{U0}
  double df_l4 = 0;          // ||d_f||_{Linf L4}
  double lambda_dual = 0;    // ||lambda||_{L2(0,T; discrete dual)}
  std::array<double, 7> as_array() const {
    return {grad_pm, grad_pf_w, jump_p, pm_over_sqrtM, u_U0, df_l4, lambda_dual};
  }
  static const char* name(int i);
};

struct RunReport {
  double max_penetration = 0;
  double max_negative_lambda = 0;
  double max_complementarity = 0;
  double min_df_margin = std::numeric_limits<double>::infinity();  // min(df - d0)
  double max_closure_residual = 0;
  double max_step_balance_rel = 0;   // per-step fluid-volume balance
  double global_balance_rel = 0;     // over [0, T]
  double max_jump_scale = 0;         // max |[u]_n| seen (tolerance scaling)
  int max_outer_iters = 0;
  bool dt_halved = false;
};

struct SimResult {
  TimeGrid grid;
  std::vector<SeriesRow> series;      // one row per accepted step, k = 1..N
  EnergyTable energy;
  RunReport report;
  std::map<int, StepState> snapshots;  // step index -> state (0 = initial)
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Simulator {
 public:
  Simulator(const MixedDimMesh& mesh, const SimConfig& config);

  /// k = 0 contact solve at the interpolated initial pressures.
  StepState initial_state();

  /// One implicit step. Must be called after initial_state().
  StepState coupled_step(const StepState& prev, double t_next, int* outer_iters = nullptr,
                         bool accelerate = true);

  /// Full trajectory on the config's uniform grid, with snapshots at the
  /// requested step indices (0 = initial state).
  SimResult run(const std::set<int>& snapshot_steps = {});

  /// Linear backward-Euler flow solve with frozen geometry.
  Vector flow_step(const StepState& prev, const std::vector<double>& df_new,
                   const Vector& divu_new, double dt);

  /// Closure evaluation (5-field state update helper).
  void closure_update(const Vector& p_cells, const Vector& divu, const std::vector<double>& jump_n,
                      Vector& phi_out, std::vector<double>& df_out) const;

  SeriesRow means(const StepState& s) const;
  const RunReport& report() const { return report_; }

  const MixedDimMesh& mesh() const { return mesh_; }
  const SimConfig& config() const { return cfg_; }
  const FlowDofLayout& layout() const { return layout_; }
  const DisplacementSpace& space() const { return space_; }
  const ContactSolver& contact() const { return contact_; }
  FlowSystem& flow() { return flow_; }
  const std::vector<double>& d0() const { return d0_; }
  const HFVGeometry& geometry() const { return flow_.geometry(); }

  Vector cell_pressures(const Vector& p_full) const;
  Vector face_pressures(const Vector& p_full) const;

 private:
  const MixedDimMesh& mesh_;
  SimConfig cfg_;
  std::vector<double> d0_;
  FlowDofLayout layout_;
  FlowSystem flow_;
  DisplacementSpace space_;
  ContactSolver contact_;
  Vector body_;

  bool has_base_ = false;
  Vector p0_cells_, divu0_;
  Vector phi0_cells_;

  RunReport report_;
  double acc_sum_ = 0, flux_sum_ = 0;  // global balance bookkeeping
};

/// Displacement imposed on the "top" boundary tag at time t.
Vec2 top_boundary_displacement(double t, const SimConfig& cfg);

}  // namespace fracsim
