#include "fracsim/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace fracsim {

TimeGrid TimeGrid::uniform(double T, int N) {
  TimeGrid g;
  g.T = T;
  g.t.resize(N + 1);
  for (int k = 0; k <= N; ++k) g.t[k] = T * double(k) / std::max(1, N);
  if (N == 0) g.t = {0.0};
  return g;
}

const char* EnergyTable::name(int i) {
  static const char* names[7] = {"grad_pm",       "grad_pf_weighted", "jump_p", "pm_over_sqrtM",
                                 "u_U0",          "df_L4",            "lambda_dual"};
  return names[i];
}

namespace {

// Type-II Anderson mixing on the fixed-point residual history.
class AndersonMixer {
 public:
  explicit AndersonMixer(int depth) : depth_(std::max(0, depth)) {}

  Vector next(const Vector& x, const Vector& gx) {
    Vector f = gx - x;
    if (depth_ == 0) return gx;
    xs_.push_back(x);
    gs_.push_back(gx);
    fs_.push_back(f);
    if ((int)xs_.size() > depth_ + 1) {
      xs_.pop_front();
      gs_.pop_front();
      fs_.pop_front();
    }
    const int m = (int)xs_.size() - 1;
    if (m < 1) return gx;
    Eigen::MatrixXd dF(f.size(), m), dG(f.size(), m);
    for (int j = 0; j < m; ++j) {
      dF.col(j) = fs_[j + 1] - fs_[j];
      dG.col(j) = gs_[j + 1] - gs_[j];
    }
    Eigen::VectorXd gamma = dF.colPivHouseholderQr().solve(f);
    if (!gamma.allFinite()) return gx;
    return gx - dG * gamma;
  }

 private:
  int depth_;
  std::deque<Vector> xs_, gs_, fs_;
};

}  // namespace

Simulator::Simulator(const MixedDimMesh& mesh, const SimConfig& config)
    : mesh_(mesh),
      cfg_(config),
      d0_(eval_d0(ApertureLaw::from_mesh(mesh, config.delta0, config.a_per_m), mesh)),
      layout_(build_flow_layout(mesh, config.flow_bc)),
      flow_(mesh, layout_, config.flow_coeffs()),
      space_(build_p2_space(mesh, cfg_.mech_bc)),
      contact_(space_, config.stress(), config.active_set_max_iter) {
  space_.bc = &cfg_.mech_bc;
  if (cfg_.body_force.norm() > 0) {
    Vec2 fb = cfg_.body_force;
    body_ = body_load(space_, [fb](const Vec2&) { return fb; });
  }
}

Vector Simulator::cell_pressures(const Vector& p_full) const {
  return p_full.head(mesh_.tris.size());
}

Vector Simulator::face_pressures(const Vector& p_full) const {
  const int nf = (int)mesh_.fracture_faces.size();
  Vector pf(nf);
  for (int f = 0; f < nf; ++f) pf[f] = p_full[layout_.face_dof(f)];
  return pf;
}

StepState Simulator::initial_state() {
  report_ = RunReport{};
  acc_sum_ = 0;
  flux_sum_ = 0;

  StepState s;
  s.t = 0;
  double pm0 = cfg_.p0_m, pf0 = cfg_.p0_f;
  s.p_full = interpolate_initial(
      mesh_, layout_, [pm0](const Vec2&) { return pm0; }, [pf0](const Vec2&) { return pf0; });

  auto sol = contact_.solve(cell_pressures(s.p_full), face_pressures(s.p_full), 0.0, {},
                            body_.size() ? &body_ : nullptr);
  s.u_full = sol.u_full;
  s.lambda = sol.lambda;
  s.set = sol.set;

  const auto& D = contact_.div_cells();
  Vector div_int = D * s.u_full;
  s.divu.resize(mesh_.tris.size());
  for (int t = 0; t < (int)mesh_.tris.size(); ++t) s.divu[t] = div_int[t] / mesh_.tri_area(t);

  s.phi = Vector::Constant(mesh_.tris.size(), cfg_.phi0);
  s.df.resize(mesh_.fracture_faces.size());
  for (int f = 0; f < (int)mesh_.fracture_faces.size(); ++f) s.df[f] = d0_[f] - sol.jump_n[f];

  p0_cells_ = cell_pressures(s.p_full);
  divu0_ = s.divu;
  phi0_cells_ = s.phi;
  has_base_ = true;

  report_.max_penetration = std::max(report_.max_penetration, sol.report.max_penetration);
  report_.max_negative_lambda =
      std::max(report_.max_negative_lambda, sol.report.max_negative_lambda);
  report_.max_complementarity =
      std::max(report_.max_complementarity, sol.report.max_complementarity);
  for (size_t f = 0; f < s.df.size(); ++f)
    report_.min_df_margin = std::min(report_.min_df_margin, s.df[f] - d0_[f]);
  for (double j : sol.jump_n) report_.max_jump_scale = std::max(report_.max_jump_scale, std::abs(j));
  return s;
}

void Simulator::closure_update(const Vector& p_cells, const Vector& divu,
                               const std::vector<double>& jump_n, Vector& phi_out,
                               std::vector<double>& df_out) const {
  if (!has_base_) throw SolverError("closure_update before initial_state()");
  phi_out = phi0_cells_ + cfg_.b * (divu - divu0_) + cfg_.inv_M() * (p_cells - p0_cells_);
  df_out.resize(jump_n.size());
  for (size_t f = 0; f < jump_n.size(); ++f) df_out[f] = d0_[f] - jump_n[f];
}

Vector Simulator::flow_step(const StepState& prev, const std::vector<double>& df_new,
                            const Vector& divu_new, double dt) {
  flow_.prepare(cfg_.inv_M() / dt);
  Vector rhs = Vector::Zero(layout_.n_red);
  const double invM = cfg_.inv_M();
  for (int t = 0; t < (int)mesh_.tris.size(); ++t) {
    double m = mesh_.tri_area(t);
    double q = m * cfg_.h_m - (cfg_.b / dt) * m * (divu_new[t] - prev.divu[t]) +
               (invM / dt) * m * prev.p_full[layout_.cell_dof(t)];
    rhs[layout_.full_to_red[layout_.cell_dof(t)]] = q;
  }
  for (int f = 0; f < (int)mesh_.fracture_faces.size(); ++f) {
    double m = mesh_.fracture_faces[f].length;
    rhs[layout_.full_to_red[layout_.face_dof(f)]] =
        m * cfg_.h_f - (m / dt) * (df_new[f] - prev.df[f]);
  }
  return flow_.solve(rhs, df_new);
}

StepState Simulator::coupled_step(const StepState& prev, double t_next, int* outer_iters,
                                  bool accelerate) {
  if (!has_base_) throw SolverError("coupled_step before initial_state()");
  const double dt = t_next - prev.t;
  if (!(dt > 0)) throw SolverError("nonpositive time step");
  flow_.prepare(cfg_.inv_M() / dt);

  const int nc = (int)mesh_.tris.size();
  const int nf = (int)mesh_.fracture_faces.size();
  auto stack = [&](const Vector& p_full) {
    Vector s(nc + nf);
    s.head(nc) = p_full.head(nc);
    for (int f = 0; f < nf; ++f) s[nc + f] = p_full[layout_.face_dof(f)];
    return s;
  };

  // Mechanics is independent of the pressures in the fully decoupled case:
  // the map is constant and one sweep lands on the fixed point.
  const bool one_way = (cfg_.b == 0.0 && nf == 0);

  Vector x = stack(prev.p_full);
  AndersonMixer mixer(accelerate ? cfg_.anderson_depth : 0);
  ActiveSet set = prev.set;

  Vector p_new_full;
  ContactSolution csol;
  Vector divu_new(nc);
  std::vector<double> df_new(nf);
  bool converged = false;
  int it = 0;
  for (it = 1; it <= cfg_.fp_max_iter; ++it) {
    csol = contact_.solve(x.head(nc), x.tail(nf), t_next, set, body_.size() ? &body_ : nullptr);
    set = csol.set;
    Vector div_int = contact_.div_cells() * csol.u_full;
    for (int t = 0; t < nc; ++t) divu_new[t] = div_int[t] / mesh_.tri_area(t);
    for (int f = 0; f < nf; ++f) df_new[f] = d0_[f] - csol.jump_n[f];

    p_new_full = flow_step(prev, df_new, divu_new, dt);
    Vector gx = stack(p_new_full);
    double delta = (gx - x).lpNorm<Eigen::Infinity>();
    double scale = gx.lpNorm<Eigen::Infinity>();
    if (one_way || delta <= cfg_.fp_atol_pa || delta <= cfg_.fp_rtol * scale) {
      converged = true;
      break;
    }
    x = mixer.next(x, gx);
  }
  if (!converged)
    throw SolverError("outer fixed point did not converge in " +
                      std::to_string(cfg_.fp_max_iter) + " iterations at t = " +
                      std::to_string(t_next));
  if (outer_iters) *outer_iters = it;

  StepState next;
  next.t = t_next;
  next.p_full = p_new_full;
  next.u_full = csol.u_full;
  next.lambda = csol.lambda;
  next.set = set;
  next.divu = divu_new;
  closure_update(cell_pressures(p_new_full), divu_new, csol.jump_n, next.phi, next.df);

  // Lemma 4.1 conditions, aperture bound, closure residual, volume balance.
  report_.max_penetration = std::max(report_.max_penetration, csol.report.max_penetration);
  report_.max_negative_lambda =
      std::max(report_.max_negative_lambda, csol.report.max_negative_lambda);
  report_.max_complementarity =
      std::max(report_.max_complementarity, csol.report.max_complementarity);
  for (double j : csol.jump_n) report_.max_jump_scale = std::max(report_.max_jump_scale, std::abs(j));
  for (int f = 0; f < nf; ++f)
    report_.min_df_margin = std::min(report_.min_df_margin, next.df[f] - d0_[f]);
  report_.max_outer_iters = std::max(report_.max_outer_iters, it);

  double closure_res = 0;
  for (int t = 0; t < nc; ++t) {
    double lhs = next.phi[t] - phi0_cells_[t];
    double rhs = cfg_.b * (next.divu[t] - divu0_[t]) +
                 cfg_.inv_M() * (next.p_full[layout_.cell_dof(t)] - p0_cells_[t]);
    closure_res = std::max(closure_res, std::abs(lhs - rhs));
  }
  for (int f = 0; f < nf; ++f)
    closure_res = std::max(closure_res, std::abs(next.df[f] - (d0_[f] - csol.jump_n[f])));
  report_.max_closure_residual = std::max(report_.max_closure_residual, closure_res);

  double acc = 0;
  for (int t = 0; t < nc; ++t) acc += mesh_.tri_area(t) * (next.phi[t] - prev.phi[t]);
  for (int f = 0; f < nf; ++f)
    acc += mesh_.fracture_faces[f].length * (next.df[f] - prev.df[f]);
  double src = 0;
  for (int t = 0; t < nc; ++t) src += mesh_.tri_area(t) * cfg_.h_m;
  for (int f = 0; f < nf; ++f) src += mesh_.fracture_faces[f].length * cfg_.h_f;
  src *= dt;
  double influx = dt * flow_.boundary_influx(next.p_full, next.df);
  double denom = std::max(std::abs(acc), std::abs(influx) + std::abs(src));
  double rel = denom > 0 ? std::abs(acc - influx - src) / denom : std::abs(acc - influx - src);
  report_.max_step_balance_rel = std::max(report_.max_step_balance_rel, rel);
  acc_sum_ += acc;
  flux_sum_ += influx + src;
  return next;
}

SeriesRow Simulator::means(const StepState& s) const {
  SeriesRow row;
  row.t = s.t;
  double area = 0, len = 0;
  for (int t = 0; t < (int)mesh_.tris.size(); ++t) {
    double m = mesh_.tri_area(t);
    area += m;
    row.mean_phi += m * s.phi[t];
    row.mean_pm += m * s.p_full[layout_.cell_dof(t)];
  }
  row.mean_phi /= area;
  row.mean_pm /= area;
  for (int f = 0; f < (int)mesh_.fracture_faces.size(); ++f) {
    double m = mesh_.fracture_faces[f].length;
    len += m;
    row.mean_df += m * s.df[f];
    row.mean_pf += m * s.p_full[layout_.face_dof(f)];
  }
  if (len > 0) {
    row.mean_df /= len;
    row.mean_pf /= len;
  }
  return row;
}

SimResult Simulator::run(const std::set<int>& snapshot_steps) {
  SimResult res;
  res.grid = TimeGrid::uniform(cfg_.T, cfg_.steps);
  StepState s = initial_state();

  double gpm_sq = 0, gpf_sq = 0, jp_sq = 0, lam_sq = 0;
  double pm_max = 0, u_max = 0, df4_max = 0;
  const double sqrt_invM = std::sqrt(cfg_.inv_M());
  const auto& Keps = contact_.eps_product();

  auto linf_update = [&](const StepState& st) {
    pm_max = std::max(pm_max, sqrt_invM * piM_l2(mesh_, layout_, st.p_full));
    u_max = std::max(u_max, std::sqrt(std::max(0.0, st.u_full.dot(Keps * st.u_full))));
    double d4 = 0;
    for (int f = 0; f < (int)mesh_.fracture_faces.size(); ++f)
      d4 += mesh_.fracture_faces[f].length * std::pow(st.df[f], 4);
    df4_max = std::max(df4_max, std::pow(d4, 0.25));
  };
  auto l2_update = [&](const StepState& st, double dt) {
    gpm_sq += dt * matrix_gradient_energy(mesh_, flow_.geometry(), layout_, st.p_full,
                                          Eigen::Matrix2d::Identity());
    if (!mesh_.fracture_faces.empty()) {
      std::vector<double> w(st.df.size());
      for (size_t f = 0; f < st.df.size(); ++f) w[f] = std::pow(st.df[f], 3);
      auto nodes = fracture_node_values(mesh_, layout_, st.p_full, w);
      gpf_sq += dt * fracture_gradient_energy(mesh_, layout_, st.p_full, nodes, w);
      double jsq = 0, lsq = 0;
      for (int f = 0; f < (int)mesh_.fracture_faces.size(); ++f) {
        double len = mesh_.fracture_faces[f].length;
        for (int side = 0; side < 2; ++side) {
          double j = jump_matrix_fracture(mesh_, layout_, st.p_full, f, side);
          jsq += len * j * j;
        }
        lsq += len * len * st.lambda[f] * st.lambda[f];
      }
      jp_sq += dt * jsq;
      lam_sq += dt * lsq;
    }
  };

  linf_update(s);
  if (snapshot_steps.count(0)) res.snapshots[0] = s;

  for (int k = 0; k < res.grid.steps(); ++k) {
    double t_next = res.grid.t[k + 1];
    int iters = 0;
    StepState next;
    try {
      next = coupled_step(s, t_next, &iters);
    } catch (const SolverError&) {
      // One rejection allowed: retry as two half steps.
      report_.dt_halved = true;
      double mid = 0.5 * (s.t + t_next);
      int it1 = 0, it2 = 0;
      StepState half = coupled_step(s, mid, &it1);
      next = coupled_step(half, t_next, &it2);
      iters = it1 + it2;
    }
    SeriesRow row = means(next);
    row.outer_iters = iters;
    res.series.push_back(row);
    double dt = res.grid.dt(k);
    l2_update(next, dt);
    linf_update(next);
    if (snapshot_steps.count(k + 1)) res.snapshots[k + 1] = next;
    s = next;
  }

  res.energy.grad_pm = std::sqrt(gpm_sq);
  res.energy.grad_pf_w = std::sqrt(gpf_sq);
  res.energy.jump_p = std::sqrt(jp_sq);
  res.energy.pm_over_sqrtM = pm_max;
  res.energy.u_U0 = u_max;
  res.energy.df_l4 = df4_max;
  res.energy.lambda_dual = std::sqrt(lam_sq);

  double denom = std::max(std::abs(acc_sum_), std::abs(flux_sum_));
  report_.global_balance_rel =
      denom > 0 ? std::abs(acc_sum_ - flux_sum_) / denom : std::abs(acc_sum_ - flux_sum_);
  res.report = report_;
  return res;
}

Vec2 top_boundary_displacement(double t, const SimConfig& cfg) {
  auto it = cfg.mech_bc.find("top");
  if (it == cfg.mech_bc.end()) throw ConfigError("no mechanics boundary condition on tag 'top'");
  return Vec2(it->second.value_at(0, t), it->second.value_at(1, t));
}

}  // namespace fracsim
