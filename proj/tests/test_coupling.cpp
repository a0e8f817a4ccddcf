#include <doctest.h>

#include "fracsim/coupling.hpp"
#include "fracsim/gridgen.hpp"

#include <cmath>

using namespace fracsim;

namespace {

SimConfig base_config() {
  SimConfig cfg;
  cfg.E = 4e9;
  cfg.nu = 0.2;
  cfg.b = 0.8;
  cfg.M = 1e10;
  cfg.eta = 1e-3;
  cfg.Km << 1e-15, 0, 0, 0.5e-15;
  cfg.Lambda_f = 1e-4 / (6e-3);
  cfg.delta0 = 1e-4;
  cfg.a_per_m = 25;
  cfg.phi0 = 0.4;
  cfg.p0_m = 1e5;
  cfg.p0_f = 1e5;
  cfg.T = 2000;
  cfg.steps = 4;
  cfg.flow_bc["left"] = {FlowBC::Type::Dirichlet, 1e5};
  cfg.mech_bc["bottom"] = {MechBC::Type::Clamped};
  cfg.mech_bc["top"] = {MechBC::Type::Ramp, Vec2(0.005, -0.0005), 500.0};
  return cfg;
}

MixedDimMesh small_fracture_mesh() {
  GridSpec spec;
  spec.nx = 8;
  spec.ny = 4;
  spec.lo = Vec2(0, 0);
  spec.hi = Vec2(2, 1);
  spec.fractures = {{1, {{2, 2}, {6, 2}}}};
  return make_grid_mesh(spec);
}

}  // namespace

TEST_CASE("closure arithmetic") {
  auto mesh = small_fracture_mesh();
  SimConfig cfg = base_config();
  Simulator sim(mesh, cfg);
  auto s0 = sim.initial_state();

  // delta_phi = b * ddiv + dp/M with b = 0.8, M = 1e10.
  Vector p = s0.p_full;
  Vector divu = s0.divu;
  p.head(mesh.tris.size()).array() += 1e6;
  divu.array() += 1e-3;
  Vector phi;
  std::vector<double> df;
  std::vector<double> jumps(mesh.fracture_faces.size(), 0.0);
  sim.closure_update(p.head(mesh.tris.size()), divu, jumps, phi, df);
  for (int t = 0; t < (int)mesh.tris.size(); ++t)
    CHECK(phi[t] - 0.4 == doctest::Approx(8e-4 + 1e-4).epsilon(1e-10));

  // d0 = 1e-4-ish and [u]_n = -2e-4 adds 2e-4 to the aperture.
  std::vector<double> jump2(mesh.fracture_faces.size(), -2e-4);
  sim.closure_update(s0.p_full.head(mesh.tris.size()), s0.divu, jump2, phi, df);
  for (size_t f = 0; f < df.size(); ++f)
    CHECK(df[f] == doctest::Approx(sim.d0()[f] + 2e-4).epsilon(1e-12));

  // M = inf drops the pressure term.
  SimConfig cfg2 = base_config();
  cfg2.M = std::numeric_limits<double>::infinity();
  Simulator sim2(mesh, cfg2);
  auto s02 = sim2.initial_state();
  sim2.closure_update(Vector(s02.p_full.head(mesh.tris.size()).array() + 1e6), s02.divu, jumps,
                      phi, df);
  for (int t = 0; t < (int)mesh.tris.size(); ++t)
    CHECK(phi[t] == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("top boundary displacement ramp") {
  SimConfig cfg = base_config();
  Vec2 u0 = top_boundary_displacement(0.0, cfg);
  CHECK(u0.x() == 0.0);
  CHECK(u0.y() == 0.0);
  Vec2 uq = top_boundary_displacement(500.0, cfg);
  CHECK(uq.x() == doctest::Approx(0.005));
  CHECK(uq.y() == doctest::Approx(-0.0005));
  Vec2 ue = top_boundary_displacement(250.0, cfg);
  CHECK(ue.x() == doctest::Approx(0.0025));
  CHECK(ue.y() == doctest::Approx(-0.00025));
  CHECK(top_boundary_displacement(2000.0, cfg).x() == doctest::Approx(0.005));
}

TEST_CASE("steady state: uniform pressure matching Dirichlet stays constant") {
  auto mesh = small_fracture_mesh();
  SimConfig cfg = base_config();
  cfg.mech_bc["top"] = {MechBC::Type::Free};  // no forcing at all
  cfg.steps = 3;
  Simulator sim(mesh, cfg);
  auto res = sim.run();
  REQUIRE(res.series.size() == 3);
  for (const auto& row : res.series) {
    CHECK(row.mean_pm == doctest::Approx(1e5).epsilon(1e-10));
    CHECK(row.mean_pf == doctest::Approx(1e5).epsilon(1e-10));
    CHECK(row.mean_phi == doctest::Approx(0.4).epsilon(1e-10));
    CHECK(row.outer_iters == 1);
  }
}

TEST_CASE("one-way decoupled case converges in one outer iteration") {
  GridSpec spec;
  spec.nx = 6;
  spec.ny = 3;
  auto mesh = make_grid_mesh(spec);
  SimConfig cfg = base_config();
  cfg.b = 0.0;
  cfg.Km = Eigen::Matrix2d::Identity() * 1e-12;
  cfg.flow_bc.clear();
  cfg.flow_bc["left"] = {FlowBC::Type::Dirichlet, 0.0};
  cfg.steps = 2;
  cfg.T = 100;
  Simulator sim(mesh, cfg);
  auto res = sim.run();
  for (const auto& row : res.series) CHECK(row.outer_iters == 1);
  // Pressure actually evolves (drains toward the Dirichlet value).
  CHECK(res.series.back().mean_pm < 1e5);
}

TEST_CASE("coupled run: balance, closure, aperture and contact invariants") {
  auto mesh = small_fracture_mesh();
  SimConfig cfg = base_config();
  cfg.steps = 4;
  Simulator sim(mesh, cfg);
  auto res = sim.run();
  CHECK(res.report.max_step_balance_rel < 1e-9);
  CHECK(res.report.global_balance_rel < 1e-8);
  CHECK(res.report.max_closure_residual < 1e-12);
  CHECK(res.report.min_df_margin >= 0.0);
  double jump_scale = std::max(res.report.max_jump_scale, 1e-12);
  CHECK(res.report.max_complementarity <= 1e-10 * cfg.E * jump_scale);
  CHECK(res.report.max_penetration <= 1e-12 * mesh.diameter());
  CHECK(res.report.max_negative_lambda <= 0.0);
}

TEST_CASE("fixed-point limit independent of Anderson acceleration") {
  auto mesh = small_fracture_mesh();
  SimConfig cfg = base_config();
  Simulator sim(mesh, cfg);
  auto s0 = sim.initial_state();
  int it_acc = 0, it_plain = 0;
  auto a = sim.coupled_step(s0, 500.0, &it_acc, true);
  auto b = sim.coupled_step(s0, 500.0, &it_plain, false);
  double scale = a.p_full.lpNorm<Eigen::Infinity>();
  CHECK((a.p_full - b.p_full).lpNorm<Eigen::Infinity>() <= 2.0 * cfg.fp_atol_pa + 1e-9 * scale);
}

TEST_CASE("first-order accuracy in time (Richardson ratio)") {
  auto mesh = small_fracture_mesh();
  SimConfig cfg = base_config();
  cfg.fp_atol_pa = 1e-3;
  auto mean_at_T = [&](int steps) {
    SimConfig c = cfg;
    c.steps = steps;
    Simulator sim(mesh, c);
    return sim.run().series.back().mean_pm;
  };
  double m1 = mean_at_T(5), m2 = mean_at_T(10), m3 = mean_at_T(20);
  double ratio = (m1 - m2) / (m2 - m3);
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.45));
}

TEST_CASE("mini consolidation column tracks the analytic series") {
  // Quick version of the Terzaghi benchmark on a coarse column.
  GridSpec spec;
  spec.nx = 2;
  spec.ny = 32;
  spec.lo = Vec2(0, 0);
  spec.hi = Vec2(1.0 / 16.0, 1.0);
  auto mesh = make_grid_mesh(spec);

  SimConfig cfg;
  cfg.E = 4e9;
  cfg.nu = 0.2;
  cfg.b = 0.8;
  cfg.M = 1e10;
  cfg.eta = 1e-3;
  cfg.Km = Eigen::Matrix2d::Identity() * 1e-12;
  cfg.Lambda_f = 1.0;
  cfg.delta0 = 1e-4;
  cfg.a_per_m = 25;
  cfg.phi0 = 0.4;
  cfg.p0_m = 1e5;
  cfg.p0_f = 1e5;
  cfg.flow_bc["top"] = {FlowBC::Type::Dirichlet, 0.0};
  cfg.mech_bc["bottom"] = {MechBC::Type::RollerY};
  cfg.mech_bc["left"] = {MechBC::Type::RollerX};
  cfg.mech_bc["right"] = {MechBC::Type::RollerX};
  cfg.T = 0.02;
  cfg.steps = 100;
  cfg.fp_atol_pa = 0.01;

  Simulator sim(mesh, cfg);
  auto res = sim.run({cfg.steps});
  const auto& s = res.snapshots.at(cfg.steps);

  // Analytic series with c_v from the plane-strain Biot constants.
  double mu = cfg.E / (2 * (1 + cfg.nu));
  double lam = cfg.E * cfg.nu / ((1 + cfg.nu) * (1 - 2 * cfg.nu));
  double Kv = lam + 2 * mu;
  double cv = (1e-12 / 1e-3) / (1.0 / cfg.M + cfg.b * cfg.b / Kv);
  double t = cfg.T;
  double num = 0, den = 0;
  for (int K = 0; K < (int)mesh.tris.size(); ++K) {
    double z = 1.0 - mesh.tri_centroid(K).y();  // distance from the drained top
    double pex = 0;
    for (int n = 1; n <= 399; n += 2) {
      double arg = n * M_PI / 2.0;
      pex += (4.0 * cfg.p0_m / (n * M_PI)) * std::sin(arg * z) * std::exp(-arg * arg * cv * t);
    }
    double d = s.p_full[K] - pex;
    num += mesh.tri_area(K) * d * d;
    den += mesh.tri_area(K) * pex * pex;
  }
  CHECK(std::sqrt(num / den) < 0.05);
}
