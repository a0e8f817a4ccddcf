#include <doctest.h>

#include "fracsim/contact.hpp"
#include "fracsim/gridgen.hpp"

#include <cmath>

using namespace fracsim;

namespace {

struct Setup {
  MixedDimMesh mesh;
  MechBCTable bc;
  DisplacementSpace space;
  StressParams params{4e9, 0.2, 0.8};
};

// Square with a horizontal interior fracture, clamped bottom, prescribed top.
Setup make_setup(Vec2 top_displacement, int nx = 6, int ny = 4) {
  Setup s;
  GridSpec spec;
  spec.nx = nx;
  spec.ny = ny;
  spec.fractures = {{1, {{1, ny / 2}, {nx - 1, ny / 2}}}};
  s.mesh = make_grid_mesh(spec);
  s.bc["bottom"] = {MechBC::Type::Clamped};
  s.bc["top"] = {MechBC::Type::Prescribed, top_displacement};
  s.space = build_p2_space(s.mesh, s.bc);
  s.space.bc = &s.bc;
  return s;
}

}  // namespace

TEST_CASE("tension opens every face") {
  auto s = make_setup(Vec2(0, 1e-3));
  ContactSolver solver(s.space, s.params);
  Vector pm = Vector::Zero(s.mesh.tris.size());
  Vector pf = Vector::Zero(s.mesh.fracture_faces.size());

  for (ActiveSet warm : {ActiveSet{}, ActiveSet(s.mesh.fracture_faces.size(), FaceState::Stick)}) {
    auto sol = solver.solve(pm, pf, 0.0, warm);
    CHECK(sol.report.converged);
    for (int f = 0; f < (int)s.mesh.fracture_faces.size(); ++f) {
      CHECK(sol.set[f] == FaceState::Open);
      CHECK(sol.lambda[f] == 0.0);
      CHECK(sol.jump_n[f] < 0.0);
    }
  }
}

TEST_CASE("compression sticks every face with positive multipliers") {
  auto s = make_setup(Vec2(0, -1e-3));
  ContactSolver solver(s.space, s.params);
  Vector pm = Vector::Zero(s.mesh.tris.size());
  Vector pf = Vector::Zero(s.mesh.fracture_faces.size());
  auto sol = solver.solve(pm, pf, 0.0, {});
  CHECK(sol.report.converged);
  for (int f = 0; f < (int)s.mesh.fracture_faces.size(); ++f) {
    CHECK(sol.set[f] == FaceState::Stick);
    CHECK(sol.lambda[f] > 0.0);
    CHECK(sol.jump_n[f] == 0.0);  // d_f = d0 on stick faces
  }
  // Complementarity invariant at solver tolerance.
  double max_j = 1e-3;  // displacement scale
  CHECK(sol.report.max_complementarity <= 1e-10 * s.params.E * max_j);
}

TEST_CASE("one-face reduced model: enumeration oracle") {
  auto s = make_setup(Vec2(0, -5e-4), 3, 2);
  REQUIRE(s.mesh.fracture_faces.size() == 1);
  ContactSolver solver(s.space, s.params);
  Vector pm = Vector::Zero(s.mesh.tris.size());
  Vector pf = Vector::Zero(s.mesh.fracture_faces.size());

  // Enumerate both statuses with the monolithic solver and keep the admissible one.
  auto open_sol = solver.solve_monolithic(pm, pf, 0.0, {FaceState::Open});
  auto stick_sol = solver.solve_monolithic(pm, pf, 0.0, {FaceState::Stick});
  bool open_ok = open_sol.jump_n[0] <= 0.0;
  bool stick_ok = stick_sol.lambda[0] >= 0.0;
  CHECK(!open_ok);  // compression penetrates without the constraint
  CHECK(stick_ok);

  auto sol = solver.solve(pm, pf, 0.0, {});
  CHECK(sol.set[0] == FaceState::Stick);
  CHECK(sol.lambda[0] == doctest::Approx(stick_sol.lambda[0]).epsilon(1e-10));
}

TEST_CASE("schur and monolithic paths agree") {
  auto s = make_setup(Vec2(2e-4, -6e-4));
  ContactSolver solver(s.space, s.params);
  Vector pm = Vector::Constant(s.mesh.tris.size(), 2e5);
  Vector pf = Vector::Constant(s.mesh.fracture_faces.size(), 1.5e5);
  auto sol = solver.solve(pm, pf, 0.0, {});
  auto mono = solver.solve_monolithic(pm, pf, 0.0, sol.set);
  CHECK((sol.u_full - mono.u_full).lpNorm<Eigen::Infinity>() <
        1e-9 * (sol.u_full.lpNorm<Eigen::Infinity>() + 1e-30));
  CHECK((sol.lambda - mono.lambda).lpNorm<Eigen::Infinity>() <
        1e-8 * (sol.lambda.lpNorm<Eigen::Infinity>() + 1.0));
}

TEST_CASE("warm-start independence") {
  auto s = make_setup(Vec2(3e-4, -4e-4));
  ContactSolver solver(s.space, s.params);
  Vector pm = Vector::Constant(s.mesh.tris.size(), 1e5);
  Vector pf = Vector::Constant(s.mesh.fracture_faces.size(), 1e5);
  auto a = solver.solve(pm, pf, 0.0, ActiveSet(s.mesh.fracture_faces.size(), FaceState::Open));
  auto b = solver.solve(pm, pf, 0.0, ActiveSet(s.mesh.fracture_faces.size(), FaceState::Stick));
  CHECK(a.set == b.set);
  CHECK((a.u_full - b.u_full).lpNorm<Eigen::Infinity>() <
        1e-10 * (a.u_full.lpNorm<Eigen::Infinity>() + 1e-30));
  CHECK(a.report.iterations <= 10);
  CHECK(b.report.iterations <= 10);
}

TEST_CASE("pressurized fracture opens in an unloaded sealed domain") {
  auto s = make_setup(Vec2(0, 0));
  StressParams params{4e9, 0.2, 0.0};  // b = 0
  ContactSolver solver(s.space, params);
  Vector pm = Vector::Zero(s.mesh.tris.size());
  Vector pf = Vector::Constant(s.mesh.fracture_faces.size(), 1e5);
  auto sol = solver.solve(pm, pf, 0.0, {});
  CHECK(sol.report.converged);
  for (int f = 0; f < (int)s.mesh.fracture_faces.size(); ++f) {
    CHECK(sol.set[f] == FaceState::Open);
    CHECK(sol.jump_n[f] < 0.0);  // faces pushed apart
  }
}

TEST_CASE("local condition checks") {
  auto rep1 = check_local_conditions({-1e-4}, Vector::Zero(1), 1e-12, 0.0, 1e-6);
  CHECK(rep1.all_ok);
  Vector lam(1);
  lam[0] = 5e6;
  auto rep2 = check_local_conditions({0.0}, lam, 1e-12, 0.0, 1e-6);
  CHECK(rep2.all_ok);
  auto rep3 = check_local_conditions({-1e-4}, lam, 1e-12, 0.0, 1e-6);
  CHECK(!rep3.all_ok);
  CHECK(!rep3.complementarity[0]);
  CHECK(rep3.max_complementarity == doctest::Approx(5e6 * 1e-4));
}
