#include <doctest.h>

#include "fracsim/diagnostics.hpp"
#include "fracsim/gridgen.hpp"

#include <cmath>
#include <random>

using namespace fracsim;

TEST_CASE("rate_fit recovers exact power laws") {
  auto fit1 = rate_fit({1.0, 0.5, 0.25}, {1.0, 0.5, 0.25});
  CHECK(fit1.slope == doctest::Approx(1.0).epsilon(1e-12));
  double r = std::pow(2.0, 1.5);
  auto fit2 = rate_fit({1.0, 0.5, 0.25}, {1.0, 1.0 / r, 1.0 / (r * r)});
  CHECK(fit2.slope == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(fit2.pairwise[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK_THROWS(rate_fit({1.0, 0.5}, {1.0, 0.0}));
  CHECK_THROWS(rate_fit({1.0}, {1.0}));
}

TEST_CASE("series_l2_error on nested grids") {
  TimeGrid g1 = TimeGrid::uniform(1.0, 2);
  TimeGrid g2 = TimeGrid::uniform(1.0, 4);
  // Identical piecewise-constant functions: zero error.
  CHECK(series_l2_error(g1, {1.0, 2.0}, g2, {1.0, 1.0, 2.0, 2.0}) == doctest::Approx(0.0));
  // Constant offset c: error = c * sqrt(T).
  CHECK(series_l2_error(g1, {0.0, 0.0}, g2, {3.0, 3.0, 3.0, 3.0}) ==
        doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("fracture line errors: zero, constant offset, projection oracle") {
  GridSpec spec;
  spec.nx = 8;
  spec.ny = 4;
  spec.lo = Vec2(0, 0);
  spec.hi = Vec2(2, 1);
  spec.fractures = {{1, {{2, 2}, {6, 2}}}};
  auto coarse = make_grid_mesh(spec);
  auto fine = refine_uniform(coarse);
  std::vector<const MixedDimMesh*> chain = {&coarse, &fine};
  auto anc = compose_face_ancestors(chain);

  // Identical piecewise-constant fields -> zero error.
  std::vector<double> vals_c(coarse.fracture_faces.size());
  for (size_t f = 0; f < vals_c.size(); ++f) vals_c[f] = 1.0 + 0.25 * f;
  std::vector<double> vals_f(fine.fracture_faces.size());
  for (size_t f = 0; f < vals_f.size(); ++f) vals_f[f] = vals_c[anc[f]];
  auto qc = FractureQuadField::piecewise_constant(coarse, vals_c);
  auto qf = FractureQuadField::piecewise_constant(fine, vals_f);
  CHECK(fracture_l2_error(qc, qf, anc) == doctest::Approx(0.0).epsilon(1e-14));

  // Coarse = fine + constant c per face: error = c sqrt(|Gamma|).
  double c = 0.7, L = 0;
  for (const auto& ff : coarse.fracture_faces) L += ff.length;
  for (auto& v : vals_f) v += c;
  auto qf2 = FractureQuadField::piecewise_constant(fine, vals_f);
  CHECK(fracture_l2_error(qc, qf2, anc) == doctest::Approx(c * std::sqrt(L)).epsilon(1e-12));

  // Metric properties on a common partition: identity of indiscernibles,
  // symmetry, and a triangle-inequality spot check.
  std::vector<int> ident(fine.fracture_faces.size());
  for (size_t f = 0; f < ident.size(); ++f) ident[f] = (int)f;
  std::mt19937 mrng(11);
  std::uniform_real_distribution<double> MU(-2, 2);
  auto rand_field = [&] {
    std::vector<double> v(fine.fracture_faces.size());
    for (auto& x : v) x = MU(mrng);
    return FractureQuadField::piecewise_constant(fine, v);
  };
  auto A = rand_field(), B = rand_field(), C = rand_field();
  CHECK(fracture_l2_error(A, A, ident) == doctest::Approx(0.0));
  CHECK(fracture_l2_error(A, B, ident) == doctest::Approx(fracture_l2_error(B, A, ident)));
  CHECK(fracture_l2_error(A, C, ident) <=
        fracture_l2_error(A, B, ident) + fracture_l2_error(B, C, ident) + 1e-12);

  // Quadratic projection of a random piecewise-constant multiplier agrees with
  // a dense Gram-matrix oracle face by face.
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(0, 5e6);
  Vector lam(coarse.fracture_faces.size());
  for (int f = 0; f < lam.size(); ++f) lam[f] = U(rng);
  auto proj = FractureQuadField::project_lambda(coarse, lam);
  // Oracle: assemble the same continuous P2 Gram system densely and compare
  // the projection residual norm with the field evaluated at Gauss points.
  const auto& path = coarse.fractures[0];
  int n = (int)path.faces.size();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n + 1, 2 * n + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * n + 1);
  for (int i = 0; i < n; ++i) {
    double len = coarse.fracture_faces[path.faces[i]].length;
    Eigen::Matrix3d Mloc;
    Mloc << 4, 2, -1, 2, 16, 2, -1, 2, 4;
    Mloc *= len / 30.0;
    Eigen::Vector3d r(len / 6, 2 * len / 3, len / 6);
    int idx[3] = {2 * i, 2 * i + 1, 2 * i + 2};
    for (int a = 0; a < 3; ++a) {
      rhs[idx[a]] += lam[path.faces[i]] * r[a];
      for (int b = 0; b < 3; ++b) M(idx[a], idx[b]) += Mloc(a, b);
    }
  }
  Eigen::VectorXd x = M.fullPivLu().solve(rhs);
  for (int i = 0; i < n; ++i) {
    CHECK(proj.eval(path.faces[i], 0.0) == doctest::Approx(x[2 * i]).epsilon(1e-9));
    CHECK(proj.eval(path.faces[i], 0.5) == doctest::Approx(x[2 * i + 1]).epsilon(1e-9));
    CHECK(proj.eval(path.faces[i], 1.0) == doctest::Approx(x[2 * i + 2]).epsilon(1e-9));
  }
}

TEST_CASE("terzaghi series limits") {
  TerzaghiSetup s;
  s.E = 4e9;
  s.nu = 0.2;
  s.b = 0.8;
  s.M = 1e10;
  s.k_over_eta = 1e-9;
  s.H = 1.0;
  s.p0 = 1e5;

  // Full drainage as t -> infinity.
  CHECK(terzaghi_pressure(s, 0.5, 1e9) == doctest::Approx(0.0).epsilon(1e-12));
  // Interior points recover p0 as t -> 0+.
  CHECK(terzaghi_pressure(s, 0.5, 1e-12, 4000) == doctest::Approx(1e5).epsilon(1e-3));
  // 200-term evaluation matches a 2000-term oracle at moderate times.
  double cv = terzaghi_cv(s);
  double t01 = 0.1 * 4.0 * s.H * s.H / (M_PI * M_PI * cv);
  CHECK(terzaghi_pressure(s, 0.5, t01, 200) ==
        doctest::Approx(terzaghi_pressure(s, 0.5, t01, 2000)).epsilon(1e-13));
  // Consolidation coefficient from the plane-strain constants.
  double mu = s.E / (2 * (1 + s.nu));
  double lam = s.E * s.nu / ((1 + s.nu) * (1 - 2 * s.nu));
  CHECK(cv == doctest::Approx(s.k_over_eta / (1.0 / s.M + s.b * s.b / (lam + 2 * mu))));
}

TEST_CASE("cell and face errors on nested meshes") {
  GridSpec spec;
  spec.nx = 4;
  spec.ny = 2;
  spec.fractures = {{1, {{1, 1}, {3, 1}}}};
  auto coarse = make_grid_mesh(spec);
  auto fine = refine_uniform(coarse);
  std::vector<const MixedDimMesh*> chain = {&coarse, &fine};
  auto tri_anc = compose_tri_ancestors(chain);
  auto face_anc = compose_face_ancestors(chain);

  Vector vc = Vector::Zero(coarse.tris.size());
  Vector vf = Vector::Zero(fine.tris.size());
  for (int t = 0; t < (int)fine.tris.size(); ++t) vf[t] = 2.0;  // offset by 2
  CHECK(cell_l2_error(fine, vf, vc, tri_anc) ==
        doctest::Approx(2.0 * std::sqrt(coarse.total_area())).epsilon(1e-12));

  std::vector<double> fc(coarse.fracture_faces.size(), 1.0);
  std::vector<double> ff(fine.fracture_faces.size(), 1.0);
  CHECK(face_l2_error(fine, ff, fc, face_anc) == doctest::Approx(0.0));
}
