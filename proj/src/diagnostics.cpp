#include "fracsim/diagnostics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <numeric>

namespace fracsim {

FractureQuadField FractureQuadField::jump(const DisplacementSpace& space, const Vector& u_full,
                                          bool normal) {
  FractureQuadField f;
  f.mesh = space.mesh;
  const auto& mesh = *space.mesh;
  f.triples_.resize(mesh.fracture_faces.size());
  for (int face = 0; face < (int)mesh.fracture_faces.size(); ++face) {
    const FractureFace& ff = mesh.fracture_faces[face];
    Vec2 dir = normal ? ff.normal_plus : ff.tangent;
    for (int k = 0; k < 3; ++k) {
      double xi = 0.5 * k;
      Vec2 d = trace_eval(space, u_full, face, 0, xi) - trace_eval(space, u_full, face, 1, xi);
      f.triples_[face][k] = d.dot(dir);
    }
  }
  return f;
}

FractureQuadField FractureQuadField::piecewise_constant(const MixedDimMesh& mesh,
                                                        const std::vector<double>& values) {
  FractureQuadField f;
  f.mesh = &mesh;
  f.triples_.resize(mesh.fracture_faces.size());
  for (size_t face = 0; face < values.size(); ++face)
    f.triples_[face] = {values[face], values[face], values[face]};
  return f;
}

FractureQuadField FractureQuadField::project_lambda(const MixedDimMesh& mesh,
                                                    const Vector& lambda) {
  FractureQuadField f;
  f.mesh = &mesh;
  f.triples_.resize(mesh.fracture_faces.size());
  for (const auto& path : mesh.fractures) {
    const int n = (int)path.faces.size();
    const int ndof = 2 * n + 1;  // continuous P2 on the polyline
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(ndof, ndof);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ndof);
    for (int i = 0; i < n; ++i) {
      double L = mesh.fracture_faces[path.faces[i]].length;
      int idx[3] = {2 * i, 2 * i + 1, 2 * i + 2};  // start, mid, end
      Eigen::Matrix3d Mloc;
      Mloc << 4, 2, -1, 2, 16, 2, -1, 2, 4;
      Mloc *= L / 30.0;
      Eigen::Vector3d r(L / 6.0, 2.0 * L / 3.0, L / 6.0);
      for (int a = 0; a < 3; ++a) {
        rhs[idx[a]] += lambda[path.faces[i]] * r[a];
        for (int b = 0; b < 3; ++b) M(idx[a], idx[b]) += Mloc(a, b);
      }
    }
    Eigen::VectorXd x = M.ldlt().solve(rhs);
    for (int i = 0; i < n; ++i)
      f.triples_[path.faces[i]] = {x[2 * i], x[2 * i + 1], x[2 * i + 2]};
  }
  return f;
}

double FractureQuadField::eval(int face, double xi) const {
  const auto& v = triples_[face];
  double N0 = (1 - xi) * (1 - 2 * xi);
  double Nm = 4 * xi * (1 - xi);
  double N1 = xi * (2 * xi - 1);
  return N0 * v[0] + Nm * v[1] + N1 * v[2];
}

namespace {
const double kGaussX[3] = {0.5 * (1 - std::sqrt(3.0 / 5.0)), 0.5,
                           0.5 * (1 + std::sqrt(3.0 / 5.0))};
const double kGaussW[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
}  // namespace

double fracture_l2_error(const FractureQuadField& coarse, const FractureQuadField& ref,
                         const std::vector<int>& ref_to_coarse_face) {
  const auto& rmesh = *ref.mesh;
  const auto& cmesh = *coarse.mesh;
  double err2 = 0;
  for (int rf = 0; rf < (int)rmesh.fracture_faces.size(); ++rf) {
    const FractureFace& rff = rmesh.fracture_faces[rf];
    int cf = ref_to_coarse_face.at(rf);
    const FractureFace& cff = cmesh.fracture_faces[cf];
    Vec2 cstart = cmesh.nodes[cff.node_start];
    Vec2 rstart = rmesh.nodes[rff.node_start];
    for (int q = 0; q < 3; ++q) {
      Vec2 x = rstart + kGaussX[q] * rff.length * rff.tangent;
      double xi_c = (x - cstart).dot(cff.tangent) / cff.length;
      double d = ref.eval(rf, kGaussX[q]) - coarse.eval(cf, xi_c);
      err2 += kGaussW[q] * rff.length * d * d;
    }
  }
  return std::sqrt(err2);
}

double cell_l2_error(const MixedDimMesh& ref_mesh, const Vector& ref_vals,
                     const Vector& coarse_vals, const std::vector<int>& ref_to_coarse_tri) {
  double err2 = 0;
  for (int t = 0; t < (int)ref_mesh.tris.size(); ++t) {
    double d = ref_vals[t] - coarse_vals[ref_to_coarse_tri.at(t)];
    err2 += ref_mesh.tri_area(t) * d * d;
  }
  return std::sqrt(err2);
}

double face_l2_error(const MixedDimMesh& ref_mesh, const std::vector<double>& ref_vals,
                     const std::vector<double>& coarse_vals,
                     const std::vector<int>& ref_to_coarse_face) {
  double err2 = 0;
  for (int f = 0; f < (int)ref_mesh.fracture_faces.size(); ++f) {
    double d = ref_vals[f] - coarse_vals[ref_to_coarse_face.at(f)];
    err2 += ref_mesh.fracture_faces[f].length * d * d;
  }
  return std::sqrt(err2);
}

std::vector<int> compose_tri_ancestors(const std::vector<const MixedDimMesh*>& chain) {
  std::vector<int> anc(chain.back()->tris.size());
  std::iota(anc.begin(), anc.end(), 0);
  for (int level = (int)chain.size() - 1; level > 0; --level)
    for (auto& a : anc) a = chain[level]->parent_tri.at(a);
  return anc;
}

std::vector<int> compose_face_ancestors(const std::vector<const MixedDimMesh*>& chain) {
  std::vector<int> anc(chain.back()->fracture_faces.size());
  std::iota(anc.begin(), anc.end(), 0);
  for (int level = (int)chain.size() - 1; level > 0; --level)
    for (auto& a : anc) a = chain[level]->parent_face.at(a);
  return anc;
}

double series_l2_error(const TimeGrid& coarse_grid, const std::vector<double>& coarse_vals,
                       const TimeGrid& ref_grid, const std::vector<double>& ref_vals) {
  double err2 = 0;
  for (int j = 0; j < ref_grid.steps(); ++j) {
    double tm = 0.5 * (ref_grid.t[j] + ref_grid.t[j + 1]);
    int k = 0;
    while (k + 1 < coarse_grid.steps() && coarse_grid.t[k + 1] < tm) ++k;
    double d = ref_vals[j] - coarse_vals[k];
    err2 += (ref_grid.t[j + 1] - ref_grid.t[j]) * d * d;
  }
  return std::sqrt(err2);
}

RateFitResult rate_fit(const std::vector<double>& h, const std::vector<double>& err) {
  if (h.size() != err.size() || h.size() < 2)
    throw std::invalid_argument("rate_fit needs at least two (h, error) records");
  for (double e : err)
    if (!(e > 0)) throw std::invalid_argument("rate_fit: zero or negative error entry");
  const int n = (int)h.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    double x = std::log(h[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  RateFitResult out;
  out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  for (int i = 0; i + 1 < n; ++i)
    out.pairwise.push_back(std::log(err[i] / err[i + 1]) / std::log(h[i] / h[i + 1]));
  return out;
}

double terzaghi_cv(const TerzaghiSetup& s) {
  double mu = s.E / (2 * (1 + s.nu));
  double lam = s.E * s.nu / ((1 + s.nu) * (1 - 2 * s.nu));
  double Kv = lam + 2 * mu;
  double invM = std::isinf(s.M) ? 0.0 : 1.0 / s.M;
  double storage = invM + s.b * s.b / Kv;
  return s.k_over_eta / storage;
}

double terzaghi_pressure(const TerzaghiSetup& s, double z, double t, int terms) {
  const double cv = terzaghi_cv(s);
  const double pi = M_PI;
  double p = 0;
  for (int n = 1; n <= 2 * terms; n += 2) {
    double arg = n * pi / (2 * s.H);
    p += (4.0 * s.p0 / (n * pi)) * std::sin(arg * z) * std::exp(-arg * arg * cv * t);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Study drivers
// ---------------------------------------------------------------------------

namespace {

void fit_quantities(StudyResult& res) {
  for (auto& [name, q] : res.quantities) {
    if (q.err.size() < 2) continue;
    bool positive = true;
    for (double e : q.err) positive = positive && e > 0;
    if (!positive) continue;
    auto fit = rate_fit(q.h, q.err);
    q.slope = fit.slope;
    q.pairwise = fit.pairwise;
  }
}

}  // namespace

StudyResult space_study(const MixedDimMesh& base, const SimConfig& cfg, int levels) {
  if (levels < 1) throw std::invalid_argument("space_study needs at least one run level");
  StudyResult res;

  std::vector<MixedDimMesh> meshes;
  meshes.push_back(base);
  for (int l = 0; l < levels; ++l) meshes.push_back(refine_uniform(meshes.back()));

  const int N = cfg.steps;
  const int kq = std::max(1, (N + 2) / 4);  // nearest step to T/4
  std::set<int> snaps = {kq, N};

  std::vector<SimResult> runs;
  for (int l = 0; l <= levels; ++l) {
    Simulator sim(meshes[l], cfg);
    runs.push_back(sim.run(snaps));
    res.energies.push_back(runs.back().energy);
  }
  const SimResult& ref_run = runs.back();
  const MixedDimMesh& ref_mesh = meshes.back();

  MechBCTable bc = cfg.mech_bc;
  DisplacementSpace ref_space = build_p2_space(ref_mesh, bc);
  ref_space.bc = &bc;
  FlowBCTable fbc = cfg.flow_bc;
  FlowDofLayout ref_layout = build_flow_layout(ref_mesh, fbc);

  auto add = [&](const std::string& name, int level, double h, double err) {
    auto& q = res.quantities[name];
    (void)level;
    q.h.push_back(h);
    q.err.push_back(err);
  };

  for (int l = 0; l < levels; ++l) {
    const MixedDimMesh& mesh_l = meshes[l];
    std::vector<const MixedDimMesh*> chain;
    for (int i = l; i <= levels; ++i) chain.push_back(&meshes[i]);
    auto tri_anc = compose_tri_ancestors(chain);
    auto face_anc = compose_face_ancestors(chain);

    DisplacementSpace space_l = build_p2_space(mesh_l, bc);
    space_l.bc = &bc;
    FlowDofLayout layout_l = build_flow_layout(mesh_l, fbc);
    double h = mesh_l.max_h();

    const StepState& sq_l = runs[l].snapshots.at(kq);
    const StepState& sq_r = ref_run.snapshots.at(kq);
    add("jump_n", l, h,
        fracture_l2_error(FractureQuadField::jump(space_l, sq_l.u_full, true),
                          FractureQuadField::jump(ref_space, sq_r.u_full, true), face_anc));
    add("jump_t", l, h,
        fracture_l2_error(FractureQuadField::jump(space_l, sq_l.u_full, false),
                          FractureQuadField::jump(ref_space, sq_r.u_full, false), face_anc));
    add("lambda", l, h,
        fracture_l2_error(FractureQuadField::project_lambda(mesh_l, sq_l.lambda),
                          FractureQuadField::project_lambda(ref_mesh, sq_r.lambda), face_anc));
    std::vector<double> lam_l(sq_l.lambda.data(), sq_l.lambda.data() + sq_l.lambda.size());
    std::vector<double> lam_r(sq_r.lambda.data(), sq_r.lambda.data() + sq_r.lambda.size());
    add("lambda_p0", l, h,
        fracture_l2_error(FractureQuadField::piecewise_constant(mesh_l, lam_l),
                          FractureQuadField::piecewise_constant(ref_mesh, lam_r), face_anc));

    const StepState& sf_l = runs[l].snapshots.at(N);
    const StepState& sf_r = ref_run.snapshots.at(N);
    add("p_m", l, h,
        cell_l2_error(ref_mesh, sf_r.p_full.head(ref_mesh.tris.size()),
                      sf_l.p_full.head(mesh_l.tris.size()), tri_anc));
    add("phi_m", l, h, cell_l2_error(ref_mesh, sf_r.phi, sf_l.phi, tri_anc));
    std::vector<double> pf_l(mesh_l.fracture_faces.size()), pf_r(ref_mesh.fracture_faces.size());
    for (size_t f = 0; f < pf_l.size(); ++f) pf_l[f] = sf_l.p_full[layout_l.face_dof((int)f)];
    for (size_t f = 0; f < pf_r.size(); ++f) pf_r[f] = sf_r.p_full[ref_layout.face_dof((int)f)];
    add("p_f", l, h, face_l2_error(ref_mesh, pf_r, pf_l, face_anc));
    add("d_f", l, h, face_l2_error(ref_mesh, sf_r.df, sf_l.df, face_anc));
  }

  res.reference = std::move(runs.back());
  runs.pop_back();
  res.runs = std::move(runs);
  fit_quantities(res);
  return res;
}

StudyResult time_study(const MixedDimMesh& mesh, const SimConfig& cfg, int levels) {
  if (levels < 1) throw std::invalid_argument("time_study needs at least one run level");
  StudyResult res;

  auto run_with_steps = [&](int steps) {
    SimConfig c = cfg;
    c.steps = steps;
    Simulator sim(mesh, c);
    return sim.run({});
  };

  std::vector<SimResult> runs;
  std::vector<int> steps;
  for (int l = 0; l <= levels; ++l) {
    steps.push_back(cfg.steps << l);
    runs.push_back(run_with_steps(steps.back()));
    res.energies.push_back(runs.back().energy);
  }
  const SimResult& ref = runs.back();

  auto series_of = [](const SimResult& r, int what) {
    std::vector<double> v;
    for (const auto& row : r.series)
      v.push_back(what == 0   ? row.mean_phi
                  : what == 1 ? row.mean_df
                  : what == 2 ? row.mean_pm
                              : row.mean_pf);
    return v;
  };
  const char* names[4] = {"mean_phi", "mean_df", "mean_pm", "mean_pf"};
  for (int l = 0; l < levels; ++l) {
    double dt = cfg.T / steps[l];
    for (int w = 0; w < 4; ++w) {
      auto& q = res.quantities[names[w]];
      q.h.push_back(dt);
      q.err.push_back(series_l2_error(runs[l].grid, series_of(runs[l], w), ref.grid,
                                      series_of(ref, w)));
    }
  }

  res.reference = std::move(runs.back());
  runs.pop_back();
  res.runs = std::move(runs);
  fit_quantities(res);
  return res;
}

std::vector<ConvergenceRecord> study_records(const StudyResult& res) {
  std::vector<ConvergenceRecord> records;
  for (const auto& [name, q] : res.quantities)
    for (size_t i = 0; i < q.h.size(); ++i)
      records.push_back({name, q.h[i], q.err[i], q.slope});
  return records;
}

void write_records_csv(const std::string& path, const std::vector<ConvergenceRecord>& records) {
  std::ofstream out(path);
  out << "quantity,h_or_dt,error,slope\n";
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", r.quantity.c_str(), r.h_or_dt,
                  r.error, r.slope);
    out << buf;
  }
}

}  // namespace fracsim
