// Batch front-end: run a simulation or a refinement study from a JSON config
// and mesh, writing time series, VTK fields, the energy report, and
// convergence records.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fracsim/config.hpp"
#include "fracsim/coupling.hpp"
#include "fracsim/diagnostics.hpp"
#include "fracsim/vtk.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace fracsim;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_series_csv(const std::string& path, const std::vector<SeriesRow>& rows) {
  std::ofstream out(path);
  out << "t,mean_phi,mean_df,mean_pm,mean_pf\n";
  for (const auto& r : rows)
    out << fmt(r.t) << "," << fmt(r.mean_phi) << "," << fmt(r.mean_df) << "," << fmt(r.mean_pm)
        << "," << fmt(r.mean_pf) << "\n";
}

void write_energy_json(const std::string& path, const EnergyTable& e) {
  nlohmann::json j;
  auto vals = e.as_array();
  for (int i = 0; i < 7; ++i) j[EnergyTable::name(i)] = vals[i];
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

std::vector<Vec2> nodal_displacement(const DisplacementSpace& space, const Vector& u) {
  const auto& mesh = *space.mesh;
  std::vector<Vec2> disp(mesh.nodes.size(), Vec2::Zero());
  std::vector<int> count(mesh.nodes.size(), 0);
  for (int t = 0; t < (int)mesh.tris.size(); ++t)
    for (int c = 0; c < 3; ++c) {
      int s = space.tri_dofs[t][c];
      disp[mesh.tris[t][c]] += Vec2(u[2 * s], u[2 * s + 1]);
      count[mesh.tris[t][c]]++;
    }
  for (size_t n = 0; n < disp.size(); ++n)
    if (count[n] > 0) disp[n] /= count[n];
  return disp;
}

void write_fields(const std::string& dir, const Simulator& sim, const StepState& s) {
  const auto& mesh = sim.mesh();
  char tag[40];
  std::snprintf(tag, sizeof(tag), "%g", s.t);
  std::map<std::string, std::vector<double>> cells;
  cells["pressure"] = std::vector<double>(s.p_full.data(), s.p_full.data() + mesh.tris.size());
  cells["porosity"] = std::vector<double>(s.phi.data(), s.phi.data() + mesh.tris.size());
  std::map<std::string, std::vector<Vec2>> points;
  points["displacement"] = nodal_displacement(sim.space(), s.u_full);
  write_vtk_matrix(dir + "/fields_" + tag + ".vtk", mesh, cells, points);

  if (!mesh.fracture_faces.empty()) {
    std::map<std::string, std::vector<double>> faces;
    faces["lambda"] = std::vector<double>(s.lambda.data(), s.lambda.data() + s.lambda.size());
    faces["aperture"] = s.df;
    Vector pf = sim.face_pressures(s.p_full);
    faces["pressure"] = std::vector<double>(pf.data(), pf.data() + pf.size());
    write_vtk_fracture(dir + "/fields_" + tag + "_fractures.vtk", mesh, faces);
  }
}

int run_command(const std::string& config_path, const std::string& mesh_path,
                const std::string& out_dir) {
  SimConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  MixedDimMesh mesh;
  try {
    mesh = load_mesh(mesh_path);
  } catch (const std::exception& e) {
    std::cerr << "mesh error: " << e.what() << "\n";
    return 3;
  }
  try {
    std::filesystem::create_directories(out_dir);
    Simulator sim(mesh, cfg);
    std::set<int> snaps = {0};
    double dt = cfg.steps > 0 ? cfg.T / cfg.steps : cfg.T;
    for (double t : cfg.field_times) {
      int k = (int)std::lround(t / dt);
      snaps.insert(std::clamp(k, 0, cfg.steps));
    }
    SimResult res = sim.run(snaps);
    write_series_csv(out_dir + "/series.csv", res.series);
    write_energy_json(out_dir + "/energy.json", res.energy);
    for (const auto& [k, state] : res.snapshots) write_fields(out_dir, sim, state);
    std::cout << "completed " << res.series.size() << " steps; outputs in " << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 4;
  }
}

int study_command(const std::string& config_path, const std::string& mesh_path,
                  const std::string& out_dir, const std::string& mode, int levels) {
  SimConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  MixedDimMesh mesh;
  try {
    mesh = load_mesh(mesh_path);
  } catch (const std::exception& e) {
    std::cerr << "mesh error: " << e.what() << "\n";
    return 3;
  }
  try {
    std::filesystem::create_directories(out_dir);
    StudyResult res =
        mode == "space" ? space_study(mesh, cfg, levels) : time_study(mesh, cfg, levels);
    write_records_csv(out_dir + "/convergence.csv", study_records(res));
    nlohmann::json slopes;
    for (const auto& [name, q] : res.quantities)
      if (q.err.size() >= 2) slopes[name] = q.slope;
    std::ofstream(out_dir + "/slopes.json") << slopes.dump(2) << "\n";
    for (const auto& [name, q] : res.quantities) {
      std::cout << name << ":";
      for (size_t i = 0; i < q.err.size(); ++i) std::cout << " " << q.err[i];
      if (q.err.size() >= 2) std::cout << "  slope " << q.slope;
      std::cout << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixed-dimensional poromechanics simulator"};
  app.require_subcommand(1);

  std::string config_path, mesh_path, out_dir = "out", mode = "space";
  int levels = 1;

  auto* run = app.add_subcommand("run", "run a simulation");
  run->add_option("--config", config_path, "JSON config")->required();
  run->add_option("--mesh", mesh_path, "JSON mesh")->required();
  run->add_option("--out", out_dir, "output directory");

  auto* study = app.add_subcommand("study", "refinement study");
  study->add_option("--config", config_path, "JSON config")->required();
  study->add_option("--mesh", mesh_path, "JSON mesh")->required();
  study->add_option("--out", out_dir, "output directory");
  study->add_option("--mode", mode, "space|time")->check(CLI::IsMember({"space", "time"}));
  study->add_option("--levels", levels, "number of non-reference levels");

  CLI11_PARSE(app, argc, argv);
  if (app.got_subcommand("run")) return run_command(config_path, mesh_path, out_dir);
  return study_command(config_path, mesh_path, out_dir, mode, levels);
}
