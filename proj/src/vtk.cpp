#include "fracsim/vtk.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fracsim {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_or_throw(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

void write_vtk_matrix(const std::string& path, const MixedDimMesh& mesh,
                      const std::map<std::string, std::vector<double>>& cell_scalars,
                      const std::map<std::string, std::vector<Vec2>>& point_vectors) {
  auto out = open_or_throw(path);
  out << "# vtk DataFile Version 3.0\nfracsim fields\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.nodes.size() << " double\n";
  for (const auto& p : mesh.nodes) out << num(p.x()) << " " << num(p.y()) << " 0\n";
  out << "CELLS " << mesh.tris.size() << " " << 4 * mesh.tris.size() << "\n";
  for (const auto& t : mesh.tris) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  out << "CELL_TYPES " << mesh.tris.size() << "\n";
  for (size_t t = 0; t < mesh.tris.size(); ++t) out << "5\n";
  if (!cell_scalars.empty()) {
    out << "CELL_DATA " << mesh.tris.size() << "\n";
    for (const auto& [name, vals] : cell_scalars) {
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : vals) out << num(v) << "\n";
    }
  }
  if (!point_vectors.empty()) {
    out << "POINT_DATA " << mesh.nodes.size() << "\n";
    for (const auto& [name, vals] : point_vectors) {
      out << "VECTORS " << name << " double\n";
      for (const auto& v : vals) out << num(v.x()) << " " << num(v.y()) << " 0\n";
    }
  }
}

void write_vtk_fracture(const std::string& path, const MixedDimMesh& mesh,
                        const std::map<std::string, std::vector<double>>& face_scalars) {
  auto out = open_or_throw(path);
  out << "# vtk DataFile Version 3.0\nfracsim fracture fields\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.nodes.size() << " double\n";
  for (const auto& p : mesh.nodes) out << num(p.x()) << " " << num(p.y()) << " 0\n";
  const size_t nf = mesh.fracture_faces.size();
  out << "CELLS " << nf << " " << 3 * nf << "\n";
  for (const auto& ff : mesh.fracture_faces)
    out << "2 " << ff.node_start << " " << ff.node_end << "\n";
  out << "CELL_TYPES " << nf << "\n";
  for (size_t f = 0; f < nf; ++f) out << "3\n";
  if (!face_scalars.empty()) {
    out << "CELL_DATA " << nf << "\n";
    for (const auto& [name, vals] : face_scalars) {
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : vals) out << num(v) << "\n";
    }
  }
}

}  // namespace fracsim
