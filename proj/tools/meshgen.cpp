// Generates the mesh data files: the six-fracture test geometry and plain
// structured grids (optionally a consolidation column).

#include <CLI11.hpp>

#include "fracsim/gridgen.hpp"

#include <iostream>

using namespace fracsim;

int main(int argc, char** argv) {
  CLI::App app{"fracsim mesh generator"};
  app.require_subcommand(1);

  std::string out = "mesh.json";
  int nx = 8, ny = 8;
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;

  auto* six = app.add_subcommand("six-fracture", "2 m x 1 m six-fracture geometry (2855 cells)");
  six->add_option("--out", out, "output path");

  auto* grid = app.add_subcommand("grid", "structured rectangle");
  grid->add_option("--out", out, "output path");
  grid->add_option("--nx", nx)->required();
  grid->add_option("--ny", ny)->required();
  grid->add_option("--x0", x0);
  grid->add_option("--y0", y0);
  grid->add_option("--x1", x1);
  grid->add_option("--y1", y1);

  CLI11_PARSE(app, argc, argv);
  try {
    MixedDimMesh mesh;
    if (app.got_subcommand("six-fracture")) {
      mesh = make_six_fracture_mesh();
    } else {
      GridSpec spec;
      spec.nx = nx;
      spec.ny = ny;
      spec.lo = Vec2(x0, y0);
      spec.hi = Vec2(x1, y1);
      mesh = make_grid_mesh(spec);
    }
    save_mesh(mesh, out);
    std::cout << "wrote " << out << " (" << mesh.tris.size() << " triangles, "
              << mesh.fracture_faces.size() << " fracture faces)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
