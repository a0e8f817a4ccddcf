/**
 * @file gridgen.hpp
 * @brief Structured triangulations of rectangles with fracture polylines laid
 *        on lattice lines (horizontal, vertical, or the SW-NE cell diagonal).
 */
#pragma once

#include "fracsim/mesh.hpp"

namespace fracsim {

struct GridFracture {
  int id = 0;
  std::vector<std::array<int, 2>> points;  // lattice points (i,j), consecutive
                                           // legs axis-aligned or SW-NE diagonal
};

struct GridSpec {
  int nx = 1, ny = 1;
  Vec2 lo = Vec2(0, 0), hi = Vec2(1, 1);
  std::vector<GridFracture> fractures;
  // Squares (row-major index j*nx+i) meshed with both diagonals + center node
  // instead of the standard SW-NE split; +2 triangles each.
  std::vector<int> four_split_squares;
  // Boundary triangles split along their boundary edge; +1 triangle each.
  int boundary_bisections = 0;
  bool tag_boundary = true;  // left/right/top/bottom tags
};

/// Builds the conforming mesh; fracture legs must follow lattice directions.
MixedDimMesh make_grid_mesh(const GridSpec& spec);

/// The six-fracture 2 m x 1 m test geometry (2855 triangles on the base grid).
MixedDimMesh make_six_fracture_mesh();

}  // namespace fracsim
