/**
 * @file vtk.hpp
 * @brief Legacy-ASCII VTK writers: triangular grid with cell/point data, and a
 *        companion polyline dataset for fracture quantities.
 */
#pragma once

#include "fracsim/mesh.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace fracsim {

void write_vtk_matrix(const std::string& path, const MixedDimMesh& mesh,
                      const std::map<std::string, std::vector<double>>& cell_scalars,
                      const std::map<std::string, std::vector<Vec2>>& point_vectors);

void write_vtk_fracture(const std::string& path, const MixedDimMesh& mesh,
                        const std::map<std::string, std::vector<double>>& face_scalars);

}  // namespace fracsim
