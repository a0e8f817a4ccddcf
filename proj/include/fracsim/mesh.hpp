/**
 * @file mesh.hpp
 * @brief Mixed-dimensional mesh: conforming triangulation whose edge set
 *        contains the fracture network, with two-sided fracture bookkeeping.
 *
 * Fractures are polylines of mesh edges. Each fracture face stores an
 * orientation (tangent along the fracture walk, unit normal n+ pointing from
 * the + side triangle toward the - side) that is inherited verbatim under
 * uniform refinement.
 */
#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace fracsim {

using Vec2 = Eigen::Vector2d;

enum class FractureNodeKind : unsigned char {
  None = 0,            // not a fracture node
  EliminableInterior,  // shared by exactly 2 fracture edges of one fracture
  Intersection,        // shared by >= 3 fracture edges (or 2 of distinct fractures)
  Tip,                 // degree 1, immersed
  BoundaryTip          // degree 1, on the domain boundary
};

struct Edge {
  int a = -1, b = -1;      // node ids, a < b
  int tri0 = -1, tri1 = -1;  // adjacent triangles (tri1 = -1 on the boundary)
};

struct FractureFace {
  int edge = -1;
  int fracture = -1;       // index into MixedDimMesh::fractures
  int tri_plus = -1, tri_minus = -1;
  int node_start = -1, node_end = -1;  // oriented along the fracture walk
  Vec2 tangent = Vec2::Zero();
  Vec2 normal_plus = Vec2::Zero();     // unit, points from + side to - side
  double length = 0.0;
  double arc_mid = 0.0;                // arc-length coordinate of the midpoint
};

struct FracturePath {
  int id = -1;                  // id from the input file
  std::vector<int> faces;       // fracture-face indices, ordered along the walk
  std::vector<int> nodes;       // node ids along the walk, size faces+1
  double length = 0.0;
  std::vector<double> tip_arcs;     // arc coords of immersed tips (subset of {0, length})
  std::vector<double> corner_arcs;  // arc coords of interior direction changes
  bool start_on_boundary = false;
  bool end_on_boundary = false;
};

struct MixedDimMesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> tris;  // counterclockwise
  std::vector<Edge> edges;               // lexicographic by (a,b)
  std::vector<std::array<int, 3>> tri_edges;  // edge opposite local vertex i

  std::vector<int> boundary_tag;      // per edge; -1 untagged
  std::vector<std::string> tag_names;

  std::vector<FractureFace> fracture_faces;
  std::vector<int> edge_fracture_face;  // per edge; -1 if not a fracture face
  std::vector<FracturePath> fractures;
  std::vector<FractureNodeKind> fracture_node_kind;  // per node
  std::vector<char> boundary_node;                   // per node

  // Lineage filled by refine_uniform (empty on a root mesh).
  std::vector<int> parent_tri;   // per triangle
  std::vector<int> parent_face;  // per fracture face

  int tag_id(const std::string& name) const;
  double tri_area(int t) const;
  Vec2 tri_centroid(int t) const;
  double edge_length(int e) const;
  Vec2 edge_midpoint(int e) const;
  double total_area() const;
  double diameter() const;  // bounding-box diagonal
  double max_h() const;     // largest edge length
  bool is_boundary_edge(int e) const { return edges[e].tri1 < 0; }
  int n_fracture_nodes(FractureNodeKind k) const;
};

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Assembles connectivity, fracture paths, orientations and node classification.
/// Throws MeshError on non-conforming input (duplicate triangle, fracture edge
/// that is not an edge of the triangulation, dangling node, zero-area cell, ...).
MixedDimMesh build_mesh(std::vector<Vec2> nodes,
                        std::vector<std::array<int, 3>> tris,
                        const std::vector<std::pair<std::array<int, 2>, int>>& fracture_edges,
                        const std::vector<std::pair<int, std::string>>& boundary_tags);

MixedDimMesh load_mesh(const std::string& path);
void save_mesh(const MixedDimMesh& mesh, const std::string& path);

/// Splits every triangle into 4 congruent children; fracture and boundary tags
/// (and fracture-face orientations) are inherited.
MixedDimMesh refine_uniform(const MixedDimMesh& mesh);

/// Reclassification of fracture nodes (already stored on the mesh); exposed for
/// direct inspection.
std::vector<FractureNodeKind> classify_fracture_nodes(const MixedDimMesh& mesh);

/// Contact-state aperture d0(x) = delta0 * sqrt(atan(a D_i(x)) / atan(a l_i)).
/// D_i is the arc-length distance to the immersed tip set of fracture i.
struct ApertureLaw {
  double delta0 = 0.0;  // m
  double a = 0.0;       // 1/m
  std::vector<double> ell;                // per fracture, m
  std::vector<std::vector<double>> tips;  // arc coords of immersed tips, per fracture

  static ApertureLaw from_mesh(const MixedDimMesh& mesh, double delta0, double a);
};

/// d0 sampled at fracture-face midpoints (face-wise constant field).
std::vector<double> eval_d0(const ApertureLaw& law, const MixedDimMesh& mesh);

}  // namespace fracsim
