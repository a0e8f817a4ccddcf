/**
 * @file mech.hpp
 * @brief Conforming quadratic elasticity on the cut domain: P2 displacement
 *        with independent degrees of freedom on each side of the fracture
 *        network, plus face-wise constant Lagrange multiplier machinery.
 *
 * Scalar P2 slots (3 vertices + 3 edge midpoints per triangle) are merged
 * across every interior non-fracture edge; the resulting equivalence classes
 * duplicate nodes along fractures sector by sector, which leaves immersed tips
 * single-valued and splits corners, intersections, and boundary tips into one
 * copy per sector.
 */
#pragma once

#include "fracsim/mesh.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <map>

namespace fracsim {

using SparseMat = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

struct MechBC {
  enum class Type { Free, Clamped, Ramp, Prescribed, RollerX, RollerY };
  Type type = Type::Free;
  Vec2 value = Vec2::Zero();  // target displacement (Ramp/Prescribed), m
  double ramp_end_s = 0.0;    // Ramp reaches `value` here and holds

  bool constrains(int comp) const {
    switch (type) {
      case Type::Free: return false;
      case Type::RollerX: return comp == 0;
      case Type::RollerY: return comp == 1;
      default: return true;
    }
  }
  double value_at(int comp, double t) const {
    switch (type) {
      case Type::Clamped:
      case Type::RollerX:
      case Type::RollerY: return 0.0;
      case Type::Prescribed: return value[comp];
      case Type::Ramp: return value[comp] * (ramp_end_s > 0 ? std::min(1.0, t / ramp_end_s) : 1.0);
      default: return 0.0;
    }
  }
};
using MechBCTable = std::map<std::string, MechBC>;

struct StressParams {
  double E = 1.0;   // Pa
  double nu = 0.0;
  double b = 0.0;   // Biot coefficient
};

/// Plane-strain constitutive matrix in Voigt order (exx, eyy, gxy).
Eigen::Matrix3d plane_strain_D(const StressParams& p);

struct DisplacementSpace {
  const MixedDimMesh* mesh = nullptr;
  int n_scalar = 0;
  std::vector<std::array<int, 6>> tri_dofs;  // scalar dof per local slot
                                             // (3 corners, then midpoints opposite each vertex)
  std::vector<Vec2> dof_pos;

  struct FaceTrace {
    std::array<int, 3> plus, minus;  // scalar dofs: start corner, midpoint, end corner
  };
  std::vector<FaceTrace> face_trace;

  std::vector<int> constrained;                  // vector dofs (2*scalar+comp), ascending
  std::vector<int> constraint_tag;               // per constrained dof
  std::vector<char> is_constrained;              // per vector dof
  std::vector<int> free_index;                   // per vector dof, -1 if constrained
  std::vector<int> free_dofs;
  const MechBCTable* bc = nullptr;

  int n_vec() const { return 2 * n_scalar; }
  int n_free() const { return (int)free_dofs.size(); }

  /// Full-length vector holding the Dirichlet values at time t (0 elsewhere).
  Vector dirichlet_values(double t) const;
  Vector restrict_free(const Vector& full) const;
  Vector expand_free(const Vector& free_part, const Vector& dirichlet_full) const;
};

/// Builds the duplicated P2 space and the Dirichlet table; throws on a
/// floating component (no Dirichlet constraint reachable => Korn fails).
DisplacementSpace build_p2_space(const MixedDimMesh& mesh, const MechBCTable& bc);

SparseMat assemble_stiffness(const DisplacementSpace& space, const StressParams& params);
/// Gram matrix of the strain inner product (the squared U0 norm).
SparseMat assemble_eps_product(const DisplacementSpace& space);
/// Cell-wise divergence integrals: (ncells x nvec), row K = int_K div(basis).
SparseMat assemble_div_cells(const DisplacementSpace& space);
/// Multiplier pairing rows: row sigma = |sigma| * [.]_{n,sigma}.
SparseMat jump_rows(const DisplacementSpace& space);
Vector body_load(const DisplacementSpace& space, const std::function<Vec2(const Vec2&)>& f);

/// Face-averaged normal jump [u]_{n,sigma} per fracture face (m).
std::vector<double> jump_normal_avg(const DisplacementSpace& space, const Vector& u_full);
std::vector<double> jump_tangent_avg(const DisplacementSpace& space, const Vector& u_full);

/// P2 trace on one side of a fracture face at arc parameter xi in [0,1].
Vec2 trace_eval(const DisplacementSpace& space, const Vector& u_full, int face, int side, double xi);

/// Field and gradient evaluation inside a triangle (barycentric l1, l2).
Vec2 eval_u(const DisplacementSpace& space, const Vector& u_full, int tri, double l1, double l2);
Eigen::Matrix2d eval_grad_u(const DisplacementSpace& space, const Vector& u_full, int tri,
                            double l1, double l2);

/// Splits a full matrix into free-free and free-constrained blocks.
struct DirichletSplit {
  SparseMat A_ff;
  SparseMat A_fc;
};
DirichletSplit split_dirichlet(const SparseMat& A, const DisplacementSpace& space);

/// Smallest generalized singular value of the multiplier pairing against the
/// strain energy norm, with the face-wise discrete dual norm sum |s| h_s mu^2.
/// Pass a space built with every boundary clamped (the U0 norm). Dense solves:
/// coarse meshes only.
double infsup_estimate(const DisplacementSpace& space);

}  // namespace fracsim
