/**
 * @file flow.hpp
 * @brief Hybrid finite volume discretization of the mixed-dimensional Darcy
 *        flow: cell + edge unknowns in the matrix (two edge unknowns per
 *        fracture edge), face + intersection-node unknowns on the fracture
 *        network, stabilized cone gradients, interface jump terms.
 *
 * Interior fracture nodes shared by two faces of one fracture are condensed
 * through the local two-point flux-continuity relation; with the canonical
 * stabilization the 1D face-node stiffness carries no node-node coupling, so
 * the condensation is exact and local.
 */
#pragma once

#include "fracsim/mesh.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <map>
#include <optional>

namespace fracsim {

using SparseMat = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

struct FlowBC {
  enum class Type { NoFlux, Dirichlet };
  Type type = Type::NoFlux;
  double value = 0.0;  // Pa, for Dirichlet
};
using FlowBCTable = std::map<std::string, FlowBC>;

struct FlowCoeffs {
  Eigen::Matrix2d Km = Eigen::Matrix2d::Identity();  // m^2
  double eta = 1.0;                                  // Pa s
  double Lambda_f = 1.0;                             // m/(Pa s)
  bool lambda_df_dependent = false;                  // hook: Lambda_f = d_f/(6 eta)
};

/// Index layout over the full unknown vector (pinned Dirichlet slots included).
struct FlowDofLayout {
  const MixedDimMesh* mesh = nullptr;
  int n_cells = 0;
  std::vector<int> edge_slot;       // per edge: first slot; fracture edges own two
  std::vector<char> edge_two_sided; // per edge
  std::vector<int> face_slot;       // per fracture face
  std::vector<int> node_slot;       // per node: slot if intersection unknown, else -1
  std::vector<double> node_pin;     // per node: Dirichlet value for pinned fracture
                                    // boundary nodes (NaN otherwise)
  int n_full = 0;

  std::vector<char> pinned;         // per slot
  std::vector<double> pin_value;    // per slot
  std::vector<int> full_to_red;     // -1 for pinned
  std::vector<int> red_to_full;
  int n_red = 0;

  int cell_dof(int K) const { return K; }
  int edge_dof(int e, int side) const { return edge_slot[e] + side; }
  /// Side-resolved edge unknown as seen from cell K.
  int edge_dof_for_cell(int e, int K) const;
  int face_dof(int f) const { return face_slot[f]; }

  Vector reduce(const Vector& full) const;
  Vector expand(const Vector& red) const;  // pinned slots get their BC values
};

FlowDofLayout build_flow_layout(const MixedDimMesh& mesh, const FlowBCTable& bc);

/// Cone geometry of the matrix HFV scheme (independent of the permeability).
struct HFVGeometry {
  struct Cell {
    // Gradient operators as linear maps of local dofs (v_K, v_e0, v_e1, v_e2).
    Eigen::Matrix<double, 2, 4> grad_cell;
    std::array<Eigen::Matrix<double, 2, 4>, 3> grad_cone;
    std::array<double, 3> cone_measure;
    double area;
  };
  std::vector<Cell> cells;
};

HFVGeometry build_hfv_geometry(const MixedDimMesh& mesh);

/// Local 4x4 HFV matrix of one cell for diffusion tensor W: sum over cones of
/// |D| (W grad)·grad. Symmetric, PSD with the constant vector as kernel and
/// rank 3 (checked; throws on a defective cell).
Eigen::Matrix4d hfv_local_matrix(const HFVGeometry::Cell& c, const Eigen::Matrix2d& W);

// --- operators on full vectors ---------------------------------------------

/// Consistent per-cell gradient of the matrix unknowns.
Eigen::Matrix2Xd cell_gradients(const MixedDimMesh& mesh, const HFVGeometry& geom,
                                const FlowDofLayout& layout, const Vector& p_full);

/// Sum over cones of |D| (W grad)·grad — the square of the discrete-gradient
/// seminorm when W = I.
double matrix_gradient_energy(const MixedDimMesh& mesh, const HFVGeometry& geom,
                              const FlowDofLayout& layout, const Vector& p_full,
                              const Eigen::Matrix2d& W);

/// Values at every fracture node, reconstructing condensed nodes through the
/// transmissibility-weighted flux-continuity relation (k = per-face
/// conductivity weights).
std::vector<double> fracture_node_values(const MixedDimMesh& mesh, const FlowDofLayout& layout,
                                         const Vector& p_full, const std::vector<double>& k_faces);

/// Per-face tangential gradient (consistent part) and stabilized energy.
std::vector<double> fracture_gradients(const MixedDimMesh& mesh, const FlowDofLayout& layout,
                                       const Vector& p_full, const std::vector<double>& node_values);
double fracture_gradient_energy(const MixedDimMesh& mesh, const FlowDofLayout& layout,
                                const Vector& p_full, const std::vector<double>& node_values,
                                const std::vector<double>& face_weights);

/// Jump reconstruction on side 0 (+) or 1 (-) of a fracture face (Pa).
double jump_matrix_fracture(const MixedDimMesh& mesh, const FlowDofLayout& layout,
                            const Vector& p_full, int face, int side);

/// Discrete norm: ||grad_m v|| + ||d0^{3/2} grad_f v|| + sum_a ||[v]_a||.
double norm_Dp(const MixedDimMesh& mesh, const HFVGeometry& geom, const FlowDofLayout& layout,
               const Vector& p_full, const std::vector<double>& d0_faces);

double piM_l2(const MixedDimMesh& mesh, const FlowDofLayout& layout, const Vector& p_full);
double piF_l2(const MixedDimMesh& mesh, const FlowDofLayout& layout, const Vector& p_full);

/// Point-value interpolation: cells/edges at centroids/midpoints, fracture
/// faces at midpoints, intersection nodes at node coordinates.
Vector interpolate_initial(const MixedDimMesh& mesh, const FlowDofLayout& layout,
                           const std::function<double(const Vec2&)>& p_matrix,
                           const std::function<double(const Vec2&)>& p_fracture);

// --- assembled system --------------------------------------------------------

/// Backward-Euler flow operator split as constant part (matrix HFV stiffness +
/// interface transmissibility + accumulation) plus the aperture-dependent
/// fracture tangential block, solved by a Woodbury update on the factored
/// constant part. A direct sparse path is kept for verification.
class FlowSystem {
 public:
  FlowSystem(const MixedDimMesh& mesh, const FlowDofLayout& layout, const FlowCoeffs& coeffs);

  /// one_over_M_dt = 1/(M dt) for a transient step, 0 for the steady operator.
  void prepare(double one_over_M_dt);

  /// Solves (S + frac(df)) p = rhs_red - dirichlet lifts. rhs_physical_red is
  /// the source/accumulation functional on reduced dofs.
  Vector solve(const Vector& rhs_physical_red, const std::vector<double>& df) const;

  /// Direct-assembly path (verification / fallback).
  Vector solve_direct(const Vector& rhs_physical_red, const std::vector<double>& df) const;

  /// Conductivities d^3/(12 eta) used for the tangential block.
  std::vector<double> conductivities(const std::vector<double>& df) const;

  /// Net volumetric influx through Dirichlet boundaries for a given state.
  double boundary_influx(const Vector& p_full, const std::vector<double>& df) const;

  /// Accurate residual of the assembled equations for a full-state vector
  /// (difference-form evaluation; free rows only).
  Vector residual(const Vector& rhs_physical_red, const Vector& p_full,
                  const std::vector<double>& df) const;

  const SparseMat& stiffness_reduced() const { return S_stiff_; }
  const HFVGeometry& geometry() const { return geom_; }
  const Vector& cell_measures() const { return cell_m_; }
  const Vector& face_measures() const { return face_m_; }

  void dump_triplets(const std::string& path, const std::vector<double>& df) const;

 private:
  struct FracBlock;  // dense tangential block + pins
  FracBlock fracture_block(const std::vector<double>& df) const;

  const MixedDimMesh& mesh_;
  const FlowDofLayout& layout_;
  FlowCoeffs coeffs_;
  HFVGeometry geom_;
  SparseMat S_stiff_;          // reduced, constant part without accumulation
  Vector stiff_lift_;          // reduced, stiffness columns times pinned values
  Vector cell_m_, face_m_;     // measures
  std::vector<int> frac_subset_;        // reduced dofs of faces + intersection nodes
  std::vector<int> red_to_subset_;
  double acc_coeff_ = -1.0;
  Vector diag_extra_;  // accumulation + intersection placeholder diagonal
  Vector acc_diag_;    // accumulation diagonal only
  Vector scale_;       // Jacobi equilibration factors

  Eigen::SimplicialLDLT<SparseMat> ldlt_;
  Eigen::MatrixXd Y_;  // S^{-1} E
  Eigen::MatrixXd W_;  // E^T S^{-1} E
};

void dump_triplets(const SparseMat& A, const std::string& path);

}  // namespace fracsim
