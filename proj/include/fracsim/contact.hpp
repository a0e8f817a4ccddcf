/**
 * @file contact.hpp
 * @brief Frictionless Signorini contact at fracture faces: P2 displacement +
 *        face-wise constant multipliers solved by a primal-dual active-set
 *        iteration.
 *
 * The stiffness is factored once per mesh; every active-set pass solves the
 * exact saddle system through its block factorization (dense Schur complement
 * on the face multipliers). Complementarity is exact by construction: lambda
 * is pinned to zero on OPEN faces and the normal jump is constrained to zero
 * on STICK faces.
 */
#pragma once

#include "fracsim/mech.hpp"

namespace fracsim {

enum class FaceState : unsigned char { Open = 0, Stick = 1 };
using ActiveSet = std::vector<FaceState>;

struct ContactReport {
  int iterations = 0;
  bool converged = false;
  double max_penetration = 0.0;      // max over faces of max([u]_n, 0)
  double max_negative_lambda = 0.0;  // max over faces of max(-lambda, 0)
  double max_complementarity = 0.0;  // max |lambda [u]_n| before jump cleanup
  std::vector<int> oscillating_faces;
};

struct ContactSolution {
  Vector u_full;
  Vector lambda;               // Pa, one per fracture face, 0 on OPEN faces
  ActiveSet set;
  std::vector<double> jump_n;  // [u]_{n,sigma}; exactly 0 on STICK faces
  ContactReport report;
};

struct ContactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ContactSolver {
 public:
  ContactSolver(const DisplacementSpace& space, const StressParams& params, int max_iter = 50);

  /// Solves the contact problem at fixed pressures and time-t Dirichlet data.
  /// pm_cells may be empty (no Biot load); pf_faces likewise.
  ContactSolution solve(const Vector& pm_cells, const Vector& pf_faces, double t,
                        const ActiveSet& warm_start, const Vector* body_load = nullptr) const;

  /// One sparse symmetric-indefinite solve of the same saddle system
  /// (verification path; small problems).
  ContactSolution solve_monolithic(const Vector& pm_cells, const Vector& pf_faces, double t,
                                   const ActiveSet& active_set,
                                   const Vector* body_load = nullptr) const;

  const DisplacementSpace& space() const { return space_; }
  const SparseMat& div_cells() const { return D_div_; }
  const SparseMat& eps_product() const { return K_eps_; }
  const SparseMat& jump_pairing() const { return G_; }
  const StressParams& params() const { return params_; }

 private:
  Vector assemble_load(const Vector& pm, const Vector& pf, const Vector* body) const;
  void finalize(ContactSolution& sol) const;

  const DisplacementSpace& space_;
  StressParams params_;
  int max_iter_;
  int nf_;
  SparseMat K_fc_;
  SparseMat D_div_;
  SparseMat K_eps_;
  SparseMat G_;        // full pairing rows |sigma| [.]_{n,sigma}
  SparseMat G_free_t_; // transpose of the free-column part
  Eigen::SimplicialLDLT<SparseMat> ldlt_;
  Eigen::MatrixXd S_;  // G K^{-1} G^T over all faces
  std::vector<double> c_scale_;  // active-set scaling E / h_sigma
};

struct LocalConditionReport {
  std::vector<bool> lambda_nonneg, jump_nonpos, complementarity;
  double max_negative_lambda = 0, max_penetration = 0, max_complementarity = 0;
  bool all_ok = true;
};

/// Face-wise Signorini checks: lambda >= -tol_lambda, [u]_n <= tol_jump,
/// |lambda [u]_n| <= tol_compl.
LocalConditionReport check_local_conditions(const std::vector<double>& jump_n,
                                            const Vector& lambda, double tol_jump,
                                            double tol_lambda, double tol_compl);

}  // namespace fracsim
