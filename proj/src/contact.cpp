#include "fracsim/contact.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <set>

namespace fracsim {

ContactSolver::ContactSolver(const DisplacementSpace& space, const StressParams& params,
                             int max_iter)
    : space_(space), params_(params), max_iter_(max_iter) {
  const auto& mesh = *space.mesh;
  nf_ = (int)mesh.fracture_faces.size();

  SparseMat K = assemble_stiffness(space, params);
  auto split = split_dirichlet(K, space);
  K_fc_ = split.A_fc;
  ldlt_.compute(split.A_ff);
  if (ldlt_.info() != Eigen::Success)
    throw ContactError("stiffness factorization failed (Korn / floating component?)");

  D_div_ = assemble_div_cells(space);
  K_eps_ = assemble_eps_product(space);
  G_ = jump_rows(space);

  // Free-column part of G, transposed for fast residual updates.
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < G_.outerSize(); ++k)
    for (SparseMat::InnerIterator it(G_, k); it; ++it) {
      int c = space.free_index[it.col()];
      if (c >= 0) trip.emplace_back(c, it.row(), it.value());
    }
  G_free_t_.resize(space.n_free(), nf_);
  G_free_t_.setFromTriplets(trip.begin(), trip.end());

  // Dense Schur complement over all faces, built in column blocks.
  S_.resize(nf_, nf_);
  const int block = 64;
  for (int j0 = 0; j0 < nf_; j0 += block) {
    int nb = std::min(block, nf_ - j0);
    Eigen::MatrixXd rhs = Eigen::MatrixXd(G_free_t_.middleCols(j0, nb));
    Eigen::MatrixXd X = ldlt_.solve(rhs);
    S_.middleCols(j0, nb) = G_free_t_.transpose() * X;
  }

  c_scale_.resize(nf_);
  for (int f = 0; f < nf_; ++f) c_scale_[f] = params.E / mesh.fracture_faces[f].length;
}

Vector ContactSolver::assemble_load(const Vector& pm, const Vector& pf, const Vector* body) const {
  Vector F = Vector::Zero(space_.n_vec());
  if (body) F = *body;
  if (pm.size() > 0 && params_.b != 0.0) F += params_.b * (D_div_.transpose() * pm);
  if (pf.size() > 0) F -= G_.transpose() * pf;
  return F;
}

void ContactSolver::finalize(ContactSolution& sol) const {
  auto raw = jump_normal_avg(space_, sol.u_full);
  sol.report.max_penetration = 0;
  sol.report.max_negative_lambda = 0;
  sol.report.max_complementarity = 0;
  for (int f = 0; f < nf_; ++f) {
    sol.report.max_complementarity =
        std::max(sol.report.max_complementarity, std::abs(sol.lambda[f] * raw[f]));
    if (sol.set[f] == FaceState::Open)
      sol.report.max_penetration = std::max(sol.report.max_penetration, raw[f]);
    else
      sol.report.max_negative_lambda =
          std::max(sol.report.max_negative_lambda, -sol.lambda[f]);
  }
  // The STICK constraint [u]_n = 0 holds by construction; strip solver
  // roundoff so d_f = d0 - [u]_n stays bounded below by d0 exactly.
  sol.jump_n = raw;
  for (int f = 0; f < nf_; ++f)
    if (sol.set[f] == FaceState::Stick) sol.jump_n[f] = 0.0;
}

ContactSolution ContactSolver::solve(const Vector& pm, const Vector& pf, double t,
                                     const ActiveSet& warm_start, const Vector* body) const {
  Vector uD = space_.dirichlet_values(t);
  Vector uDc(space_.constrained.size());
  for (size_t i = 0; i < space_.constrained.size(); ++i) uDc[i] = uD[space_.constrained[i]];

  Vector F_free = space_.restrict_free(assemble_load(pm, pf, body)) - K_fc_ * uDc;
  Vector u0 = ldlt_.solve(F_free);
  Vector g = -(G_ * uD);  // active constraint: G_free u_free = g

  ContactSolution sol;
  sol.set = warm_start.empty() ? ActiveSet(nf_, FaceState::Open) : warm_start;
  if ((int)sol.set.size() != nf_) throw ContactError("warm start size mismatch");
  sol.lambda = Vector::Zero(nf_);

  ActiveSet prev = sol.set, prev2 = sol.set;
  Vector u_free = u0;
  for (int it = 0; it < max_iter_; ++it) {
    std::vector<int> active;
    for (int f = 0; f < nf_; ++f)
      if (sol.set[f] == FaceState::Stick) active.push_back(f);

    sol.lambda.setZero();
    if (active.empty()) {
      u_free = u0;
    } else {
      const int na = (int)active.size();
      Eigen::MatrixXd SA(na, na);
      Eigen::VectorXd rA(na);
      Vector Gu0 = G_free_t_.transpose() * u0;
      for (int i = 0; i < na; ++i) {
        rA[i] = Gu0[active[i]] - g[active[i]];
        for (int j = 0; j < na; ++j) SA(i, j) = S_(active[i], active[j]);
      }
      Eigen::LDLT<Eigen::MatrixXd> sldlt(SA);
      if (sldlt.info() != Eigen::Success)
        throw ContactError("singular contact saddle system (inf-sup failure)");
      Eigen::VectorXd lamA = sldlt.solve(rA);
      Vector lam_patch = Vector::Zero(nf_);
      for (int i = 0; i < na; ++i) {
        sol.lambda[active[i]] = lamA[i];
        lam_patch[active[i]] = lamA[i];
      }
      u_free = u0 - ldlt_.solve(Vector(G_free_t_ * lam_patch));
    }

    sol.u_full = space_.expand_free(u_free, uD);
    auto jn = jump_normal_avg(space_, sol.u_full);

    ActiveSet next(nf_);
    for (int f = 0; f < nf_; ++f)
      next[f] = (sol.lambda[f] + c_scale_[f] * jn[f] > 0) ? FaceState::Stick : FaceState::Open;

    sol.report.iterations = it + 1;
    if (next == sol.set) {
      sol.report.converged = true;
      finalize(sol);
      return sol;
    }
    prev2 = prev;
    prev = sol.set;
    sol.set = next;
  }

  ContactReport rep = sol.report;
  for (int f = 0; f < nf_; ++f)
    if (sol.set[f] != prev[f] || prev[f] != prev2[f]) rep.oscillating_faces.push_back(f);
  std::string faces;
  for (int f : rep.oscillating_faces) faces += " " + std::to_string(f);
  throw ContactError("active-set iteration did not converge after " +
                     std::to_string(max_iter_) + " iterations; oscillating faces:" + faces);
}

ContactSolution ContactSolver::solve_monolithic(const Vector& pm, const Vector& pf, double t,
                                                const ActiveSet& active_set,
                                                const Vector* body) const {
  Vector uD = space_.dirichlet_values(t);
  Vector uDc(space_.constrained.size());
  for (size_t i = 0; i < space_.constrained.size(); ++i) uDc[i] = uD[space_.constrained[i]];
  Vector F_free = space_.restrict_free(assemble_load(pm, pf, body)) - K_fc_ * uDc;
  Vector g = -(G_ * uD);

  std::vector<int> active;
  for (int f = 0; f < nf_; ++f)
    if (active_set[f] == FaceState::Stick) active.push_back(f);
  const int n = space_.n_free(), na = (int)active.size();

  SparseMat K = assemble_stiffness(space_, params_);
  auto split = split_dirichlet(K, space_);
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < split.A_ff.outerSize(); ++k)
    for (SparseMat::InnerIterator it(split.A_ff, k); it; ++it)
      trip.emplace_back(it.row(), it.col(), it.value());
  for (int i = 0; i < na; ++i)
    for (SparseMat::InnerIterator it(G_free_t_, active[i]); it; ++it) {
      trip.emplace_back(it.row(), n + i, it.value());
      trip.emplace_back(n + i, it.row(), it.value());
    }
  SparseMat A(n + na, n + na);
  A.setFromTriplets(trip.begin(), trip.end());
  Vector rhs(n + na);
  rhs.head(n) = F_free;
  for (int i = 0; i < na; ++i) rhs[n + i] = g[active[i]];

  Eigen::SparseLU<SparseMat> lu(A);
  if (lu.info() != Eigen::Success) throw ContactError("monolithic saddle factorization failed");
  Vector x = lu.solve(rhs);

  ContactSolution sol;
  sol.set = active_set;
  sol.u_full = space_.expand_free(x.head(n), uD);
  sol.lambda = Vector::Zero(nf_);
  for (int i = 0; i < na; ++i) sol.lambda[active[i]] = x[n + i];
  sol.report.converged = true;
  finalize(sol);
  return sol;
}

LocalConditionReport check_local_conditions(const std::vector<double>& jump_n,
                                            const Vector& lambda, double tol_jump,
                                            double tol_lambda, double tol_compl) {
  LocalConditionReport rep;
  const int nf = (int)jump_n.size();
  rep.lambda_nonneg.resize(nf);
  rep.jump_nonpos.resize(nf);
  rep.complementarity.resize(nf);
  for (int f = 0; f < nf; ++f) {
    rep.lambda_nonneg[f] = lambda[f] >= -tol_lambda;
    rep.jump_nonpos[f] = jump_n[f] <= tol_jump;
    rep.complementarity[f] = std::abs(lambda[f] * jump_n[f]) <= tol_compl;
    rep.max_negative_lambda = std::max(rep.max_negative_lambda, -lambda[f]);
    rep.max_penetration = std::max(rep.max_penetration, jump_n[f]);
    rep.max_complementarity = std::max(rep.max_complementarity, std::abs(lambda[f] * jump_n[f]));
    rep.all_ok = rep.all_ok && rep.lambda_nonneg[f] && rep.jump_nonpos[f] && rep.complementarity[f];
  }
  return rep;
}

}  // namespace fracsim
