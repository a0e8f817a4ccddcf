/**
 * @file diagnostics.hpp
 * @brief Error norms along the fracture network, convergence-rate fits, the
 *        energy-estimate report, the consolidation-column reference series,
 *        and the space/time refinement-study drivers.
 */
#pragma once

#include "fracsim/coupling.hpp"

#include <map>
#include <string>
#include <vector>

namespace fracsim {

/// Piecewise-quadratic scalar field on the fracture network, stored as nodal
/// triples (start, midpoint, end) per face.
class FractureQuadField {
 public:
  static FractureQuadField jump(const DisplacementSpace& space, const Vector& u_full, bool normal);
  /// Continuous piecewise-quadratic L2 projection of face-wise constants,
  /// computed fracture by fracture.
  static FractureQuadField project_lambda(const MixedDimMesh& mesh, const Vector& lambda);
  static FractureQuadField piecewise_constant(const MixedDimMesh& mesh,
                                              const std::vector<double>& values);

  double eval(int face, double xi) const;
  const MixedDimMesh* mesh = nullptr;

 private:
  std::vector<std::array<double, 3>> triples_;
};

/// L2(Gamma) distance integrated with 3-point Gauss on the reference faces;
/// the coarse field is evaluated by projecting the quadrature point onto its
/// ancestor face. Throws if the ancestor map does not cover the network.
double fracture_l2_error(const FractureQuadField& coarse, const FractureQuadField& ref,
                         const std::vector<int>& ref_to_coarse_face);

/// Piecewise-constant cell/face field errors on nested meshes.
double cell_l2_error(const MixedDimMesh& ref_mesh, const Vector& ref_vals,
                     const Vector& coarse_vals, const std::vector<int>& ref_to_coarse_tri);
double face_l2_error(const MixedDimMesh& ref_mesh, const std::vector<double>& ref_vals,
                     const std::vector<double>& coarse_vals,
                     const std::vector<int>& ref_to_coarse_face);

/// Ancestor composition along a refinement chain (coarsest first); maps
/// entities of the finest mesh to the coarsest.
std::vector<int> compose_tri_ancestors(const std::vector<const MixedDimMesh*>& chain);
std::vector<int> compose_face_ancestors(const std::vector<const MixedDimMesh*>& chain);

/// L2(0,T) distance of piecewise-constant-in-time scalar series (value k on
/// (t_{k-1}, t_k]); grids need not match, lookup is by interval midpoint.
double series_l2_error(const TimeGrid& coarse_grid, const std::vector<double>& coarse_vals,
                       const TimeGrid& ref_grid, const std::vector<double>& ref_vals);

struct RateFitResult {
  double slope = 0;               // log-log least squares (pairwise slope when n = 2)
  std::vector<double> pairwise;   // consecutive-pair slopes
};
/// Throws on nonpositive error entries or fewer than 2 records.
RateFitResult rate_fit(const std::vector<double>& h, const std::vector<double>& err);

struct ConvergenceRecord {
  std::string quantity;
  double h_or_dt = 0;
  double error = 0;
  double slope = 0;  // slope of the fit this record belongs to
};

// --- consolidation column reference -----------------------------------------

struct TerzaghiSetup {
  double E = 0, nu = 0, b = 0, M = 0;  // M may be +inf
  double k_over_eta = 0;               // m^2/(Pa s)
  double H = 0;                        // column height, m
  double p0 = 0;                       // initial pressure, Pa
};

/// Plane-strain consolidation coefficient c_v = (k/eta) / (1/M + b^2/(lambda+2mu)).
double terzaghi_cv(const TerzaghiSetup& s);
/// Series solution, z measured from the drained boundary.
double terzaghi_pressure(const TerzaghiSetup& s, double z, double t, int terms = 200);

// --- study drivers ------------------------------------------------------------

struct StudyQuantity {
  std::vector<double> h;    // h or dt per level
  std::vector<double> err;
  double slope = 0;
  std::vector<double> pairwise;
};

struct StudyResult {
  std::map<std::string, StudyQuantity> quantities;
  std::vector<EnergyTable> energies;  // per run level (reference last)
  std::vector<SimResult> runs;        // non-reference runs (level order)
  SimResult reference;
};

/// Uniform-refinement ladder: `levels` runs plus one more refinement as the
/// reference. Jump/multiplier errors at t = T/4, field errors at t = T.
StudyResult space_study(const MixedDimMesh& base, const SimConfig& cfg, int levels);

/// Time-step ladder at fixed mesh: steps, 2*steps, ..., reference = 2^levels*steps.
StudyResult time_study(const MixedDimMesh& mesh, const SimConfig& cfg, int levels);

std::vector<ConvergenceRecord> study_records(const StudyResult& res);
void write_records_csv(const std::string& path, const std::vector<ConvergenceRecord>& records);

}  // namespace fracsim
