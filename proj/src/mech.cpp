#include "fracsim/mech.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace fracsim {

namespace {

// Degree-4 rule, 6 points, weights normalized to 1.
struct TriQuad {
  std::array<Vec2, 6> pts;  // (lambda1, lambda2)
  std::array<double, 6> w;
};

const TriQuad& quad_deg4() {
  static const TriQuad q = [] {
    TriQuad t;
    const double a1 = 0.108103018168070, b1 = 0.445948490915965, w1 = 0.223381589678011;
    const double a2 = 0.816847572980459, b2 = 0.091576213509771, w2 = 0.109951743655322;
    t.pts = {Vec2(b1, b1), Vec2(a1, b1), Vec2(b1, a1),
             Vec2(b2, b2), Vec2(a2, b2), Vec2(b2, a2)};
    t.w = {w1, w1, w1, w2, w2, w2};
    return t;
  }();
  return q;
}

// P2 shapes in barycentric coordinates; slots: corners 0..2, midpoint opposite
// vertex i at slot 3+i.
void p2_shapes(double l1, double l2, std::array<double, 6>& N,
               std::array<Eigen::Vector2d, 6>& dN_dl) {
  double l0 = 1.0 - l1 - l2;
  std::array<double, 3> l = {l0, l1, l2};
  std::array<Eigen::Vector2d, 3> dl = {Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 0),
                                       Eigen::Vector2d(0, 1)};
  for (int i = 0; i < 3; ++i) {
    N[i] = l[i] * (2 * l[i] - 1);
    dN_dl[i] = (4 * l[i] - 1) * dl[i];
  }
  for (int i = 0; i < 3; ++i) {
    int j = (i + 1) % 3, k = (i + 2) % 3;
    N[3 + i] = 4 * l[j] * l[k];
    dN_dl[3 + i] = 4.0 * (l[k] * dl[j] + l[j] * dl[k]);
  }
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

int env_threads() {
  const char* s = std::getenv("FRACSIM_THREADS");
  if (!s) return 1;
  int n = std::atoi(s);
  int hw = (int)std::thread::hardware_concurrency();
  return std::max(1, std::min(n, hw > 0 ? hw : 1));
}

// Deterministic parallel element loop: each iteration writes its own slot,
// results merged sequentially afterwards.
template <typename Fn>
void parallel_for(int n, const Fn& fn) {
  int nt = std::min(env_threads(), n);
  if (nt <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next(0);
  std::vector<std::thread> pool;
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(64); i < n; i = next.fetch_add(64))
        for (int j = i; j < std::min(i + 64, n); ++j) fn(j);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

Eigen::Matrix3d plane_strain_D(const StressParams& p) {
  Eigen::Matrix3d D;
  double c = p.E / ((1 + p.nu) * (1 - 2 * p.nu));
  D << c * (1 - p.nu), c * p.nu, 0, c * p.nu, c * (1 - p.nu), 0, 0, 0, c * (1 - 2 * p.nu) / 2;
  return D;
}

Vector DisplacementSpace::dirichlet_values(double t) const {
  Vector v = Vector::Zero(n_vec());
  for (size_t i = 0; i < constrained.size(); ++i) {
    int dof = constrained[i];
    const MechBC& b = bc->at(mesh->tag_names[constraint_tag[i]]);
    v[dof] = b.value_at(dof & 1, t);
  }
  return v;
}

Vector DisplacementSpace::restrict_free(const Vector& full) const {
  Vector r(n_free());
  for (int i = 0; i < n_free(); ++i) r[i] = full[free_dofs[i]];
  return r;
}

Vector DisplacementSpace::expand_free(const Vector& free_part, const Vector& dirichlet_full) const {
  Vector full = dirichlet_full;
  for (int i = 0; i < n_free(); ++i) full[free_dofs[i]] = free_part[i];
  return full;
}

DisplacementSpace build_p2_space(const MixedDimMesh& mesh, const MechBCTable& bc) {
  DisplacementSpace sp;
  sp.mesh = &mesh;
  sp.bc = &bc;
  const int nt = (int)mesh.tris.size();

  UnionFind uf(6 * nt);
  auto slot = [&](int t, int s) { return 6 * t + s; };
  auto corner_slot_of = [&](int t, int node) {
    for (int i = 0; i < 3; ++i)
      if (mesh.tris[t][i] == node) return i;
    throw std::logic_error("node not in triangle");
  };
  auto mid_slot_of = [&](int t, int e) {
    for (int i = 0; i < 3; ++i)
      if (mesh.tri_edges[t][i] == e) return 3 + i;
    throw std::logic_error("edge not in triangle");
  };

  for (int e = 0; e < (int)mesh.edges.size(); ++e) {
    const Edge& ed = mesh.edges[e];
    if (ed.tri1 < 0 || mesh.edge_fracture_face[e] >= 0) continue;
    uf.unite(slot(ed.tri0, mid_slot_of(ed.tri0, e)), slot(ed.tri1, mid_slot_of(ed.tri1, e)));
    for (int n : {ed.a, ed.b})
      uf.unite(slot(ed.tri0, corner_slot_of(ed.tri0, n)),
               slot(ed.tri1, corner_slot_of(ed.tri1, n)));
  }

  std::vector<int> class_id(6 * nt, -1);
  sp.tri_dofs.resize(nt);
  for (int t = 0; t < nt; ++t)
    for (int s = 0; s < 6; ++s) {
      int root = uf.find(slot(t, s));
      if (class_id[root] < 0) {
        class_id[root] = sp.n_scalar++;
        Vec2 pos =
            s < 3 ? mesh.nodes[mesh.tris[t][s]] : mesh.edge_midpoint(mesh.tri_edges[t][s - 3]);
        sp.dof_pos.push_back(pos);
      }
      sp.tri_dofs[t][s] = class_id[root];
    }

  sp.face_trace.resize(mesh.fracture_faces.size());
  for (int f = 0; f < (int)mesh.fracture_faces.size(); ++f) {
    const FractureFace& ff = mesh.fracture_faces[f];
    for (int side = 0; side < 2; ++side) {
      int t = side == 0 ? ff.tri_plus : ff.tri_minus;
      std::array<int, 3> tr = {sp.tri_dofs[t][corner_slot_of(t, ff.node_start)],
                               sp.tri_dofs[t][mid_slot_of(t, ff.edge)],
                               sp.tri_dofs[t][corner_slot_of(t, ff.node_end)]};
      (side == 0 ? sp.face_trace[f].plus : sp.face_trace[f].minus) = tr;
    }
  }

  sp.is_constrained.assign(sp.n_vec(), 0);
  std::vector<int> tag_of(sp.n_vec(), -1);
  for (int e = 0; e < (int)mesh.edges.size(); ++e) {
    if (!mesh.is_boundary_edge(e) || mesh.boundary_tag[e] < 0) continue;
    auto it = bc.find(mesh.tag_names[mesh.boundary_tag[e]]);
    if (it == bc.end()) continue;
    const MechBC& b = it->second;
    int t = mesh.edges[e].tri0;
    std::array<int, 3> dofs = {sp.tri_dofs[t][corner_slot_of(t, mesh.edges[e].a)],
                               sp.tri_dofs[t][mid_slot_of(t, e)],
                               sp.tri_dofs[t][corner_slot_of(t, mesh.edges[e].b)]};
    for (int comp = 0; comp < 2; ++comp) {
      if (!b.constrains(comp)) continue;
      for (int s : dofs) {
        int dof = 2 * s + comp;
        if (!sp.is_constrained[dof]) {
          sp.is_constrained[dof] = 1;
          tag_of[dof] = mesh.boundary_tag[e];
        }
      }
    }
  }
  sp.free_index.assign(sp.n_vec(), -1);
  for (int d = 0; d < sp.n_vec(); ++d) {
    if (sp.is_constrained[d]) {
      sp.constrained.push_back(d);
      sp.constraint_tag.push_back(tag_of[d]);
    } else {
      sp.free_index[d] = (int)sp.free_dofs.size();
      sp.free_dofs.push_back(d);
    }
  }

  // Every connected component of the cut domain must reach a Dirichlet
  // constraint, else rigid modes are unconstrained.
  UnionFind comp(nt);
  for (int e = 0; e < (int)mesh.edges.size(); ++e) {
    const Edge& ed = mesh.edges[e];
    if (ed.tri1 >= 0 && mesh.edge_fracture_face[e] < 0) comp.unite(ed.tri0, ed.tri1);
  }
  std::vector<char> anchored(nt, 0);
  for (int t = 0; t < nt; ++t)
    for (int s = 0; s < 6; ++s)
      for (int c = 0; c < 2; ++c)
        if (sp.is_constrained[2 * sp.tri_dofs[t][s] + c]) anchored[comp.find(t)] = 1;
  for (int t = 0; t < nt; ++t)
    if (!anchored[comp.find(t)])
      throw std::runtime_error(
          "floating component: part of the cut domain has no Dirichlet constraint (Korn fails)");
  return sp;
}

namespace {

template <typename LocalFn>
SparseMat assemble_vector_matrix(const DisplacementSpace& sp, const LocalFn& local) {
  const auto& mesh = *sp.mesh;
  const int nt = (int)mesh.tris.size();
  std::vector<Eigen::Matrix<double, 12, 12>> cellmat(nt);
  parallel_for(nt, [&](int t) { cellmat[t] = local(t); });
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(144 * nt);
  for (int t = 0; t < nt; ++t)
    for (int a = 0; a < 6; ++a)
      for (int ca = 0; ca < 2; ++ca)
        for (int b2 = 0; b2 < 6; ++b2)
          for (int cb = 0; cb < 2; ++cb) {
            double v = cellmat[t](2 * a + ca, 2 * b2 + cb);
            if (v != 0.0)
              trip.emplace_back(2 * sp.tri_dofs[t][a] + ca, 2 * sp.tri_dofs[t][b2] + cb, v);
          }
  SparseMat A(sp.n_vec(), sp.n_vec());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

Eigen::Matrix<double, 12, 12> elastic_local(const MixedDimMesh& mesh, int t,
                                            const Eigen::Matrix3d& D) {
  const Vec2& p0 = mesh.nodes[mesh.tris[t][0]];
  const Vec2& p1 = mesh.nodes[mesh.tris[t][1]];
  const Vec2& p2 = mesh.nodes[mesh.tris[t][2]];
  Eigen::Matrix2d J;
  J.col(0) = p1 - p0;
  J.col(1) = p2 - p0;
  double detJ = J.determinant();
  Eigen::Matrix2d JinvT = J.inverse().transpose();
  const TriQuad& q = quad_deg4();
  Eigen::Matrix<double, 12, 12> K = Eigen::Matrix<double, 12, 12>::Zero();
  std::array<double, 6> N;
  std::array<Eigen::Vector2d, 6> dN;
  for (int qp = 0; qp < 6; ++qp) {
    p2_shapes(q.pts[qp].x(), q.pts[qp].y(), N, dN);
    Eigen::Matrix<double, 3, 12> B = Eigen::Matrix<double, 3, 12>::Zero();
    for (int j = 0; j < 6; ++j) {
      Eigen::Vector2d g = JinvT * dN[j];
      B(0, 2 * j) = g.x();
      B(1, 2 * j + 1) = g.y();
      B(2, 2 * j) = g.y();
      B(2, 2 * j + 1) = g.x();
    }
    K += (q.w[qp] * 0.5 * detJ) * B.transpose() * D * B;
  }
  return K;
}

}  // namespace

SparseMat assemble_stiffness(const DisplacementSpace& space, const StressParams& params) {
  Eigen::Matrix3d D = plane_strain_D(params);
  return assemble_vector_matrix(space, [&](int t) { return elastic_local(*space.mesh, t, D); });
}

SparseMat assemble_eps_product(const DisplacementSpace& space) {
  Eigen::Matrix3d D;
  D << 1, 0, 0, 0, 1, 0, 0, 0, 0.5;
  return assemble_vector_matrix(space, [&](int t) { return elastic_local(*space.mesh, t, D); });
}

SparseMat assemble_div_cells(const DisplacementSpace& space) {
  const auto& mesh = *space.mesh;
  std::vector<Eigen::Triplet<double>> trip;
  const TriQuad& q = quad_deg4();
  std::array<double, 6> N;
  std::array<Eigen::Vector2d, 6> dN;
  for (int t = 0; t < (int)mesh.tris.size(); ++t) {
    const Vec2& p0 = mesh.nodes[mesh.tris[t][0]];
    Eigen::Matrix2d J;
    J.col(0) = mesh.nodes[mesh.tris[t][1]] - p0;
    J.col(1) = mesh.nodes[mesh.tris[t][2]] - p0;
    double detJ = J.determinant();
    Eigen::Matrix2d JinvT = J.inverse().transpose();
    Eigen::Matrix<double, 1, 12> row = Eigen::Matrix<double, 1, 12>::Zero();
    for (int qp = 0; qp < 6; ++qp) {
      p2_shapes(q.pts[qp].x(), q.pts[qp].y(), N, dN);
      for (int j = 0; j < 6; ++j) {
        Eigen::Vector2d g = JinvT * dN[j];
        row(0, 2 * j) += q.w[qp] * 0.5 * detJ * g.x();
        row(0, 2 * j + 1) += q.w[qp] * 0.5 * detJ * g.y();
      }
    }
    for (int j = 0; j < 6; ++j)
      for (int c = 0; c < 2; ++c) {
        double v = row(0, 2 * j + c);
        if (v != 0.0) trip.emplace_back(t, 2 * space.tri_dofs[t][j] + c, v);
      }
  }
  SparseMat Dv((int)mesh.tris.size(), space.n_vec());
  Dv.setFromTriplets(trip.begin(), trip.end());
  return Dv;
}

SparseMat jump_rows(const DisplacementSpace& space) {
  const auto& mesh = *space.mesh;
  std::vector<Eigen::Triplet<double>> trip;
  const double w[3] = {1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0};  // exact face average of P2 traces
  for (int f = 0; f < (int)mesh.fracture_faces.size(); ++f) {
    const FractureFace& ff = mesh.fracture_faces[f];
    const auto& tr = space.face_trace[f];
    for (int k = 0; k < 3; ++k)
      for (int c = 0; c < 2; ++c) {
        trip.emplace_back(f, 2 * tr.plus[k] + c, ff.length * w[k] * ff.normal_plus[c]);
        trip.emplace_back(f, 2 * tr.minus[k] + c, -ff.length * w[k] * ff.normal_plus[c]);
      }
  }
  SparseMat G((int)mesh.fracture_faces.size(), space.n_vec());
  G.setFromTriplets(trip.begin(), trip.end());
  return G;
}

Vector body_load(const DisplacementSpace& space, const std::function<Vec2(const Vec2&)>& f) {
  const auto& mesh = *space.mesh;
  Vector load = Vector::Zero(space.n_vec());
  const TriQuad& q = quad_deg4();
  std::array<double, 6> N;
  std::array<Eigen::Vector2d, 6> dN;
  for (int t = 0; t < (int)mesh.tris.size(); ++t) {
    const Vec2& p0 = mesh.nodes[mesh.tris[t][0]];
    const Vec2& p1 = mesh.nodes[mesh.tris[t][1]];
    const Vec2& p2 = mesh.nodes[mesh.tris[t][2]];
    double area = mesh.tri_area(t);
    for (int qp = 0; qp < 6; ++qp) {
      double l1 = q.pts[qp].x(), l2 = q.pts[qp].y();
      Vec2 x = (1 - l1 - l2) * p0 + l1 * p1 + l2 * p2;
      Vec2 fx = f(x);
      p2_shapes(l1, l2, N, dN);
      for (int j = 0; j < 6; ++j)
        for (int c = 0; c < 2; ++c)
          load[2 * space.tri_dofs[t][j] + c] += q.w[qp] * area * N[j] * fx[c];
    }
  }
  return load;
}

namespace {

Vec2 side_average(const DisplacementSpace& space, const Vector& u, int face, int side) {
  const auto& tr = side == 0 ? space.face_trace[face].plus : space.face_trace[face].minus;
  Vec2 avg = Vec2::Zero();
  const double w[3] = {1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0};
  for (int k = 0; k < 3; ++k) avg += w[k] * Vec2(u[2 * tr[k]], u[2 * tr[k] + 1]);
  return avg;
}

}  // namespace

std::vector<double> jump_normal_avg(const DisplacementSpace& space, const Vector& u_full) {
  const auto& mesh = *space.mesh;
  std::vector<double> j(mesh.fracture_faces.size());
  for (int f = 0; f < (int)mesh.fracture_faces.size(); ++f) {
    Vec2 d = side_average(space, u_full, f, 0) - side_average(space, u_full, f, 1);
    j[f] = d.dot(mesh.fracture_faces[f].normal_plus);
  }
  return j;
}

std::vector<double> jump_tangent_avg(const DisplacementSpace& space, const Vector& u_full) {
  const auto& mesh = *space.mesh;
  std::vector<double> j(mesh.fracture_faces.size());
  for (int f = 0; f < (int)mesh.fracture_faces.size(); ++f) {
    Vec2 d = side_average(space, u_full, f, 0) - side_average(space, u_full, f, 1);
    j[f] = d.dot(mesh.fracture_faces[f].tangent);
  }
  return j;
}

Vec2 trace_eval(const DisplacementSpace& space, const Vector& u_full, int face, int side,
                double xi) {
  const auto& tr = side == 0 ? space.face_trace[face].plus : space.face_trace[face].minus;
  const double N[3] = {(1 - xi) * (1 - 2 * xi), 4 * xi * (1 - xi), xi * (2 * xi - 1)};
  Vec2 v = Vec2::Zero();
  for (int k = 0; k < 3; ++k) v += N[k] * Vec2(u_full[2 * tr[k]], u_full[2 * tr[k] + 1]);
  return v;
}

Vec2 eval_u(const DisplacementSpace& space, const Vector& u_full, int tri, double l1, double l2) {
  std::array<double, 6> N;
  std::array<Eigen::Vector2d, 6> dN;
  p2_shapes(l1, l2, N, dN);
  Vec2 v = Vec2::Zero();
  for (int j = 0; j < 6; ++j) {
    int s = space.tri_dofs[tri][j];
    v += N[j] * Vec2(u_full[2 * s], u_full[2 * s + 1]);
  }
  return v;
}

Eigen::Matrix2d eval_grad_u(const DisplacementSpace& space, const Vector& u_full, int tri,
                            double l1, double l2) {
  const auto& mesh = *space.mesh;
  const Vec2& p0 = mesh.nodes[mesh.tris[tri][0]];
  Eigen::Matrix2d J;
  J.col(0) = mesh.nodes[mesh.tris[tri][1]] - p0;
  J.col(1) = mesh.nodes[mesh.tris[tri][2]] - p0;
  Eigen::Matrix2d JinvT = J.inverse().transpose();
  std::array<double, 6> N;
  std::array<Eigen::Vector2d, 6> dN;
  p2_shapes(l1, l2, N, dN);
  Eigen::Matrix2d G = Eigen::Matrix2d::Zero();  // G(i,j) = d u_i / d x_j
  for (int j = 0; j < 6; ++j) {
    int s = space.tri_dofs[tri][j];
    Eigen::Vector2d g = JinvT * dN[j];
    G.row(0) += u_full[2 * s] * g.transpose();
    G.row(1) += u_full[2 * s + 1] * g.transpose();
  }
  return G;
}

DirichletSplit split_dirichlet(const SparseMat& A, const DisplacementSpace& space) {
  std::vector<Eigen::Triplet<double>> ff, fc;
  std::vector<int> cidx(space.n_vec(), -1);
  for (size_t i = 0; i < space.constrained.size(); ++i) cidx[space.constrained[i]] = (int)i;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMat::InnerIterator it(A, k); it; ++it) {
      int r = space.free_index[it.row()];
      if (r < 0) continue;
      int c = space.free_index[it.col()];
      if (c >= 0)
        ff.emplace_back(r, c, it.value());
      else
        fc.emplace_back(r, cidx[it.col()], it.value());
    }
  DirichletSplit out;
  out.A_ff.resize(space.n_free(), space.n_free());
  out.A_ff.setFromTriplets(ff.begin(), ff.end());
  out.A_fc.resize(space.n_free(), (int)space.constrained.size());
  out.A_fc.setFromTriplets(fc.begin(), fc.end());
  return out;
}

double infsup_estimate(const DisplacementSpace& space) {
  const auto& mesh = *space.mesh;
  const int nf = (int)mesh.fracture_faces.size();
  if (nf == 0) throw std::runtime_error("inf-sup estimate: empty multiplier space");
  SparseMat Keps = assemble_eps_product(space);
  auto split = split_dirichlet(Keps, space);
  Eigen::SimplicialLDLT<SparseMat> ldlt(split.A_ff);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("inf-sup estimate: singular energy norm (Korn violated)");

  SparseMat G = jump_rows(space);
  Eigen::MatrixXd Bf = Eigen::MatrixXd::Zero(nf, space.n_free());
  for (int k = 0; k < G.outerSize(); ++k)
    for (SparseMat::InnerIterator it(G, k); it; ++it) {
      int c = space.free_index[it.col()];
      if (c >= 0) Bf(it.row(), c) += it.value();
    }
  Eigen::MatrixXd X = ldlt.solve(Bf.transpose());
  Eigen::MatrixXd S = Bf * X;  // B K^{-1} B^T
  Eigen::VectorXd Mdiag(nf);
  for (int f = 0; f < nf; ++f) {
    double len = mesh.fracture_faces[f].length;
    Mdiag[f] = len * len;  // |sigma| h_sigma
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(
      S, Eigen::MatrixXd(Mdiag.asDiagonal()));
  double theta = es.eigenvalues().minCoeff();
  return std::sqrt(std::max(0.0, theta));
}

}  // namespace fracsim
