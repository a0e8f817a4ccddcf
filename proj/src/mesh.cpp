#include "fracsim/mesh.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fracsim {

namespace {

std::array<int, 2> sorted_pair(int a, int b) {
  return a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
}

}  // namespace

int MixedDimMesh::tag_id(const std::string& name) const {
  for (int i = 0; i < (int)tag_names.size(); ++i)
    if (tag_names[i] == name) return i;
  return -1;
}

double MixedDimMesh::tri_area(int t) const {
  const Vec2& p0 = nodes[tris[t][0]];
  const Vec2& p1 = nodes[tris[t][1]];
  const Vec2& p2 = nodes[tris[t][2]];
  return 0.5 * ((p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y()));
}

Vec2 MixedDimMesh::tri_centroid(int t) const {
  return (nodes[tris[t][0]] + nodes[tris[t][1]] + nodes[tris[t][2]]) / 3.0;
}

double MixedDimMesh::edge_length(int e) const {
  return (nodes[edges[e].b] - nodes[edges[e].a]).norm();
}

Vec2 MixedDimMesh::edge_midpoint(int e) const {
  return 0.5 * (nodes[edges[e].a] + nodes[edges[e].b]);
}

double MixedDimMesh::total_area() const {
  double s = 0;
  for (int t = 0; t < (int)tris.size(); ++t) s += tri_area(t);
  return s;
}

double MixedDimMesh::diameter() const {
  Vec2 lo = nodes[0], hi = nodes[0];
  for (const auto& p : nodes) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

double MixedDimMesh::max_h() const {
  double h = 0;
  for (int e = 0; e < (int)edges.size(); ++e) h = std::max(h, edge_length(e));
  return h;
}

int MixedDimMesh::n_fracture_nodes(FractureNodeKind k) const {
  int c = 0;
  for (auto v : fracture_node_kind) c += (v == k);
  return c;
}

std::vector<FractureNodeKind> classify_fracture_nodes(const MixedDimMesh& mesh) {
  const int nn = (int)mesh.nodes.size();
  std::vector<int> degree(nn, 0);
  std::vector<std::set<int>> frac_ids(nn);
  for (const auto& ff : mesh.fracture_faces) {
    const Edge& e = mesh.edges[ff.edge];
    for (int n : {e.a, e.b}) {
      degree[n]++;
      frac_ids[n].insert(ff.fracture);
    }
  }
  std::vector<FractureNodeKind> kind(nn, FractureNodeKind::None);
  for (int n = 0; n < nn; ++n) {
    if (degree[n] == 0) continue;
    if (degree[n] == 1)
      kind[n] = mesh.boundary_node[n] ? FractureNodeKind::BoundaryTip : FractureNodeKind::Tip;
    else if (degree[n] == 2 && frac_ids[n].size() == 1)
      kind[n] = FractureNodeKind::EliminableInterior;
    else
      kind[n] = FractureNodeKind::Intersection;
  }
  return kind;
}

namespace {

// Orders the fracture edges of one fracture id into a simple path and fills the
// per-face orientation data. Throws if the edge set is not a simple path.
FracturePath build_path(MixedDimMesh& mesh, int frac_index, int file_id,
                        const std::vector<int>& face_ids) {
  FracturePath path;
  path.id = file_id;

  std::map<int, std::vector<int>> at_node;  // node -> faces of this fracture
  for (int f : face_ids) {
    const Edge& e = mesh.edges[mesh.fracture_faces[f].edge];
    at_node[e.a].push_back(f);
    at_node[e.b].push_back(f);
  }
  std::vector<int> endpoints;
  for (auto& [n, fs] : at_node) {
    if ((int)fs.size() > 2)
      throw MeshError("fracture " + std::to_string(file_id) + " is not a simple path (node " +
                      std::to_string(n) + " has degree " + std::to_string(fs.size()) + ")");
    if ((int)fs.size() == 1) endpoints.push_back(n);
  }
  if (endpoints.size() != 2)
    throw MeshError("fracture " + std::to_string(file_id) + " is not an open simple path");

  // Deterministic walk start: lexicographically smallest endpoint coordinate.
  int start = endpoints[0];
  auto lex_less = [&](int a, int b) {
    const Vec2& pa = mesh.nodes[a];
    const Vec2& pb = mesh.nodes[b];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    return pa.y() < pb.y();
  };
  if (lex_less(endpoints[1], endpoints[0])) start = endpoints[1];

  std::vector<char> used(face_ids.size(), 0);
  std::map<int, int> face_pos;
  for (int i = 0; i < (int)face_ids.size(); ++i) face_pos[face_ids[i]] = i;

  int node = start;
  double arc = 0.0;
  path.nodes.push_back(node);
  Vec2 prev_tau = Vec2::Zero();
  for (size_t k = 0; k < face_ids.size(); ++k) {
    int next_face = -1;
    for (int f : at_node[node])
      if (!used[face_pos[f]]) next_face = f;
    if (next_face < 0) throw MeshError("fracture " + std::to_string(file_id) + " is disconnected");
    used[face_pos[next_face]] = 1;

    FractureFace& ff = mesh.fracture_faces[next_face];
    const Edge& e = mesh.edges[ff.edge];
    int other = (e.a == node) ? e.b : e.a;
    ff.fracture = frac_index;
    ff.node_start = node;
    ff.node_end = other;
    Vec2 d = mesh.nodes[other] - mesh.nodes[node];
    ff.length = d.norm();
    if (ff.length <= 0) throw MeshError("zero-length fracture face");
    ff.tangent = d / ff.length;
    ff.normal_plus = Vec2(ff.tangent.y(), -ff.tangent.x());
    ff.arc_mid = arc + 0.5 * ff.length;

    // + side: triangle whose centroid lies behind n+ (n+ points + -> -).
    Vec2 mid = 0.5 * (mesh.nodes[e.a] + mesh.nodes[e.b]);
    int t0 = e.tri0, t1 = e.tri1;
    if (t1 < 0)
      throw MeshError("fracture edge " + std::to_string(ff.edge) +
                      " is a boundary edge (fractures must be interior)");
    double s0 = (mesh.tri_centroid(t0) - mid).dot(ff.normal_plus);
    ff.tri_plus = (s0 < 0) ? t0 : t1;
    ff.tri_minus = (s0 < 0) ? t1 : t0;

    if (k > 0 && std::abs(prev_tau.dot(ff.tangent)) < 1.0 - 1e-12)
      path.corner_arcs.push_back(arc);
    prev_tau = ff.tangent;

    arc += ff.length;
    path.faces.push_back(next_face);
    path.nodes.push_back(other);
    node = other;
  }
  path.length = arc;
  path.start_on_boundary = mesh.boundary_node[path.nodes.front()];
  path.end_on_boundary = mesh.boundary_node[path.nodes.back()];

  // Immersed tips: path endpoints that are degree-1 in the whole network and
  // not on the domain boundary. Endpoints abutting another fracture are not tips.
  auto endpoint_kind = [&](int n) { return mesh.fracture_node_kind[n]; };
  if (endpoint_kind(path.nodes.front()) == FractureNodeKind::Tip) path.tip_arcs.push_back(0.0);
  if (endpoint_kind(path.nodes.back()) == FractureNodeKind::Tip) path.tip_arcs.push_back(path.length);
  return path;
}

}  // namespace

MixedDimMesh build_mesh(std::vector<Vec2> nodes,
                        std::vector<std::array<int, 3>> tris,
                        const std::vector<std::pair<std::array<int, 2>, int>>& fracture_edges,
                        const std::vector<std::pair<int, std::string>>& boundary_tags) {
  MixedDimMesh mesh;
  mesh.nodes = std::move(nodes);
  mesh.tris = std::move(tris);
  const int nn = (int)mesh.nodes.size();
  const int nt = (int)mesh.tris.size();
  if (nt == 0) throw MeshError("empty triangulation");

  std::set<std::array<int, 3>> seen;
  for (int t = 0; t < nt; ++t) {
    auto& tri = mesh.tris[t];
    for (int v : tri)
      if (v < 0 || v >= nn) throw MeshError("triangle node index out of range");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw MeshError("degenerate triangle (repeated node)");
    if (mesh.tri_area(t) < 0) std::swap(tri[1], tri[2]);  // normalize to CCW
    if (mesh.tri_area(t) <= 0) throw MeshError("zero-area triangle " + std::to_string(t));
    std::array<int, 3> key = tri;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) throw MeshError("duplicate triangle " + std::to_string(t));
  }

  // Edge table, lexicographic in sorted node pairs.
  std::map<std::array<int, 2>, int> edge_index;
  for (const auto& tri : mesh.tris)
    for (int i = 0; i < 3; ++i) edge_index[sorted_pair(tri[i], tri[(i + 1) % 3])] = 0;
  int ne = 0;
  for (auto& [key, idx] : edge_index) idx = ne++;
  mesh.edges.resize(ne);
  for (const auto& [key, idx] : edge_index) {
    mesh.edges[idx].a = key[0];
    mesh.edges[idx].b = key[1];
  }
  mesh.tri_edges.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.tris[t];
    for (int i = 0; i < 3; ++i) {
      int e = edge_index.at(sorted_pair(tri[(i + 1) % 3], tri[(i + 2) % 3]));
      mesh.tri_edges[t][i] = e;
      Edge& ed = mesh.edges[e];
      if (ed.tri0 < 0)
        ed.tri0 = t;
      else if (ed.tri1 < 0)
        ed.tri1 = t;
      else
        throw MeshError("edge shared by more than two triangles");
    }
  }

  std::vector<char> node_used(nn, 0);
  for (const auto& tri : mesh.tris)
    for (int v : tri) node_used[v] = 1;
  for (int n = 0; n < nn; ++n)
    if (!node_used[n]) throw MeshError("dangling node " + std::to_string(n));

  mesh.boundary_node.assign(nn, 0);
  for (const Edge& e : mesh.edges)
    if (e.tri1 < 0) {
      mesh.boundary_node[e.a] = 1;
      mesh.boundary_node[e.b] = 1;
    }

  // Boundary tags.
  mesh.boundary_tag.assign(ne, -1);
  for (const auto& [e, name] : boundary_tags) {
    if (e < 0 || e >= ne) throw MeshError("boundary tag on unknown edge " + std::to_string(e));
    if (!mesh.is_boundary_edge(e))
      throw MeshError("boundary tag on interior edge " + std::to_string(e));
    int id = mesh.tag_id(name);
    if (id < 0) {
      id = (int)mesh.tag_names.size();
      mesh.tag_names.push_back(name);
    }
    mesh.boundary_tag[e] = id;
  }

  // Fracture faces grouped by file id, in first-appearance order.
  mesh.edge_fracture_face.assign(ne, -1);
  std::vector<int> file_ids;
  std::map<int, std::vector<int>> faces_by_id;
  std::map<int, int> group_of_id;
  for (const auto& [nodes_ab, id] : fracture_edges) {
    auto it = edge_index.find(sorted_pair(nodes_ab[0], nodes_ab[1]));
    if (it == edge_index.end())
      throw MeshError("fracture edge (" + std::to_string(nodes_ab[0]) + "," +
                      std::to_string(nodes_ab[1]) + ") is not an edge of the triangulation");
    int e = it->second;
    if (mesh.edge_fracture_face[e] >= 0) throw MeshError("duplicate fracture edge");
    if (!faces_by_id.count(id)) {
      group_of_id[id] = (int)file_ids.size();
      file_ids.push_back(id);
    }
    FractureFace ff;
    ff.edge = e;
    ff.fracture = group_of_id[id];
    int fi = (int)mesh.fracture_faces.size();
    mesh.fracture_faces.push_back(ff);
    mesh.edge_fracture_face[e] = fi;
    faces_by_id[id].push_back(fi);
  }

  mesh.fracture_node_kind = classify_fracture_nodes(mesh);
  for (int k = 0; k < (int)file_ids.size(); ++k)
    mesh.fractures.push_back(build_path(mesh, k, file_ids[k], faces_by_id[file_ids[k]]));
  return mesh;
}

MixedDimMesh refine_uniform(const MixedDimMesh& mesh) {
  const int nn = (int)mesh.nodes.size();
  const int ne = (int)mesh.edges.size();
  const int nt = (int)mesh.tris.size();

  std::vector<Vec2> nodes = mesh.nodes;
  nodes.reserve(nn + ne);
  std::vector<int> edge_mid(ne);
  for (int e = 0; e < ne; ++e) {
    edge_mid[e] = (int)nodes.size();
    nodes.push_back(mesh.edge_midpoint(e));
  }

  std::vector<std::array<int, 3>> tris;
  tris.reserve(4 * nt);
  std::vector<int> parent;
  parent.reserve(4 * nt);
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.tris[t];
    int m0 = edge_mid[mesh.tri_edges[t][0]];  // midpoint opposite v0, on edge (v1,v2)
    int m1 = edge_mid[mesh.tri_edges[t][1]];
    int m2 = edge_mid[mesh.tri_edges[t][2]];
    tris.push_back({tri[0], m2, m1});
    tris.push_back({tri[1], m0, m2});
    tris.push_back({tri[2], m1, m0});
    tris.push_back({m0, m1, m2});
    for (int c = 0; c < 4; ++c) parent.push_back(t);
  }

  // Children of tagged boundary edges inherit the tag; fracture edges split in two.
  std::vector<std::pair<std::array<int, 2>, int>> frac_edges;
  std::vector<int> frac_parent;
  for (int f = 0; f < (int)mesh.fracture_faces.size(); ++f) {
    const FractureFace& ff = mesh.fracture_faces[f];
    const Edge& e = mesh.edges[ff.edge];
    int m = edge_mid[ff.edge];
    frac_edges.push_back({{e.a, m}, mesh.fractures[ff.fracture].id});
    frac_parent.push_back(f);
    frac_edges.push_back({{m, e.b}, mesh.fractures[ff.fracture].id});
    frac_parent.push_back(f);
  }

  // Boundary tags by node pair; resolved to edge indices after build.
  std::vector<std::pair<std::array<int, 2>, std::string>> tag_pairs;
  for (int e = 0; e < ne; ++e) {
    if (mesh.boundary_tag[e] < 0) continue;
    const Edge& ed = mesh.edges[e];
    const std::string& name = mesh.tag_names[mesh.boundary_tag[e]];
    tag_pairs.push_back({{ed.a, edge_mid[e]}, name});
    tag_pairs.push_back({{edge_mid[e], ed.b}, name});
  }

  MixedDimMesh fine = build_mesh(std::move(nodes), std::move(tris), frac_edges, {});
  // Resolve tags now that the edge table exists.
  std::map<std::array<int, 2>, int> eindex;
  for (int e = 0; e < (int)fine.edges.size(); ++e)
    eindex[{fine.edges[e].a, fine.edges[e].b}] = e;
  for (auto& [pair, name] : tag_pairs) {
    int e = eindex.at(sorted_pair(pair[0], pair[1]));
    int id = fine.tag_id(name);
    if (id < 0) {
      id = (int)fine.tag_names.size();
      fine.tag_names.push_back(name);
    }
    fine.boundary_tag[e] = id;
  }

  // Inherit fracture-face orientation from parents (stable + side).
  std::map<std::array<int, 2>, int> fine_face_by_edge_nodes;
  for (int f = 0; f < (int)fine.fracture_faces.size(); ++f) {
    const Edge& e = fine.edges[fine.fracture_faces[f].edge];
    fine_face_by_edge_nodes[{e.a, e.b}] = f;
  }
  fine.parent_face.assign(fine.fracture_faces.size(), -1);
  for (int k = 0; k < (int)frac_edges.size(); ++k) {
    int f = fine_face_by_edge_nodes.at(sorted_pair(frac_edges[k].first[0], frac_edges[k].first[1]));
    const FractureFace& pf = mesh.fracture_faces[frac_parent[k]];
    FractureFace& cf = fine.fracture_faces[f];
    fine.parent_face[f] = frac_parent[k];
    if (cf.tangent.dot(pf.tangent) < 0) {
      // Align the child walk with the parent orientation.
      std::swap(cf.node_start, cf.node_end);
      cf.tangent = -cf.tangent;
      cf.normal_plus = -cf.normal_plus;
      std::swap(cf.tri_plus, cf.tri_minus);
    }
  }
  // Walk directions of whole paths follow from the faces; recompute path node
  // order only if the deterministic restart flipped it (keep arc data coherent).
  for (auto& path : fine.fractures) {
    const FractureFace& first = fine.fracture_faces[path.faces.front()];
    if (path.nodes.front() != first.node_start) {
      std::reverse(path.faces.begin(), path.faces.end());
      std::reverse(path.nodes.begin(), path.nodes.end());
      for (auto& arc : path.tip_arcs) arc = path.length - arc;
      for (auto& arc : path.corner_arcs) arc = path.length - arc;
      std::swap(path.start_on_boundary, path.end_on_boundary);
      double arc = 0.0;
      for (int f : path.faces) {
        fine.fracture_faces[f].arc_mid = arc + 0.5 * fine.fracture_faces[f].length;
        arc += fine.fracture_faces[f].length;
      }
      std::sort(path.tip_arcs.begin(), path.tip_arcs.end());
      std::sort(path.corner_arcs.begin(), path.corner_arcs.end());
    }
  }
  fine.parent_tri = parent;
  return fine;
}

ApertureLaw ApertureLaw::from_mesh(const MixedDimMesh& mesh, double delta0, double a) {
  ApertureLaw law;
  law.delta0 = delta0;
  law.a = a;
  for (const auto& path : mesh.fractures) {
    law.tips.push_back(path.tip_arcs);
    double ell;
    if (!path.corner_arcs.empty()) {
      ell = path.length;
      for (double c : path.corner_arcs) ell = std::min(ell, std::min(c, path.length - c));
    } else if (path.start_on_boundary || path.end_on_boundary) {
      ell = path.length;
    } else {
      ell = 0.5 * path.length;
    }
    law.ell.push_back(ell);
  }
  return law;
}

std::vector<double> eval_d0(const ApertureLaw& law, const MixedDimMesh& mesh) {
  std::vector<double> d0(mesh.fracture_faces.size(), 0.0);
  for (int f = 0; f < (int)mesh.fracture_faces.size(); ++f) {
    const FractureFace& ff = mesh.fracture_faces[f];
    double ell = law.ell.at(ff.fracture);
    if (ell <= 0) throw MeshError("aperture law: nonpositive characteristic length");
    const auto& tips = law.tips.at(ff.fracture);
    double D = ell;  // no immersed tips: capped at the characteristic length
    if (!tips.empty()) {
      D = std::numeric_limits<double>::max();
      for (double tip : tips) D = std::min(D, std::abs(ff.arc_mid - tip));
    }
    d0[f] = law.delta0 * std::sqrt(std::atan(law.a * D) / std::atan(law.a * ell));
    if (!(d0[f] > 0)) throw MeshError("aperture law produced a nonpositive aperture");
  }
  return d0;
}

// ---------------------------------------------------------------------------
// JSON mesh format per the external interface:
// {"nodes":[[x,y],...], "triangles":[[a,b,c],...],
//  "fracture_edges":[{"nodes":[a,b],"fracture":i},...],
//  "boundary_tags":{"<edge_index>":"left",...}}
// Edge indices refer to the lexicographic enumeration of sorted node pairs.
// ---------------------------------------------------------------------------

MixedDimMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw MeshError("mesh file is not valid JSON: " + std::string(e.what()));
  }
  std::vector<Vec2> nodes;
  for (const auto& n : j.at("nodes")) nodes.emplace_back(n.at(0).get<double>(), n.at(1).get<double>());
  std::vector<std::array<int, 3>> tris;
  for (const auto& t : j.at("triangles"))
    tris.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
  std::vector<std::pair<std::array<int, 2>, int>> fedges;
  if (j.contains("fracture_edges"))
    for (const auto& f : j["fracture_edges"])
      fedges.push_back({{f.at("nodes").at(0).get<int>(), f.at("nodes").at(1).get<int>()},
                        f.at("fracture").get<int>()});
  std::vector<std::pair<int, std::string>> tags;
  if (j.contains("boundary_tags"))
    for (auto it = j["boundary_tags"].begin(); it != j["boundary_tags"].end(); ++it)
      tags.push_back({std::stoi(it.key()), it.value().get<std::string>()});
  return build_mesh(std::move(nodes), std::move(tris), fedges, tags);
}

void save_mesh(const MixedDimMesh& mesh, const std::string& path) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& p : mesh.nodes) j["nodes"].push_back({p.x(), p.y()});
  j["triangles"] = nlohmann::json::array();
  for (const auto& t : mesh.tris) j["triangles"].push_back({t[0], t[1], t[2]});
  j["fracture_edges"] = nlohmann::json::array();
  for (const auto& ff : mesh.fracture_faces) {
    const Edge& e = mesh.edges[ff.edge];
    j["fracture_edges"].push_back(
        {{"nodes", {e.a, e.b}}, {"fracture", mesh.fractures[ff.fracture].id}});
  }
  nlohmann::json tags = nlohmann::json::object();
  for (int e = 0; e < (int)mesh.edges.size(); ++e)
    if (mesh.boundary_tag[e] >= 0)
      tags[std::to_string(e)] = mesh.tag_names[mesh.boundary_tag[e]];
  j["boundary_tags"] = tags;
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file " + path);
  out << j.dump() << "\n";
}

}  // namespace fracsim
