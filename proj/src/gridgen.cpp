#include "fracsim/gridgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace fracsim {

namespace {

std::array<int, 2> sorted_pair(int a, int b) {
  return a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
}

}  // namespace

MixedDimMesh make_grid_mesh(const GridSpec& spec) {
  const int nx = spec.nx, ny = spec.ny;
  if (nx < 1 || ny < 1) throw MeshError("grid must have at least one cell per direction");
  const double dx = (spec.hi.x() - spec.lo.x()) / nx;
  const double dy = (spec.hi.y() - spec.lo.y()) / ny;
  auto node_id = [&](int i, int j) { return j * (nx + 1) + i; };

  std::vector<Vec2> nodes;
  nodes.reserve((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      nodes.emplace_back(spec.lo.x() + i * dx, spec.lo.y() + j * dy);

  // Fracture legs -> lattice edges. Diagonal legs must follow the SW-NE cell
  // diagonal used by the standard square split.
  std::vector<std::pair<std::array<int, 2>, int>> fedges;
  std::set<int> diag_squares;
  for (const auto& frac : spec.fractures) {
    for (size_t k = 0; k + 1 < frac.points.size(); ++k) {
      int i0 = frac.points[k][0], j0 = frac.points[k][1];
      int i1 = frac.points[k + 1][0], j1 = frac.points[k + 1][1];
      int di = (i1 > i0) - (i1 < i0), dj = (j1 > j0) - (j1 < j0);
      int steps = std::max(std::abs(i1 - i0), std::abs(j1 - j0));
      bool diagonal = (di != 0 && dj != 0);
      if (diagonal && di != dj)
        throw MeshError("diagonal fracture legs must run along the SW-NE cell diagonal");
      if ((di != 0 && dj != 0 && std::abs(i1 - i0) != std::abs(j1 - j0)) || steps == 0)
        throw MeshError("fracture leg does not follow a lattice line");
      for (int s = 0; s < steps; ++s) {
        int ia = i0 + s * di, ja = j0 + s * dj;
        int ib = ia + di, jb = ja + dj;
        fedges.push_back({{node_id(ia, ja), node_id(ib, jb)}, frac.id});
        if (diagonal) diag_squares.insert(std::min(ja, jb) * nx + std::min(ia, ib));
      }
    }
  }

  std::set<int> four_split(spec.four_split_squares.begin(), spec.four_split_squares.end());
  for (int sq : four_split)
    if (diag_squares.count(sq))
      throw MeshError("cannot four-split a square whose diagonal is a fracture edge");

  std::vector<std::array<int, 3>> tris;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int a = node_id(i, j), b = node_id(i + 1, j), c = node_id(i + 1, j + 1), d = node_id(i, j + 1);
      if (four_split.count(j * nx + i)) {
        int center = (int)nodes.size();
        nodes.emplace_back(spec.lo.x() + (i + 0.5) * dx, spec.lo.y() + (j + 0.5) * dy);
        tris.push_back({a, b, center});
        tris.push_back({b, c, center});
        tris.push_back({c, d, center});
        tris.push_back({d, a, center});
      } else {
        tris.push_back({a, b, c});
        tris.push_back({a, c, d});
      }
    }
  }

  // Conforming count adjustment: split triangles along one of their boundary
  // edges (the inserted midpoint only touches that single triangle).
  if (spec.boundary_bisections > 0) {
    std::map<std::array<int, 2>, int> occurrence;
    for (const auto& t : tris)
      for (int e = 0; e < 3; ++e) occurrence[sorted_pair(t[e], t[(e + 1) % 3])]++;
    int remaining = spec.boundary_bisections;
    const size_t original = tris.size();
    for (size_t t = 0; t < original && remaining > 0; ++t) {
      for (int e = 0; e < 3; ++e) {
        int p = tris[t][e], q = tris[t][(e + 1) % 3], r = tris[t][(e + 2) % 3];
        if (occurrence.at(sorted_pair(p, q)) != 1) continue;
        int m = (int)nodes.size();
        nodes.push_back(0.5 * (nodes[p] + nodes[q]));
        tris[t] = {p, m, r};
        tris.push_back({m, q, r});
        --remaining;
        break;
      }
    }
    if (remaining > 0) throw MeshError("not enough boundary triangles to bisect");
  }

  // Boundary tags via the loader's lexicographic edge enumeration.
  std::vector<std::pair<int, std::string>> tags;
  if (spec.tag_boundary) {
    std::map<std::array<int, 2>, int> count;
    for (const auto& t : tris)
      for (int e = 0; e < 3; ++e) count[sorted_pair(t[e], t[(e + 1) % 3])]++;
    const double tol = 1e-9 * std::max(spec.hi.x() - spec.lo.x(), spec.hi.y() - spec.lo.y());
    int index = 0;
    for (const auto& [pair, occ] : count) {
      if (occ == 1) {
        const Vec2& pa = nodes[pair[0]];
        const Vec2& pb = nodes[pair[1]];
        std::string tag;
        if (std::abs(pa.x() - spec.lo.x()) < tol && std::abs(pb.x() - spec.lo.x()) < tol)
          tag = "left";
        else if (std::abs(pa.x() - spec.hi.x()) < tol && std::abs(pb.x() - spec.hi.x()) < tol)
          tag = "right";
        else if (std::abs(pa.y() - spec.lo.y()) < tol && std::abs(pb.y() - spec.lo.y()) < tol)
          tag = "bottom";
        else if (std::abs(pa.y() - spec.hi.y()) < tol && std::abs(pb.y() - spec.hi.y()) < tol)
          tag = "top";
        if (!tag.empty()) tags.push_back({index, tag});
      }
      ++index;
    }
  }
  return build_mesh(std::move(nodes), std::move(tris), fedges, tags);
}

MixedDimMesh make_six_fracture_mesh() {
  GridSpec spec;
  spec.nx = 52;
  spec.ny = 26;
  spec.lo = Vec2(0, 0);
  spec.hi = Vec2(2, 1);
  spec.fractures = {
      {1, {{6, 17}, {12, 17}, {12, 23}}},  // two sub-fractures forming a corner
      {2, {{22, 21}, {34, 21}}},
      {3, {{8, 6}, {16, 14}}},
      {4, {{30, 12}, {44, 12}}},
      {5, {{38, 5}, {52, 5}}},             // tip on the right boundary
      {6, {{24, 4}, {24, 12}}},
  };

  // Squares whose border or diagonal carries a fracture edge.
  std::set<std::array<int, 2>> blocked;
  auto block = [&](int i, int j) {
    if (i >= 0 && i < spec.nx && j >= 0 && j < spec.ny) blocked.insert({i, j});
  };
  for (const auto& frac : spec.fractures) {
    for (size_t k = 0; k + 1 < frac.points.size(); ++k) {
      int i0 = frac.points[k][0], j0 = frac.points[k][1];
      int i1 = frac.points[k + 1][0], j1 = frac.points[k + 1][1];
      int di = (i1 > i0) - (i1 < i0), dj = (j1 > j0) - (j1 < j0);
      int steps = std::max(std::abs(i1 - i0), std::abs(j1 - j0));
      for (int s = 0; s <= steps; ++s) {
        int i = i0 + s * di, j = j0 + s * dj;
        for (int bi = -1; bi <= 0; ++bi)
          for (int bj = -1; bj <= 0; ++bj) block(i + bi, j + bj);
      }
    }
  }

  // 75 four-splits + 1 boundary bisection: 2 * (52*26 - 75) + 4*75 + 1 = 2855.
  int needed = 75;
  for (int j = 1; j < spec.ny - 1 && needed > 0; ++j) {
    for (int i = 1; i < spec.nx - 1 && needed > 0; ++i) {
      if ((i + 52 * j) % 7 != 3) continue;
      if (blocked.count({i, j})) continue;
      spec.four_split_squares.push_back(j * spec.nx + i);
      --needed;
    }
  }
  if (needed > 0) throw MeshError("could not place the requested four-splits");
  spec.boundary_bisections = 1;
  return make_grid_mesh(spec);
}

}  // namespace fracsim
