#pragma once

// Marching cubes over an SDF with a case table generated at start-up.
//
// For each of the 256 corner sign configurations the table is built by
// tracing the boundary of the inside region (f < 0) over the six cube faces.
// Faces with two diagonal inside corners always keep those corners apart, a
// rule that depends only on the face's own corners, so neighbouring cubes
// agree on every shared face and the mesh is closed. Each traced loop is
// triangulated as a fan; triangles are wound so their normals point toward
// positive distance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgpbr/math.hpp"
#include "sgpbr/sdf.hpp"

namespace sgpbr {

struct TriangleMesh {
  std::vector<Vec3d> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Vec3d> normals;  // empty or one per vertex

  bool empty() const { return triangles.empty(); }
};

struct Aabb {
  Vec3d lower{-1.0, -1.0, -1.0};
  Vec3d upper{1.0, 1.0, 1.0};
};

namespace detail {

inline Vec3d corner_offset(int v) {
  return {static_cast<double>(v & 1), static_cast<double>((v >> 1) & 1),
          static_cast<double>((v >> 2) & 1)};
}

struct CubeTopology {
  std::array<std::array<int, 2>, 12> edges{};  // corner pairs, lower corner first
  std::array<std::array<int, 4>, 6> faces{};   // corners counter-clockwise seen from outside
  int edge_of(int a, int b) const {
    for (int e = 0; e < 12; ++e) {
      if ((edges[e][0] == a && edges[e][1] == b) || (edges[e][0] == b && edges[e][1] == a)) {
        return e;
      }
    }
    return -1;
  }
};

inline const CubeTopology& cube_topology() {
  static const CubeTopology topo = [] {
    CubeTopology t;
    int e = 0;
    for (int axis = 0; axis < 3; ++axis) {
      for (int v = 0; v < 8; ++v) {
        if (v & (1 << axis)) continue;
        t.edges[static_cast<std::size_t>(e++)] = {v, v | (1 << axis)};
      }
    }
    t.faces = {{{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}}};
    return t;
  }();
  return topo;
}

/// Per configuration: closed loops of cube edge indices.
using CaseTable = std::array<std::vector<std::vector<int>>, 256>;

inline CaseTable build_case_table() {
  const CubeTopology& topo = cube_topology();
  CaseTable table;
  for (int config = 0; config < 256; ++config) {
    auto inside = [&](int v) { return (config >> v) & 1; };
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& face : topo.faces) {
      // Crossing k sits on the face edge from corner k to corner k + 1.
      std::array<int, 4> kind{};  // +1 outside->inside, -1 inside->outside
      for (int k = 0; k < 4; ++k) {
        const int a = face[static_cast<std::size_t>(k)];
        const int b = face[static_cast<std::size_t>((k + 1) % 4)];
        kind[static_cast<std::size_t>(k)] =
            inside(a) == inside(b) ? 0 : (inside(b) ? 1 : -1);
      }
      for (int k = 0; k < 4; ++k) {
        if (kind[static_cast<std::size_t>(k)] != -1) continue;
        // Walk backwards to the nearest entering crossing.
        int m = (k + 3) % 4;
        while (kind[static_cast<std::size_t>(m)] != 1) m = (m + 3) % 4;
        const int from = topo.edge_of(face[static_cast<std::size_t>(k)],
                                      face[static_cast<std::size_t>((k + 1) % 4)]);
        const int to = topo.edge_of(face[static_cast<std::size_t>(m)],
                                    face[static_cast<std::size_t>((m + 1) % 4)]);
        next[static_cast<std::size_t>(from)] = to;
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[static_cast<std::size_t>(start)] < 0 || used[static_cast<std::size_t>(start)]) {
        continue;
      }
      std::vector<int> loop;
      int e = start;
      while (!used[static_cast<std::size_t>(e)]) {
        used[static_cast<std::size_t>(e)] = true;
        loop.push_back(e);
        e = next[static_cast<std::size_t>(e)];
      }
      table[static_cast<std::size_t>(config)].push_back(std::move(loop));
    }
  }
  return table;
}

inline const CaseTable& case_table() {
  static const CaseTable table = build_case_table();
  return table;
}

}  // namespace detail

/// Extracts the zero set of `field` inside `bounds` on a res^3 cell lattice.
inline TriangleMesh marching_cubes(const SdfField& field, const Aabb& bounds,
                                   int resolution, bool with_normals = false) {
  if (resolution < 2) throw InputError("marching_cubes: resolution must be >= 2");
  const int n = resolution + 1;  // lattice points per axis
  const Vec3d step = (bounds.upper - bounds.lower) / static_cast<double>(resolution);
  if (!(step.x > 0.0 && step.y > 0.0 && step.z > 0.0)) {
    throw InputError("marching_cubes: empty bounds");
  }
  auto point = [&](int i, int j, int k) {
    return bounds.lower + Vec3d{i * step.x, j * step.y, k * step.z};
  };
  auto lattice = [&](int i, int j, int k) {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(n) * (static_cast<std::size_t>(j) +
                                          static_cast<std::size_t>(n) * k);
  };
  std::vector<double> values(static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) values[lattice(i, j, k)] = sdf_eval(field, point(i, j, k));
    }
  }

  const detail::CubeTopology& topo = detail::cube_topology();
  const detail::CaseTable& table = detail::case_table();
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  std::map<std::array<double, 3>, std::uint32_t> by_position;

  auto vertex_on_edge = [&](int i, int j, int k, int edge) -> std::uint32_t {
    const auto& ends = topo.edges[static_cast<std::size_t>(edge)];
    const Vec3d oa = detail::corner_offset(ends[0]);
    const Vec3d ob = detail::corner_offset(ends[1]);
    const int ai = i + static_cast<int>(oa.x), aj = j + static_cast<int>(oa.y),
              ak = k + static_cast<int>(oa.z);
    const int axis = ends[1] ^ ends[0];  // 1, 2 or 4
    const std::uint64_t key =
        static_cast<std::uint64_t>(lattice(ai, aj, ak)) * 4 + static_cast<std::uint64_t>(axis >> 1);
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double fa = values[lattice(ai, aj, ak)];
    const double fb = values[lattice(i + static_cast<int>(ob.x), j + static_cast<int>(ob.y),
                                     k + static_cast<int>(ob.z))];
    const double t = fa / (fa - fb);
    const Vec3d pa = point(ai, aj, ak);
    const Vec3d pb = point(i + static_cast<int>(ob.x), j + static_cast<int>(ob.y),
                           k + static_cast<int>(ob.z));
    const Vec3d p = pa + (pb - pa) * t;
    const std::array<double, 3> pos{p.x, p.y, p.z};
    std::uint32_t id;
    if (auto it = by_position.find(pos); it != by_position.end()) {
      id = it->second;
    } else {
      id = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.push_back(p);
      by_position.emplace(pos, id);
    }
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int k = 0; k < resolution; ++k) {
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) {
        int config = 0;
        for (int v = 0; v < 8; ++v) {
          const Vec3d o = detail::corner_offset(v);
          const double f = values[lattice(i + static_cast<int>(o.x), j + static_cast<int>(o.y),
                                          k + static_cast<int>(o.z))];
          if (f < 0.0) config |= 1 << v;
        }
        for (const auto& loop : table[static_cast<std::size_t>(config)]) {
          std::vector<std::uint32_t> ids;
          ids.reserve(loop.size());
          for (int e : loop) ids.push_back(vertex_on_edge(i, j, k, e));
          for (std::size_t t = 1; t + 1 < ids.size(); ++t) {
            // Loops run counter-clockwise around the inside region seen from
            // outside the cube; reversing the fan turns normals outward.
            const std::array<std::uint32_t, 3> tri{ids[0], ids[t + 1], ids[t]};
            if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
            const Vec3d& a = mesh.vertices[tri[0]];
            const Vec3d& b = mesh.vertices[tri[1]];
            const Vec3d& c = mesh.vertices[tri[2]];
            if (length(cross(b - a, c - a)) == 0.0) continue;
            mesh.triangles.push_back(tri);
          }
        }
      }
    }
  }
  if (with_normals) {
    mesh.normals.reserve(mesh.vertices.size());
    for (const Vec3d& v : mesh.vertices) {
      try {
        mesh.normals.push_back(sdf_normal(field, v));
      } catch (const DegenerateError&) {
        mesh.normals.push_back(Vec3d{});
      }
    }
  }
  return mesh;
}

inline double surface_area(const TriangleMesh& m) {
  double a = 0.0;
  for (const auto& t : m.triangles) {
    a += 0.5 * length(cross(m.vertices[t[1]] - m.vertices[t[0]],
                            m.vertices[t[2]] - m.vertices[t[0]]));
  }
  return a;
}

/// V - E + F counting each undirected edge once.
inline long euler_characteristic(const TriangleMesh& m) {
  std::vector<std::uint64_t> edges;
  edges.reserve(m.triangles.size() * 3);
  for (const auto& t : m.triangles) {
    for (int e = 0; e < 3; ++e) {
      std::uint64_t a = t[static_cast<std::size_t>(e)], b = t[static_cast<std::size_t>((e + 1) % 3)];
      if (a > b) std::swap(a, b);
      edges.push_back((a << 32) | b);
    }
  }
  std::sort(edges.begin(), edges.end());
  const auto unique_edges = std::unique(edges.begin(), edges.end()) - edges.begin();
  return static_cast<long>(m.vertices.size()) - static_cast<long>(unique_edges) +
         static_cast<long>(m.triangles.size());
}

/// Wavefront OBJ: "v x y z" lines with six fractional digits, then
/// "f a b c" lines with 1-based indices.
inline std::string export_obj(const TriangleMesh& m) {
  std::ostringstream out;
  char buf[128];
  for (const Vec3d& v : m.vertices) {
    std::snprintf(buf, sizeof buf, "v %.6f %.6f %.6f\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& t : m.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  return out.str();
}

/// Reads the "v" and "f" records of an OBJ file (vertex indices only).
inline TriangleMesh parse_obj(const std::string& text) {
  TriangleMesh m;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3d v;
      if (!(ls >> v.x >> v.y >> v.z)) {
        throw InputError("obj line " + std::to_string(line_no) + ": bad vertex");
      }
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<std::uint32_t, 3> t{};
      for (auto& idx : t) {
        std::string tok;
        if (!(ls >> tok)) throw InputError("obj line " + std::to_string(line_no) + ": bad face");
        const long v = std::stol(tok.substr(0, tok.find('/')));
        if (v < 1 || static_cast<std::size_t>(v) > m.vertices.size()) {
          throw InputError("obj line " + std::to_string(line_no) + ": index out of range");
        }
        idx = static_cast<std::uint32_t>(v - 1);
      }
      m.triangles.push_back(t);
    }
  }
  return m;
}

}  // namespace sgpbr
