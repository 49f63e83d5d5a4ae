#pragma once

#include "anisocont/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace anisocont {

/// Set of boundary segment IDs (bit k-1 set for segment k).
using SegmentSet = std::uint8_t;

inline constexpr SegmentSet segment_bit(int id) { return static_cast<SegmentSet>(1u << (id - 1)); }

inline bool has_segment(SegmentSet s, int id) { return (s & segment_bit(id)) != 0; }

inline int segment_count(SegmentSet s) { return std::popcount(static_cast<unsigned>(s)); }

/// Axis-aligned box (-lx,lx) x ... ; segments are its faces.
template <int D>
struct Box {
  Vec<D> lo = Vec<D>::Constant(-1.0);
  Vec<D> hi = Vec<D>::Constant(1.0);

  double diameter() const { return (hi - lo).norm(); }
  double volume() const { return (hi - lo).prod(); }
};

/// Segment ID of a box face.
///   2D: 1 bottom (y=lo), 2 right (x=hi), 3 top (y=hi), 4 left (x=lo).
///   3D: 1 bottom (z=lo), 2 left (x=lo), 3 front (y=lo), 4 right (x=hi),
///       5 back (y=hi), 6 top (z=hi).
template <int D>
constexpr int face_segment(int axis, bool upper)
{
  if constexpr (D == 2) {
    if (axis == 1)
      return upper ? 3 : 1;
    return upper ? 2 : 4;
  }
  else {
    if (axis == 2)
      return upper ? 6 : 1;
    if (axis == 0)
      return upper ? 4 : 2;
    return upper ? 5 : 3;
  }
}

template <int D>
constexpr int segment_axis(int id)
{
  for (int a = 0; a < D; ++a)
    for (bool up : {false, true})
      if (face_segment<D>(a, up) == id)
        return a;
  return -1;
}

template <int D>
constexpr bool segment_upper(int id)
{
  for (int a = 0; a < D; ++a)
    if (face_segment<D>(a, true) == id)
      return true;
  return false;
}

template <int D>
constexpr int num_segments() { return 2 * D; }

template <int D>
struct SimplicialMesh {
  static constexpr int dim = D;

  Box<D> box;
  std::vector<Vec<D>> nodes;
  std::vector<Simplex<D>> elements;
  std::vector<Facet<D>> boundary_facets;
  std::vector<int> facet_segments;
  std::vector<SegmentSet> boundary_node_flags;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }

  std::array<Vec<D>, D + 1> coords(int e) const
  {
    std::array<Vec<D>, D + 1> x;
    for (int k = 0; k <= D; ++k)
      x[k] = nodes[elements[e][k]];
    return x;
  }

  double volume(int e) const { return signed_volume<D>(coords(e)); }

  bool on_boundary(int n) const { return boundary_node_flags[n] != 0; }

  /// Geometric tolerance used for boundary classification.
  double tolerance() const { return 1e-10 * box.diameter(); }
};

using Mesh2 = SimplicialMesh<2>;
using Mesh3 = SimplicialMesh<3>;

namespace detail {

template <int D>
struct FacetEntry {
  Facet<D> key;  // sorted node indices
  int element;
  int local;     // index of the opposite vertex
  int sign;      // induced orientation relative to the sorted key

  bool operator<(const FacetEntry& o) const
  {
    return std::tie(key, element, local) < std::tie(o.key, o.element, o.local);
  }
};

template <std::size_t N>
int sort_with_parity(std::array<int, N>& a)
{
  int parity = 1;
  for (std::size_t i = 1; i < N; ++i)
    for (std::size_t j = i; j > 0 && a[j - 1] > a[j]; --j) {
      std::swap(a[j - 1], a[j]);
      parity = -parity;
    }
  return parity;
}

template <int D>
std::vector<FacetEntry<D>> sorted_facets(const SimplicialMesh<D>& mesh)
{
  std::vector<FacetEntry<D>> f;
  f.reserve(mesh.elements.size() * (D + 1));
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (int k = 0; k <= D; ++k) {
      Facet<D> key;
      int m = 0;
      for (int j = 0; j <= D; ++j)
        if (j != k)
          key[m++] = el[j];
      const int parity = sort_with_parity(key);
      f.push_back({key, e, k, (k % 2 == 0 ? 1 : -1) * parity});
    }
  }
  std::sort(f.begin(), f.end());
  return f;
}

} // namespace detail

/// Element-to-element adjacency: neighbor(e, k) is the element across the
/// facet opposite local vertex k, or -1 on the boundary.
template <int D>
std::vector<std::array<int, D + 1>> element_neighbors(const SimplicialMesh<D>& mesh)
{
  std::vector<std::array<int, D + 1>> nb(mesh.elements.size());
  for (auto& a : nb)
    a.fill(-1);
  const auto f = detail::sorted_facets(mesh);
  for (std::size_t i = 0; i + 1 < f.size(); ++i) {
    if (f[i].key == f[i + 1].key) {
      nb[f[i].element][f[i].local] = f[i + 1].element;
      nb[f[i + 1].element][f[i + 1].local] = f[i].element;
    }
  }
  return nb;
}

/// Elements incident to each node.
template <int D>
std::vector<std::vector<int>> node_elements(const SimplicialMesh<D>& mesh)
{
  std::vector<std::vector<int>> star(mesh.nodes.size());
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int n : mesh.elements[e])
      star[n].push_back(e);
  return star;
}

/// Unique edges as sorted node pairs.
template <int D>
std::vector<std::pair<int, int>> mesh_edges(const SimplicialMesh<D>& mesh)
{
  std::vector<std::pair<int, int>> edges;
  edges.reserve(mesh.elements.size() * (D * (D + 1) / 2));
  for (const auto& el : mesh.elements)
    for (int i = 0; i <= D; ++i)
      for (int j = i + 1; j <= D; ++j)
        edges.emplace_back(std::min(el[i], el[j]), std::max(el[i], el[j]));
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

/// Segment IDs of the box faces a point lies on (within `tol`).
template <int D>
SegmentSet point_segments(const Box<D>& box, const Vec<D>& x, double tol)
{
  SegmentSet s = 0;
  for (int a = 0; a < D; ++a) {
    if (std::abs(x[a] - box.lo[a]) <= tol)
      s |= segment_bit(face_segment<D>(a, false));
    if (std::abs(x[a] - box.hi[a]) <= tol)
      s |= segment_bit(face_segment<D>(a, true));
  }
  return s;
}

/// Recomputes boundary facets from the element topology and assigns each
/// the segment ID of the box face containing all of its nodes (0 if none).
/// Node flags become the union of the segment IDs of incident facets.
template <int D>
void classify_boundary(SimplicialMesh<D>& mesh)
{
  const auto f = detail::sorted_facets(mesh);
  const double tol = mesh.tolerance();
  mesh.boundary_facets.clear();
  mesh.facet_segments.clear();
  mesh.boundary_node_flags.assign(mesh.nodes.size(), 0);
  for (std::size_t i = 0; i < f.size();) {
    std::size_t j = i + 1;
    while (j < f.size() && f[j].key == f[i].key)
      ++j;
    if (j - i == 1) {
      // keep the element-induced (outward) orientation
      const auto& el = mesh.elements[f[i].element];
      Facet<D> facet;
      int m = 0;
      for (int k = 0; k <= D; ++k)
        if (k != f[i].local)
          facet[m++] = el[k];
      SegmentSet common = static_cast<SegmentSet>((1u << num_segments<D>()) - 1);
      for (int n : facet)
        common &= point_segments<D>(mesh.box, mesh.nodes[n], tol);
      int seg = 0;
      for (int id = 1; id <= num_segments<D>(); ++id)
        if (has_segment(common, id)) {
          seg = id;
          break;
        }
      mesh.boundary_facets.push_back(facet);
      mesh.facet_segments.push_back(seg);
      if (seg > 0)
        for (int n : facet)
          mesh.boundary_node_flags[n] |= segment_bit(seg);
    }
    i = j;
  }
}

/// Structured triangulation of (-lx,lx) x (-ly,ly) with nx*ny nodes.
/// Quads are split along alternating diagonals, so the mesh is mirror
/// symmetric in x when nx is odd.
inline Mesh2 build_rect_mesh(double lx, double ly, int nx, int ny)
{
  if (!(lx > 0.0) || !(ly > 0.0))
    throw std::invalid_argument("build_rect_mesh: extents must be positive");
  if (nx < 2 || ny < 2)
    throw std::invalid_argument("build_rect_mesh: node counts must be >= 2");
  Mesh2 mesh;
  mesh.box.lo = Vec<2>(-lx, -ly);
  mesh.box.hi = Vec<2>(lx, ly);
  auto coord = [](double l, int i, int n) {
    if (i == 0)
      return -l;
    if (i == n - 1)
      return l;
    return -l + 2.0 * l * i / (n - 1);
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      mesh.nodes.emplace_back(coord(lx, i, nx), coord(ly, j, ny));
  auto id = [nx](int i, int j) { return i + nx * j; };
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const int n00 = id(i, j), n10 = id(i + 1, j), n01 = id(i, j + 1), n11 = id(i + 1, j + 1);
      if ((i + j) % 2 == 0) {
        mesh.elements.push_back({n00, n10, n11});
        mesh.elements.push_back({n00, n11, n01});
      }
      else {
        mesh.elements.push_back({n00, n10, n01});
        mesh.elements.push_back({n10, n11, n01});
      }
    }
  classify_boundary(mesh);
  return mesh;
}

/// Structured tetrahedral mesh of (-lx,lx) x (-ly,ly) x (-lz,lz); every
/// cube is split into the six Kuhn tetrahedra around its main diagonal.
inline Mesh3 build_box_mesh(double lx, double ly, double lz, int nx, int ny, int nz)
{
  if (!(lx > 0.0) || !(ly > 0.0) || !(lz > 0.0))
    throw std::invalid_argument("build_box_mesh: extents must be positive");
  if (nx < 2 || ny < 2 || nz < 2)
    throw std::invalid_argument("build_box_mesh: node counts must be >= 2");
  Mesh3 mesh;
  mesh.box.lo = Vec<3>(-lx, -ly, -lz);
  mesh.box.hi = Vec<3>(lx, ly, lz);
  auto coord = [](double l, int i, int n) {
    if (i == 0)
      return -l;
    if (i == n - 1)
      return l;
    return -l + 2.0 * l * i / (n - 1);
  };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        mesh.nodes.emplace_back(coord(lx, i, nx), coord(ly, j, ny), coord(lz, k, nz));
  auto id = [nx, ny](int i, int j, int k) { return i + nx * (j + ny * k); };
  const std::array<std::array<int, 3>, 6> perms{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (int k = 0; k + 1 < nz; ++k)
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i + 1 < nx; ++i)
        for (const auto& p : perms) {
          std::array<int, 3> c{i, j, k};
          Simplex<3> t;
          t[0] = id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[p[s]];
            t[s + 1] = id(c[0], c[1], c[2]);
          }
          if (signed_volume<3>({mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], mesh.nodes[t[3]]}) < 0.0)
            std::swap(t[2], t[3]);
          mesh.elements.push_back(t);
        }
  classify_boundary(mesh);
  return mesh;
}

struct ValidationReport {
  int inverted = 0;
  int nonconforming = 0;
  int orphan = 0;
  int boundary = 0;   // boundary facets/nodes off the box or unclassified
  int bad_index = 0;

  bool ok() const { return inverted == 0 && nonconforming == 0 && orphan == 0 && boundary == 0 && bad_index == 0; }
  int total() const { return inverted + nonconforming + orphan + boundary + bad_index; }
};

/// Checks orientation, conformity and boundary consistency. Never mutates.
template <int D>
ValidationReport validate(const SimplicialMesh<D>& mesh)
{
  ValidationReport r;
  const int nn = mesh.num_nodes();
  for (const auto& el : mesh.elements)
    for (int n : el)
      if (n < 0 || n >= nn)
        ++r.bad_index;
  if (r.bad_index > 0)
    return r;

  const double vol_tol = 1e-14 * std::pow(mesh.box.diameter(), D);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    bool degenerate = false;
    for (int i = 0; i <= D; ++i)
      for (int j = i + 1; j <= D; ++j)
        degenerate = degenerate || el[i] == el[j];
    if (degenerate || mesh.volume(e) <= vol_tol)
      ++r.inverted;
  }

  std::vector<char> used(nn, 0);
  for (const auto& el : mesh.elements)
    for (int n : el)
      used[n] = 1;
  r.orphan = static_cast<int>(std::count(used.begin(), used.end(), 0));

  const double tol = 1e-9 * mesh.box.diameter();
  const auto f = detail::sorted_facets(mesh);
  std::vector<SegmentSet> flags(nn, 0);
  int open_facets = 0;
  for (std::size_t i = 0; i < f.size();) {
    std::size_t j = i + 1;
    while (j < f.size() && f[j].key == f[i].key)
      ++j;
    const std::size_t count = j - i;
    if (count > 2)
      ++r.nonconforming;
    else if (count == 2) {
      if (f[i].sign == f[i + 1].sign)
        ++r.nonconforming;
    }
    else {
      ++open_facets;
      SegmentSet common = static_cast<SegmentSet>((1u << num_segments<D>()) - 1);
      for (int n : f[i].key)
        common &= point_segments<D>(mesh.box, mesh.nodes[n], tol);
      if (common == 0)
        ++r.nonconforming;  // hole or crack inside the domain
      else
        for (int id = 1; id <= num_segments<D>(); ++id)
          if (has_segment(common, id)) {
            for (int n : f[i].key)
              flags[n] |= segment_bit(id);
            break;
          }
    }
    i = j;
  }

  if (static_cast<int>(mesh.boundary_facets.size()) != open_facets ||
      mesh.facet_segments.size() != mesh.boundary_facets.size())
    ++r.boundary;
  for (std::size_t b = 0; b < mesh.boundary_facets.size() && b < mesh.facet_segments.size(); ++b) {
    const int seg = mesh.facet_segments[b];
    if (seg < 1 || seg > num_segments<D>()) {
      ++r.boundary;
      continue;
    }
    const int axis = segment_axis<D>(seg);
    const double plane = segment_upper<D>(seg) ? mesh.box.hi[axis] : mesh.box.lo[axis];
    for (int n : mesh.boundary_facets[b])
      if (n < 0 || n >= nn || std::abs(mesh.nodes[n][axis] - plane) > tol) {
        ++r.boundary;
        break;
      }
  }
  if (mesh.boundary_node_flags.size() != static_cast<std::size_t>(nn))
    ++r.boundary;
  else
    for (int n = 0; n < nn; ++n) {
      if ((flags[n] != 0) != (mesh.boundary_node_flags[n] != 0))
        ++r.boundary;
      for (int a = 0; a < D; ++a)
        if (mesh.nodes[n][a] < mesh.box.lo[a] - tol || mesh.nodes[n][a] > mesh.box.hi[a] + tol) {
          ++r.boundary;
          break;
        }
    }
  return r;
}

/// Euclidean shape quality of one element in [0,1].
template <int D>
double element_quality_euclidean(const SimplicialMesh<D>& mesh, int elem)
{
  return simplex_quality<D>(mesh.coords(elem));
}

/// Drops unreferenced nodes (carrying along per-node data through `remap`)
/// and reclassifies the boundary. Returns old-to-new node index map.
template <int D>
std::vector<int> compact_nodes(SimplicialMesh<D>& mesh)
{
  std::vector<int> map(mesh.nodes.size(), -1);
  for (const auto& el : mesh.elements)
    for (int n : el)
      map[n] = 0;
  int next = 0;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map[i] == 0) {
      map[i] = next;
      mesh.nodes[next] = mesh.nodes[i];
      ++next;
    }
  mesh.nodes.resize(next);
  for (auto& el : mesh.elements)
    for (int& n : el)
      n = map[n];
  classify_boundary(mesh);
  return map;
}

} // namespace anisocont
