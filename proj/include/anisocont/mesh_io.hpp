#pragma once

#include "anisocont/mesh.hpp"

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>

namespace anisocont {

/// Plain-text mesh format:
///
///   anisocont-mesh 1
///   dim <d>
///   box <lo_1..lo_d> <hi_1..hi_d>
///   nodes <n>
///   <x_1 .. x_d>                  (n lines)
///   elements <m>
///   <i_0 .. i_d>                  (m lines, 0-based, positively oriented)
///   facets <f>
///   <i_1 .. i_d> <segment_id>     (f lines)
///
/// Coordinates are written with 17 significant digits so files round-trip.
template <int D>
void write_mesh(std::ostream& os, const SimplicialMesh<D>& mesh)
{
  os << "anisocont-mesh 1\n";
  os << "dim " << D << "\n";
  os << std::setprecision(17);
  os << "box";
  for (int a = 0; a < D; ++a)
    os << ' ' << mesh.box.lo[a];
  for (int a = 0; a < D; ++a)
    os << ' ' << mesh.box.hi[a];
  os << "\nnodes " << mesh.nodes.size() << "\n";
  for (const auto& x : mesh.nodes) {
    for (int a = 0; a < D; ++a)
      os << (a ? " " : "") << x[a];
    os << "\n";
  }
  os << "elements " << mesh.elements.size() << "\n";
  for (const auto& el : mesh.elements) {
    for (int k = 0; k <= D; ++k)
      os << (k ? " " : "") << el[k];
    os << "\n";
  }
  os << "facets " << mesh.boundary_facets.size() << "\n";
  for (std::size_t b = 0; b < mesh.boundary_facets.size(); ++b) {
    for (int n : mesh.boundary_facets[b])
      os << n << ' ';
    os << mesh.facet_segments[b] << "\n";
  }
}

class MeshFormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class LineReader {
public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::istringstream next(const char* what)
  {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      const auto pos = line.find_first_not_of(" \t\r");
      if (pos == std::string::npos || line[pos] == '#')
        continue;
      return std::istringstream(line);
    }
    fail(std::string("unexpected end of file, expected ") + what);
  }

  [[noreturn]] void fail(const std::string& msg) const
  {
    throw MeshFormatError("line " + std::to_string(line_no_) + ": " + msg);
  }

  template <typename T>
  T keyword_value(const char* keyword)
  {
    auto ls = next(keyword);
    std::string kw;
    T value{};
    if (!(ls >> kw >> value) || kw != keyword)
      fail(std::string("expected '") + keyword + " <value>'");
    return value;
  }

private:
  std::istream& is_;
  int line_no_ = 0;
};

} // namespace detail

/// Reads the body of a mesh file after the header and dim lines.
template <int D>
SimplicialMesh<D> read_mesh_body(detail::LineReader& r)
{
  SimplicialMesh<D> mesh;
  {
    auto ls = r.next("box");
    std::string kw;
    ls >> kw;
    if (kw != "box")
      r.fail("expected 'box'");
    for (int a = 0; a < D; ++a)
      ls >> mesh.box.lo[a];
    for (int a = 0; a < D; ++a)
      ls >> mesh.box.hi[a];
    if (!ls)
      r.fail("malformed box line");
  }
  const long nn = r.template keyword_value<long>("nodes");
  if (nn < 0)
    r.fail("negative node count");
  mesh.nodes.resize(nn);
  for (long i = 0; i < nn; ++i) {
    auto ls = r.next("node coordinates");
    for (int a = 0; a < D; ++a)
      ls >> mesh.nodes[i][a];
    if (!ls)
      r.fail("malformed node line");
  }
  const long ne = r.template keyword_value<long>("elements");
  if (ne < 0)
    r.fail("negative element count");
  mesh.elements.resize(ne);
  for (long e = 0; e < ne; ++e) {
    auto ls = r.next("element");
    for (int k = 0; k <= D; ++k) {
      ls >> mesh.elements[e][k];
      if (ls && (mesh.elements[e][k] < 0 || mesh.elements[e][k] >= nn))
        r.fail("element node index out of range");
    }
    if (!ls)
      r.fail("malformed element line");
  }
  const long nf = r.template keyword_value<long>("facets");
  if (nf < 0)
    r.fail("negative facet count");
  mesh.boundary_facets.resize(nf);
  mesh.facet_segments.resize(nf);
  for (long b = 0; b < nf; ++b) {
    auto ls = r.next("facet");
    for (int k = 0; k < D; ++k)
      ls >> mesh.boundary_facets[b][k];
    ls >> mesh.facet_segments[b];
    if (!ls)
      r.fail("malformed facet line");
    for (int n : mesh.boundary_facets[b])
      if (n < 0 || n >= nn)
        r.fail("facet node index out of range");
  }
  mesh.boundary_node_flags.assign(nn, 0);
  for (long b = 0; b < nf; ++b)
    if (mesh.facet_segments[b] >= 1 && mesh.facet_segments[b] <= num_segments<D>())
      for (int n : mesh.boundary_facets[b])
        mesh.boundary_node_flags[n] |= segment_bit(mesh.facet_segments[b]);
  return mesh;
}

using AnyMesh = std::variant<Mesh2, Mesh3>;

inline AnyMesh read_mesh(std::istream& is)
{
  detail::LineReader r(is);
  auto header = r.next("header");
  std::string magic;
  int version = 0;
  if (!(header >> magic >> version) || magic != "anisocont-mesh" || version != 1)
    r.fail("not an anisocont-mesh version 1 file");
  const int dim = r.keyword_value<int>("dim");
  if (dim == 2)
    return read_mesh_body<2>(r);
  if (dim == 3)
    return read_mesh_body<3>(r);
  r.fail("dim must be 2 or 3");
}

inline AnyMesh read_mesh_file(const std::string& path)
{
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("cannot open mesh file '" + path + "'");
  return read_mesh(is);
}

template <int D>
void write_mesh_file(const std::string& path, const SimplicialMesh<D>& mesh)
{
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot write mesh file '" + path + "'");
  write_mesh(os, mesh);
}

/// Nodal field file: "anisocont-field <n>" followed by n values.
inline void write_field(std::ostream& os, std::span<const double> u)
{
  os << "anisocont-field " << u.size() << "\n" << std::setprecision(17);
  for (double v : u)
    os << v << "\n";
}

inline std::vector<double> read_field(std::istream& is)
{
  std::string magic;
  long n = -1;
  if (!(is >> magic >> n) || magic != "anisocont-field" || n < 0)
    throw MeshFormatError("field file: expected header 'anisocont-field <n>'");
  std::vector<double> u(n);
  for (long i = 0; i < n; ++i)
    if (!(is >> u[i]))
      throw MeshFormatError("field file: expected " + std::to_string(n) + " values, got " + std::to_string(i));
  return u;
}

/// VTK legacy ASCII unstructured grid with optional nodal scalar fields.
template <int D>
void write_vtk(std::ostream& os, const SimplicialMesh<D>& mesh,
               const std::vector<std::pair<std::string, std::span<const double>>>& fields = {},
               const std::string& title = "anisocont")
{
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << std::setprecision(17);
  os << "POINTS " << mesh.nodes.size() << " double\n";
  for (const auto& x : mesh.nodes)
    os << x[0] << ' ' << x[1] << ' ' << (D == 3 ? x[D - 1] : 0.0) << "\n";
  os << "CELLS " << mesh.elements.size() << ' ' << mesh.elements.size() * (D + 2) << "\n";
  for (const auto& el : mesh.elements) {
    os << D + 1;
    for (int n : el)
      os << ' ' << n;
    os << "\n";
  }
  os << "CELL_TYPES " << mesh.elements.size() << "\n";
  const int cell_type = D == 2 ? 5 : 10;  // VTK_TRIANGLE, VTK_TETRA
  for (std::size_t e = 0; e < mesh.elements.size(); ++e)
    os << cell_type << "\n";
  if (!fields.empty()) {
    os << "POINT_DATA " << mesh.nodes.size() << "\n";
    for (const auto& [name, values] : fields) {
      if (values.size() != mesh.nodes.size())
        throw std::invalid_argument("write_vtk: field '" + name + "' has wrong length");
      os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : values)
        os << v << "\n";
    }
  }
}

template <int D>
void write_vtk_file(const std::string& path, const SimplicialMesh<D>& mesh,
                    const std::vector<std::pair<std::string, std::span<const double>>>& fields = {})
{
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot write VTK file '" + path + "'");
  write_vtk(os, mesh, fields);
}

} // namespace anisocont
