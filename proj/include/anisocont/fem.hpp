#pragma once

#include "anisocont/mesh.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>

namespace anisocont {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class AssemblyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class ProfileId { Zero, CosHalf, GaussSpot };

inline std::string to_string(ProfileId p)
{
  switch (p) {
  case ProfileId::Zero: return "zero";
  case ProfileId::CosHalf: return "coshalf";
  case ProfileId::GaussSpot: return "gaussspot";
  }
  return "?";
}

inline ProfileId profile_from_string(const std::string& s)
{
  if (s == "zero")
    return ProfileId::Zero;
  if (s == "coshalf")
    return ProfileId::CosHalf;
  if (s == "gaussspot")
    return ProfileId::GaussSpot;
  throw ConfigError("unknown boundary profile '" + s + "'");
}

struct BoundaryCondition {
  enum class Kind { Dirichlet, NeumannZero };
  Kind kind = Kind::NeumannZero;
  ProfileId profile = ProfileId::Zero;

  static BoundaryCondition dirichlet(ProfileId p) { return {Kind::Dirichlet, p}; }
  static BoundaryCondition neumann() { return {Kind::NeumannZero, ProfileId::Zero}; }
  bool is_dirichlet() const { return kind == Kind::Dirichlet; }
};

/// Steady scalar problem -c Lap u - lambda u - u^3 + gamma u^5 = 0 with
/// per-segment boundary conditions.
struct ProblemDef {
  double c = 1.0;
  double lambda = 0.0;
  double gamma = 1.0;
  std::map<std::string, double> aux{{"d", 0.0}, {"xi", 0.0}};
  std::string active_param = "lambda";
  std::map<int, BoundaryCondition> bc;

  double aux_value(const std::string& name) const
  {
    const auto it = aux.find(name);
    return it == aux.end() ? 0.0 : it->second;
  }

  bool has_param(const std::string& name) const
  {
    return name == "lambda" || name == "gamma" || name == "c" || aux.count(name) > 0;
  }

  double param(const std::string& name) const
  {
    if (name == "lambda")
      return lambda;
    if (name == "gamma")
      return gamma;
    if (name == "c")
      return c;
    const auto it = aux.find(name);
    if (it == aux.end())
      throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  void set_param(const std::string& name, double v)
  {
    if (name == "lambda")
      lambda = v;
    else if (name == "gamma")
      gamma = v;
    else if (name == "c")
      c = v;
    else if (aux.count(name))
      aux[name] = v;
    else
      throw ConfigError("unknown parameter '" + name + "'");
  }

  double active() const { return param(active_param); }
  void set_active(double v) { set_param(active_param, v); }

  /// Throws ConfigError unless every segment has a condition and the
  /// active parameter exists.
  template <int D>
  void check() const
  {
    if (!has_param(active_param))
      throw ConfigError("active parameter '" + active_param + "' does not exist");
    if (!(c > 0.0))
      throw ConfigError("diffusion coefficient c must be positive");
    for (int id = 1; id <= num_segments<D>(); ++id)
      if (!bc.count(id))
        throw ConfigError("no boundary condition for segment " + std::to_string(id));
    for (const auto& [id, cond] : bc) {
      if (id < 1 || id > num_segments<D>())
        throw ConfigError("segment id " + std::to_string(id) + " invalid for dimension " + std::to_string(D));
      if (D == 3 && cond.profile == ProfileId::CosHalf)
        throw ConfigError("coshalf profile is 2D only");
    }
  }
};

/// Value of a Dirichlet profile at `x`:
///   CosHalf    d cos(y/2)
///   GaussSpot  exp(-(x-xi)^2)        (2D)
///              exp(-(x-xi)^2 - z^2)  (3D)
template <int D>
double eval_boundary_profile(ProfileId profile, const Vec<D>& x, const ProblemDef& prob)
{
  switch (profile) {
  case ProfileId::Zero: return 0.0;
  case ProfileId::CosHalf: return prob.aux_value("d") * std::cos(x[1] / 2.0);
  case ProfileId::GaussSpot: {
    const double dx = x[0] - prob.aux_value("xi");
    double r2 = dx * dx;
    if constexpr (D == 3)
      r2 += x[2] * x[2];
    return std::exp(-r2);
  }
  }
  throw ConfigError("unknown boundary profile");
}

/// Derivative of a profile value with respect to a named parameter.
template <int D>
double profile_param_derivative(ProfileId profile, const Vec<D>& x, const ProblemDef& prob, const std::string& name)
{
  if (profile == ProfileId::CosHalf && name == "d")
    return std::cos(x[1] / 2.0);
  if (profile == ProfileId::GaussSpot && name == "xi")
    return 2.0 * (x[0] - prob.aux_value("xi")) * eval_boundary_profile<D>(profile, x, prob);
  return 0.0;
}

/// Per node: index of the Dirichlet profile that applies, or -1. A node on
/// several segments is Dirichlet if any of them is; the lowest such segment
/// ID supplies the profile.
template <int D>
std::vector<int> dirichlet_profiles(const SimplicialMesh<D>& mesh, const ProblemDef& prob)
{
  std::vector<int> out(mesh.nodes.size(), -1);
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const SegmentSet s = mesh.boundary_node_flags[n];
    if (!s)
      continue;
    for (int id = 1; id <= num_segments<D>(); ++id) {
      if (!has_segment(s, id))
        continue;
      const auto it = prob.bc.find(id);
      if (it != prob.bc.end() && it->second.is_dirichlet()) {
        out[n] = static_cast<int>(it->second.profile);
        break;
      }
    }
  }
  return out;
}

namespace detail {

template <int D>
void check_element(const SimplicialMesh<D>& mesh, int e)
{
  if (!(mesh.volume(e) > 0.0))
    throw AssemblyError("element " + std::to_string(e) + " is inverted or degenerate");
}

} // namespace detail

/// P1 stiffness matrix of c grad u . grad v (no boundary treatment).
template <int D>
SparseMatrix assemble_stiffness(const SimplicialMesh<D>& mesh, double c)
{
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.elements.size() * (D + 1) * (D + 1));
  for (int e = 0; e < mesh.num_elements(); ++e) {
    detail::check_element(mesh, e);
    const auto x = mesh.coords(e);
    const double vol = signed_volume<D>(x);
    const auto g = barycentric_gradients<D>(x);
    const auto& el = mesh.elements[e];
    for (int i = 0; i <= D; ++i)
      for (int j = 0; j <= D; ++j)
        trip.emplace_back(el[i], el[j], c * vol * g[i].dot(g[j]));
  }
  SparseMatrix K(mesh.num_nodes(), mesh.num_nodes());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

/// Consistent P1 mass matrix.
template <int D>
SparseMatrix assemble_mass(const SimplicialMesh<D>& mesh)
{
  constexpr double denom = (D + 1) * (D + 2);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.elements.size() * (D + 1) * (D + 1));
  for (int e = 0; e < mesh.num_elements(); ++e) {
    detail::check_element(mesh, e);
    const double vol = mesh.volume(e);
    const auto& el = mesh.elements[e];
    for (int i = 0; i <= D; ++i)
      for (int j = 0; j <= D; ++j)
        trip.emplace_back(el[i], el[j], vol * (i == j ? 2.0 : 1.0) / denom);
  }
  SparseMatrix M(mesh.num_nodes(), mesh.num_nodes());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

/// f(u) = lambda u + u^3 - gamma u^5 and its derivative.
inline double nonlinearity(const ProblemDef& p, double u)
{
  const double u2 = u * u;
  return p.lambda * u + u2 * u - p.gamma * u2 * u2 * u;
}

inline double nonlinearity_derivative(const ProblemDef& p, double u)
{
  const double u2 = u * u;
  return p.lambda + 3.0 * u2 - 5.0 * p.gamma * u2 * u2;
}

/// Matrices and boundary data of one mesh, reused across residual and
/// Jacobian evaluations as long as the mesh does not change.
template <int D>
class Discretization {
public:
  Discretization(const SimplicialMesh<D>& mesh, const ProblemDef& prob)
    : mesh_(&mesh),
      K1_(assemble_stiffness(mesh, 1.0)),
      M_(assemble_mass(mesh)),
      profiles_(dirichlet_profiles(mesh, prob)),
      volume_(M_.sum())
  {
    for (int n = 0; n < mesh.num_nodes(); ++n)
      if (profiles_[n] < 0)
        interior_.push_back(n);
  }

  const SimplicialMesh<D>& mesh() const { return *mesh_; }
  const SparseMatrix& stiffness_unit() const { return K1_; }
  const SparseMatrix& mass() const { return M_; }
  double domain_volume() const { return volume_; }
  int size() const { return mesh_->num_nodes(); }
  bool is_dirichlet(int n) const { return profiles_[n] >= 0; }
  const std::vector<int>& free_nodes() const { return interior_; }

  double boundary_value(int n, const ProblemDef& prob) const
  {
    return eval_boundary_profile<D>(static_cast<ProfileId>(profiles_[n]), mesh_->nodes[n], prob);
  }

  Vector residual(const Vector& u, const ProblemDef& prob) const
  {
    check_size(u);
    Vector f(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
      f[i] = nonlinearity(prob, u[i]);
    Vector G = prob.c * (K1_ * u) - M_ * f;
    for (int n = 0; n < size(); ++n)
      if (is_dirichlet(n))
        G[n] = u[n] - boundary_value(n, prob);
    return G;
  }

  SparseMatrix jacobian(const Vector& u, const ProblemDef& prob) const
  {
    check_size(u);
    Vector df(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
      df[i] = nonlinearity_derivative(prob, u[i]);
    SparseMatrix J = prob.c * K1_ - M_ * df.asDiagonal();
    J.prune([this](Eigen::Index row, Eigen::Index, double) { return !is_dirichlet(static_cast<int>(row)); });
    std::vector<Eigen::Triplet<double>> diag;
    for (int n = 0; n < size(); ++n)
      if (is_dirichlet(n))
        diag.emplace_back(n, n, 1.0);
    SparseMatrix I(size(), size());
    I.setFromTriplets(diag.begin(), diag.end());
    J += I;
    J.makeCompressed();
    return J;
  }

  /// dG/dp for the named parameter (interior rows from the PDE, Dirichlet
  /// rows from the profile).
  Vector param_derivative(const Vector& u, const ProblemDef& prob, const std::string& name) const
  {
    check_size(u);
    Vector dG = Vector::Zero(u.size());
    if (name == "lambda")
      dG = -(M_ * u);
    else if (name == "c")
      dG = K1_ * u;
    else if (name == "gamma") {
      Vector u5 = u.array().pow(5).matrix();
      dG = M_ * u5;
    }
    for (int n = 0; n < size(); ++n)
      if (is_dirichlet(n))
        dG[n] = -profile_param_derivative<D>(static_cast<ProfileId>(profiles_[n]), mesh_->nodes[n], prob, name);
    return dG;
  }

  /// Domain-averaged L2 norm sqrt(u'Mu / |Omega|).
  double l2_norm(const Vector& u) const { return std::sqrt(std::max(0.0, u.dot(M_ * u)) / volume_); }

  /// Rows/columns of the free (non-Dirichlet) nodes.
  SparseMatrix restrict_free(const SparseMatrix& A) const
  {
    std::vector<int> pos(size(), -1);
    for (std::size_t k = 0; k < interior_.size(); ++k)
      pos[interior_[k]] = static_cast<int>(k);
    std::vector<Eigen::Triplet<double>> trip;
    for (int col = 0; col < A.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(A, col); it; ++it)
        if (pos[it.row()] >= 0 && pos[it.col()] >= 0)
          trip.emplace_back(pos[it.row()], pos[it.col()], it.value());
    const auto nf = static_cast<Eigen::Index>(interior_.size());
    SparseMatrix R(nf, nf);
    R.setFromTriplets(trip.begin(), trip.end());
    return R;
  }

private:
  void check_size(const Vector& u) const
  {
    if (u.size() != size())
      throw std::invalid_argument("nodal vector length " + std::to_string(u.size()) + " does not match node count " +
                                  std::to_string(size()));
  }

  const SimplicialMesh<D>* mesh_;
  SparseMatrix K1_;
  SparseMatrix M_;
  std::vector<int> profiles_;
  std::vector<int> interior_;
  double volume_;
};

template <int D>
Vector residual(const SimplicialMesh<D>& mesh, const Vector& u, const ProblemDef& prob)
{
  return Discretization<D>(mesh, prob).residual(u, prob);
}

template <int D>
SparseMatrix jacobian(const SimplicialMesh<D>& mesh, const Vector& u, const ProblemDef& prob)
{
  return Discretization<D>(mesh, prob).jacobian(u, prob);
}

template <int D>
double l2_norm(const SimplicialMesh<D>& mesh, const Vector& u)
{
  const SparseMatrix M = assemble_mass(mesh);
  if (u.size() != M.rows())
    throw std::invalid_argument("l2_norm: length mismatch");
  return std::sqrt(std::max(0.0, u.dot(M * u)) / M.sum());
}

inline Vector to_eigen(std::span<const double> v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

} // namespace anisocont
