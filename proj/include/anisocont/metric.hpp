#pragma once

#include "anisocont/fem.hpp"
#include "anisocont/mesh.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>
#include <span>

namespace anisocont {

/// Nodal SPD metric tensors (entries in 1/length^2).
template <int D>
struct MetricField {
  std::vector<Mat<D>> tensors;
  double floor_eps = 0.0;

  const Mat<D>& operator[](int n) const { return tensors[n]; }
  Mat<D>& operator[](int n) { return tensors[n]; }
  std::size_t size() const { return tensors.size(); }
};

/// Mesh density control. Larger eta gives coarser meshes.
struct EtaPolicy {
  enum class Mode { Constant, LinearInNp };
  Mode mode = Mode::Constant;
  double value = 1e-3;  // constant value or prefactor

  static EtaPolicy constant(double v) { return {Mode::Constant, v}; }
  static EtaPolicy linear_in_np(double prefactor) { return {Mode::LinearInNp, prefactor}; }
};

inline double eval_eta(const EtaPolicy& policy, long np)
{
  if (np < 1)
    throw ConfigError("eval_eta: node count must be >= 1");
  const double eta = policy.mode == EtaPolicy::Mode::Constant ? policy.value : policy.value * static_cast<double>(np);
  if (!(eta > 0.0) || !std::isfinite(eta))
    throw ConfigError("eta must be positive, got " + std::to_string(eta));
  return eta;
}

/// Nodal Hessian by two rounds of lumped-mass L2 projection of elementwise
/// gradients, symmetrized.
template <int D>
std::vector<Mat<D>> recover_hessian(const SimplicialMesh<D>& mesh, std::span<const double> z)
{
  if (z.size() != mesh.nodes.size())
    throw std::invalid_argument("recover_hessian: field length does not match node count");
  const int nn = mesh.num_nodes();
  std::vector<double> weight(nn, 0.0);
  std::vector<std::array<Vec<D>, D + 1>> grads(mesh.elements.size());
  std::vector<double> vols(mesh.elements.size());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto x = mesh.coords(e);
    vols[e] = signed_volume<D>(x);
    if (!(vols[e] > 0.0))
      throw AssemblyError("recover_hessian: degenerate element " + std::to_string(e));
    grads[e] = barycentric_gradients<D>(x);
    for (int n : mesh.elements[e])
      weight[n] += vols[e];
  }

  std::vector<Vec<D>> g(nn, Vec<D>::Zero());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    Vec<D> ge = Vec<D>::Zero();
    for (int k = 0; k <= D; ++k)
      ge += z[mesh.elements[e][k]] * grads[e][k];
    for (int n : mesh.elements[e])
      g[n] += vols[e] * ge;
  }
  for (int n = 0; n < nn; ++n)
    g[n] /= weight[n];

  std::vector<Mat<D>> H(nn, Mat<D>::Zero());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    Mat<D> he = Mat<D>::Zero();  // row i = grad of g_i
    for (int k = 0; k <= D; ++k)
      he += g[mesh.elements[e][k]] * grads[e][k].transpose();
    for (int n : mesh.elements[e])
      H[n] += vols[e] * he;
  }
  for (int n = 0; n < nn; ++n) {
    H[n] /= weight[n];
    H[n] = 0.5 * (H[n] + H[n].transpose()).eval();
  }
  return H;
}

/// Optional bounds on the target edge length encoded by the metric.
struct SizeBounds {
  double h_min = 0.0;
  double h_max = std::numeric_limits<double>::infinity();
};

/// Psi = (1/eta) det(|H|)^(-1/(2p+d)) |H| per node, where |H| takes absolute
/// eigenvalues floored at 1e-10 max(1, max_n ||H_n||). The optional size
/// bounds clamp the eigenvalues of Psi to [1/h_max^2, 1/h_min^2].
template <int D>
MetricField<D> compute_metric(std::span<const Mat<D>> H, double eta, double p, SizeBounds bounds = {})
{
  if (!(eta > 0.0))
    throw ConfigError("compute_metric: eta must be positive");
  if (!(p >= 1.0))
    throw ConfigError("compute_metric: p must be >= 1");
  double hmax_norm = 0.0;
  for (const auto& h : H)
    hmax_norm = std::max(hmax_norm, h.cwiseAbs().maxCoeff());
  MetricField<D> out;
  out.floor_eps = 1e-10 * std::max(1.0, hmax_norm);
  out.tensors.resize(H.size());
  const double exponent = -1.0 / (2.0 * p + D);
  const double lam_lo = std::isfinite(bounds.h_max) ? 1.0 / (bounds.h_max * bounds.h_max) : 0.0;
  const double lam_hi = bounds.h_min > 0.0 ? 1.0 / (bounds.h_min * bounds.h_min) : std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < H.size(); ++n) {
    Eigen::SelfAdjointEigenSolver<Mat<D>> es;
    es.computeDirect(H[n]);
    Vec<D> lam = es.eigenvalues().cwiseAbs().cwiseMax(out.floor_eps);
    const double scale = std::pow(lam.prod(), exponent) / eta;
    lam = (scale * lam).cwiseMax(lam_lo).cwiseMin(lam_hi);
    const Mat<D>& Q = es.eigenvectors();
    Mat<D> psi = Q * lam.asDiagonal() * Q.transpose();
    out.tensors[n] = 0.5 * (psi + psi.transpose());
  }
  return out;
}

/// Length of the vector `v` under the average of two endpoint metrics.
template <int D>
double metric_length(const Mat<D>& psi_a, const Mat<D>& psi_b, const Vec<D>& v)
{
  const double q = 0.5 * v.dot((psi_a + psi_b) * v);
  return std::sqrt(std::max(0.0, q));
}

template <int D>
double edge_length_metric(const SimplicialMesh<D>& mesh, const MetricField<D>& psi, int a, int b)
{
  return metric_length<D>(psi[a], psi[b], mesh.nodes[b] - mesh.nodes[a]);
}

/// Maps the solution to the scalar field that drives the metric.
using FieldSelector = std::function<std::vector<double>(std::span<const double>)>;

inline std::vector<double> select_field(std::span<const double> u, const FieldSelector& selector = {})
{
  if (selector)
    return selector(u);
  return {u.begin(), u.end()};
}

namespace selectors {

inline FieldSelector identity()
{
  return [](std::span<const double> u) { return std::vector<double>(u.begin(), u.end()); };
}

inline FieldSelector exponential()
{
  return [](std::span<const double> u) {
    std::vector<double> z(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
      z[i] = std::exp(u[i]);
    return z;
  };
}

inline FieldSelector scaled(double s)
{
  return [s](std::span<const double> u) {
    std::vector<double> z(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
      z[i] = s * u[i];
    return z;
  };
}

} // namespace selectors

} // namespace anisocont
