#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>

namespace anisocont {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

template <int D>
using Mat = Eigen::Matrix<double, D, D>;

/// Node indices of a D-simplex, positively oriented.
template <int D>
using Simplex = std::array<int, D + 1>;

/// Node indices of a boundary facet.
template <int D>
using Facet = std::array<int, D>;

template <int D>
constexpr double factorial()
{
  double f = 1.0;
  for (int i = 2; i <= D; ++i)
    f *= i;
  return f;
}

/// Columns are the edge vectors x_k - x_0, k = 1..D.
template <int D>
Mat<D> edge_matrix(const std::array<Vec<D>, D + 1>& x)
{
  Mat<D> E;
  for (int k = 0; k < D; ++k)
    E.col(k) = x[k + 1] - x[0];
  return E;
}

template <int D>
double signed_volume(const std::array<Vec<D>, D + 1>& x)
{
  return edge_matrix<D>(x).determinant() / factorial<D>();
}

/// Gradients of the barycentric coordinates (constant per simplex).
template <int D>
std::array<Vec<D>, D + 1> barycentric_gradients(const std::array<Vec<D>, D + 1>& x)
{
  const Mat<D> inv = edge_matrix<D>(x).inverse();
  std::array<Vec<D>, D + 1> g;
  g[0].setZero();
  for (int k = 0; k < D; ++k) {
    g[k + 1] = inv.row(k).transpose();
    g[0] -= g[k + 1];
  }
  return g;
}

template <int D>
Eigen::Matrix<double, D + 1, 1> barycentric(const std::array<Vec<D>, D + 1>& x, const Vec<D>& p)
{
  const Vec<D> t = edge_matrix<D>(x).partialPivLu().solve(p - x[0]);
  Eigen::Matrix<double, D + 1, 1> b;
  b(0) = 1.0 - t.sum();
  b.template tail<D>() = t;
  return b;
}

/// Normalization so that the equilateral simplex has quality one.
template <int D>
constexpr double quality_constant()
{
  if constexpr (D == 2)
    return 4.0 * std::numbers::sqrt3;
  else
    return 72.0 * std::numbers::sqrt3;
}

/// Scale-invariant shape quality c_d vol / (sum |e|^2)^(d/2) under the
/// metric `m` (identity gives the plain Euclidean quality).
template <int D>
double simplex_quality(const std::array<Vec<D>, D + 1>& x, const Mat<D>& m)
{
  const double vol = signed_volume<D>(x);
  if (vol <= 0.0)
    return 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i <= D; ++i)
    for (int j = i + 1; j <= D; ++j) {
      const Vec<D> e = x[j] - x[i];
      sum_sq += e.dot(m * e);
    }
  if (sum_sq <= 0.0)
    return 0.0;
  const double det = m.determinant();
  const double vol_m = vol * std::sqrt(det > 0.0 ? det : 0.0);
  return quality_constant<D>() * vol_m / std::pow(sum_sq, 0.5 * D);
}

template <int D>
double simplex_quality(const std::array<Vec<D>, D + 1>& x)
{
  return simplex_quality<D>(x, Mat<D>::Identity());
}

} // namespace anisocont
