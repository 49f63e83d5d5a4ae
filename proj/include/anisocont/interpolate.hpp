#pragma once

#include "anisocont/mesh.hpp"

#include <limits>
#include <span>

namespace anisocont {

/// Walk-based point location with exhaustive fallback.
template <int D>
class PointLocator {
public:
  struct Hit {
    int element = -1;
    Eigen::Matrix<double, D + 1, 1> bary;
    bool inside = false;
  };

  explicit PointLocator(const SimplicialMesh<D>& mesh)
    : mesh_(mesh), neighbors_(element_neighbors(mesh))
  {
  }

  /// Locates `p`, starting the walk at `seed` (or the last hit).
  Hit locate(const Vec<D>& p, int seed = -1) const
  {
    const int ne = mesh_.num_elements();
    int e = (seed >= 0 && seed < ne) ? seed : (last_ >= 0 && last_ < ne ? last_ : 0);
    const int max_steps = 64 + 4 * static_cast<int>(std::sqrt(static_cast<double>(ne))) * D;
    for (int step = 0; step < max_steps; ++step) {
      const auto b = barycentric<D>(mesh_.coords(e), p);
      int worst = 0;
      for (int k = 1; k <= D; ++k)
        if (b(k) < b(worst))
          worst = k;
      if (b(worst) >= -kBaryTol) {
        last_ = e;
        return {e, b, true};
      }
      const int next = neighbors_[e][worst];
      if (next < 0)
        break;
      e = next;
    }
    return exhaustive(p);
  }

private:
  static constexpr double kBaryTol = 1e-9;

  Hit exhaustive(const Vec<D>& p) const
  {
    Hit best;
    double best_min = -std::numeric_limits<double>::infinity();
    for (int e = 0; e < mesh_.num_elements(); ++e) {
      const auto b = barycentric<D>(mesh_.coords(e), p);
      const double m = b.minCoeff();
      if (m > best_min) {
        best_min = m;
        best = {e, b, m >= -kBaryTol};
        if (best.inside)
          break;
      }
    }
    last_ = best.element;
    return best;
  }

  const SimplicialMesh<D>& mesh_;
  std::vector<std::array<int, D + 1>> neighbors_;
  mutable int last_ = -1;
};

struct InterpolationStats {
  int outside = 0;  // points extrapolated from the nearest element
};

/// Evaluates the P1 field `u_old` at arbitrary points.
template <int D>
std::vector<double> interpolate_points(const SimplicialMesh<D>& old_mesh, std::span<const double> u_old,
                                       std::span<const Vec<D>> points, std::span<const int> seeds = {},
                                       InterpolationStats* stats = nullptr)
{
  if (u_old.size() != old_mesh.nodes.size())
    throw std::invalid_argument("interpolate: field length does not match node count");
  PointLocator<D> locator(old_mesh);
  const double dist_tol = 1e-9 * old_mesh.box.diameter();
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int seed = i < seeds.size() ? seeds[i] : -1;
    const auto hit = locator.locate(points[i], seed);
    const auto& el = old_mesh.elements[hit.element];
    if (!hit.inside && stats) {
      bool in_box = true;
      for (int a = 0; a < D; ++a)
        in_box = in_box && points[i][a] >= old_mesh.box.lo[a] - dist_tol && points[i][a] <= old_mesh.box.hi[a] + dist_tol;
      if (!in_box || hit.bary.minCoeff() < -1e-6)
        ++stats->outside;
    }
    double v = 0.0;
    bool at_vertex = false;
    for (int k = 0; k <= D && !at_vertex; ++k)
      if (old_mesh.nodes[el[k]] == points[i]) {
        v = u_old[el[k]];
        at_vertex = true;
      }
    if (!at_vertex)
      for (int k = 0; k <= D; ++k)
        v += hit.bary(k) * u_old[el[k]];
    out[i] = v;
  }
  return out;
}

/// P1 interpolation of a nodal field from one mesh of a box to another.
template <int D>
std::vector<double> interpolate(const SimplicialMesh<D>& old_mesh, std::span<const double> u_old,
                                const SimplicialMesh<D>& new_mesh, InterpolationStats* stats = nullptr)
{
  return interpolate_points<D>(old_mesh, u_old, std::span<const Vec<D>>(new_mesh.nodes), {}, stats);
}

} // namespace anisocont
