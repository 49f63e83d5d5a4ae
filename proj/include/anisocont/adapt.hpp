#pragma once

#include "anisocont/adapt_options.hpp"
#include "anisocont/interpolate.hpp"
#include "anisocont/mesh_io.hpp"
#include "anisocont/metric.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace anisocont {

/// Mesh together with the nodal data carried through the passes.
template <int D>
struct AdaptState {
  SimplicialMesh<D> mesh;
  std::vector<double> u;
  MetricField<D> psi;
};

class AdaptError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// q_M * q_E^qual_p with q_M the quality under the element-averaged metric.
template <int D>
double combined_quality(const std::array<Vec<D>, D + 1>& x, const Mat<D>& avg_metric, double qual_p)
{
  const double qm = simplex_quality<D>(x, avg_metric);
  if (qual_p == 0.0 || qm <= 0.0)
    return qm;
  return qm * std::pow(simplex_quality<D>(x), qual_p);
}

template <int D>
Mat<D> average_metric(const MetricField<D>& psi, const Simplex<D>& el)
{
  Mat<D> m = Mat<D>::Zero();
  for (int n : el)
    m += psi[n];
  return m / (D + 1);
}

template <int D>
double combined_quality(const SimplicialMesh<D>& mesh, const MetricField<D>& psi, int elem, double qual_p)
{
  return combined_quality<D>(mesh.coords(elem), average_metric(psi, mesh.elements[elem]), qual_p);
}

template <int D>
double max_metric_edge_length(const SimplicialMesh<D>& mesh, const MetricField<D>& psi)
{
  double lmax = 0.0;
  for (const auto& [a, b] : mesh_edges(mesh))
    lmax = std::max(lmax, edge_length_metric(mesh, psi, a, b));
  return lmax;
}

namespace detail {

/// Node-to-element incidence that tolerates stale entries: an entry is valid
/// while the element is alive and still contains the node.
template <int D>
class DynamicStars {
public:
  explicit DynamicStars(const SimplicialMesh<D>& mesh) : mesh_(mesh), star_(node_elements(mesh)), dead_(mesh.elements.size(), 0) {}

  std::vector<int> star(int n) const
  {
    std::vector<int> out;
    for (int e : star_[n])
      if (!dead_[e] && contains(e, n) && std::find(out.begin(), out.end(), e) == out.end())
        out.push_back(e);
    return out;
  }

  std::vector<int> shared(int a, int b) const
  {
    std::vector<int> out;
    for (int e : star(a))
      if (contains(e, b))
        out.push_back(e);
    return out;
  }

  bool contains(int e, int n) const
  {
    const auto& el = mesh_.elements[e];
    return std::find(el.begin(), el.end(), n) != el.end();
  }

  void add(int n, int e)
  {
    if (n >= static_cast<int>(star_.size()))
      star_.resize(n + 1);
    star_[n].push_back(e);
  }

  void add_element(int e)
  {
    if (e >= static_cast<int>(dead_.size()))
      dead_.resize(e + 1, 0);
    for (int n : mesh_.elements[e])
      add(n, e);
  }

  void kill(int e) { dead_[e] = 1; }
  bool dead(int e) const { return dead_[e] != 0; }
  const std::vector<char>& dead_flags() const { return dead_; }

private:
  const SimplicialMesh<D>& mesh_;
  std::vector<std::vector<int>> star_;
  std::vector<char> dead_;
};

/// Removes dead elements and unreferenced nodes, remapping nodal data.
template <int D>
void compact(AdaptState<D>& s, const std::vector<char>& dead)
{
  std::size_t w = 0;
  for (std::size_t e = 0; e < s.mesh.elements.size(); ++e)
    if (e >= dead.size() || !dead[e])
      s.mesh.elements[w++] = s.mesh.elements[e];
  s.mesh.elements.resize(w);
  const auto old_u = s.u;
  const auto old_psi = s.psi.tensors;
  const auto map = compact_nodes(s.mesh);
  s.u.assign(s.mesh.nodes.size(), 0.0);
  s.psi.tensors.assign(s.mesh.nodes.size(), Mat<D>::Identity());
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map[i] >= 0) {
      s.u[map[i]] = old_u[i];
      s.psi.tensors[map[i]] = old_psi[i];
    }
}

template <int D>
std::array<Vec<D>, D + 1> coords_of(const SimplicialMesh<D>& mesh, const Simplex<D>& el)
{
  std::array<Vec<D>, D + 1> x;
  for (int k = 0; k <= D; ++k)
    x[k] = mesh.nodes[el[k]];
  return x;
}

template <int D>
double quality_of(const AdaptState<D>& s, const Simplex<D>& el, double qual_p)
{
  return combined_quality<D>(coords_of(s.mesh, el), average_metric(s.psi, el), qual_p);
}

} // namespace detail

/// Collapses metric-short edges in ascending length order.
template <int D>
PassCounts coarsen_pass(AdaptState<D>& s, const AdaptOptions& opts)
{
  PassCounts counts;
  auto& mesh = s.mesh;
  const double qual_p = opts.quality_weight<D>();
  const double vol_tol = 1e-13 * std::pow(mesh.box.diameter(), D);

  std::vector<std::pair<double, std::pair<int, int>>> queue;
  for (const auto& [a, b] : mesh_edges(mesh)) {
    const double L = edge_length_metric(mesh, s.psi, a, b);
    if (L < opts.l_low)
      queue.push_back({L, {a, b}});
  }
  if (queue.empty())
    return counts;
  std::sort(queue.begin(), queue.end());

  detail::DynamicStars<D> stars(mesh);
  std::vector<char> dead_node(mesh.nodes.size(), 0), locked(mesh.nodes.size(), 0);

  // Worst new quality when `r` is merged into `k`, or -1 if not allowed.
  auto evaluate = [&](int r, int k, const std::vector<int>& star_r) -> double {
    if (locked[r])
      return -1.0;
    const SegmentSet sr = mesh.boundary_node_flags[r], sk = mesh.boundary_node_flags[k];
    if ((sr & ~sk) != 0)
      return -1.0;
    double old_min = 1.0, new_min = 1.0;
    for (int e : star_r) {
      old_min = std::min(old_min, detail::quality_of(s, mesh.elements[e], qual_p));
      if (stars.contains(e, k))
        continue;
      Simplex<D> el = mesh.elements[e];
      for (int& n : el)
        if (n == r)
          n = k;
      const auto x = detail::coords_of(mesh, el);
      if (signed_volume<D>(x) <= vol_tol)
        return -1.0;
      new_min = std::min(new_min, combined_quality<D>(x, average_metric(s.psi, el), qual_p));
      for (int n : el)
        if (n != k && metric_length<D>(s.psi[k], s.psi[n], mesh.nodes[n] - mesh.nodes[k]) > opts.l_up)
          return -1.0;
    }
    if (new_min <= 0.0 || new_min < opts.collapse_quality_floor * old_min)
      return -1.0;
    return new_min;
  };

  for (const auto& [len, edge] : queue) {
    const auto [a, b] = edge;
    if (dead_node[a] || dead_node[b])
      continue;
    const auto star_a = stars.star(a);
    const auto star_b = stars.star(b);
    bool adjacent = false;
    for (int e : star_a)
      adjacent = adjacent || stars.contains(e, b);
    if (!adjacent)
      continue;
    const double qa = evaluate(a, b, star_a);  // remove a
    const double qb = evaluate(b, a, star_b);  // remove b
    if (qa < 0.0 && qb < 0.0) {
      ++counts.collapse_rejections;
      continue;
    }
    const bool remove_a = qa >= qb;
    const int r = remove_a ? a : b, k = remove_a ? b : a;
    const auto& star_r = remove_a ? star_a : star_b;
    for (int e : star_r) {
      for (int n : mesh.elements[e])
        locked[n] = 1;
      if (stars.contains(e, k)) {
        stars.kill(e);
        continue;
      }
      for (int& n : mesh.elements[e])
        if (n == r)
          n = k;
      stars.add(k, e);
    }
    dead_node[r] = 1;
    ++counts.collapses;
  }
  detail::compact(s, stars.dead_flags());
  return counts;
}

/// Bisects the longest metric edge of every element whose longest edge
/// exceeds l_up; all elements sharing a split edge are split with it.
template <int D>
PassCounts refine_pass(AdaptState<D>& s, const AdaptOptions& opts)
{
  PassCounts counts;
  auto& mesh = s.mesh;
  std::vector<std::pair<double, std::pair<int, int>>> marked;
  for (const auto& el : mesh.elements) {
    double best = -1.0;
    std::pair<int, int> edge{-1, -1};
    for (int i = 0; i <= D; ++i)
      for (int j = i + 1; j <= D; ++j) {
        const double L = edge_length_metric(mesh, s.psi, el[i], el[j]);
        if (L > best) {
          best = L;
          edge = {std::min(el[i], el[j]), std::max(el[i], el[j])};
        }
      }
    if (best > opts.l_up)
      marked.push_back({best, edge});
  }
  if (marked.empty())
    return counts;
  std::sort(marked.begin(), marked.end(), [](const auto& x, const auto& y) {
    return x.first > y.first || (x.first == y.first && x.second < y.second);
  });
  marked.erase(std::unique(marked.begin(), marked.end(), [](const auto& x, const auto& y) { return x.second == y.second; }),
               marked.end());

  detail::DynamicStars<D> stars(mesh);
  for (const auto& [len, edge] : marked) {
    const auto [a, b] = edge;
    const auto shared = stars.shared(a, b);
    if (shared.empty())
      continue;
    const int m = mesh.num_nodes();
    mesh.nodes.push_back(0.5 * (mesh.nodes[a] + mesh.nodes[b]));
    s.u.push_back(0.5 * (s.u[a] + s.u[b]));
    s.psi.tensors.push_back(0.5 * (s.psi[a] + s.psi[b]));
    for (int e : shared) {
      Simplex<D> child = mesh.elements[e];
      for (int& n : mesh.elements[e])
        if (n == b)
          n = m;
      for (int& n : child)
        if (n == a)
          n = m;
      mesh.elements.push_back(child);
      stars.add(m, e);
      stars.add_element(mesh.num_elements() - 1);
    }
    ++counts.splits;
  }
  mesh.boundary_node_flags.resize(mesh.nodes.size(), 0);
  detail::compact(s, stars.dead_flags());
  return counts;
}

/// One sweep of damped metric-weighted Laplacian smoothing. Nodes on two or
/// more segments stay fixed; nodes on one segment slide within its face.
template <int D>
PassCounts move_pass(AdaptState<D>& s, const AdaptOptions& opts)
{
  PassCounts counts;
  auto& mesh = s.mesh;
  const double qual_p = opts.quality_weight<D>();
  const double vol_tol = 1e-13 * std::pow(mesh.box.diameter(), D);
  const auto star = node_elements(mesh);
  const SimplicialMesh<D> before = mesh;
  std::vector<int> moved;

  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const SegmentSet segs = mesh.boundary_node_flags[n];
    if (segment_count(segs) >= 2 || star[n].empty())
      continue;
    int fixed_axis = -1;
    if (segs)
      for (int id = 1; id <= num_segments<D>(); ++id)
        if (has_segment(segs, id))
          fixed_axis = segment_axis<D>(id);

    Vec<D> sum = Vec<D>::Zero();
    double wsum = 0.0;
    std::vector<int> seen;
    for (int e : star[n])
      for (int j : mesh.elements[e]) {
        if (j == n || std::find(seen.begin(), seen.end(), j) != seen.end())
          continue;
        seen.push_back(j);
        const Vec<D> v = mesh.nodes[j] - mesh.nodes[n];
        const double len = v.norm();
        if (len <= 0.0)
          continue;
        const double w = metric_length<D>(s.psi[n], s.psi[j], v) / len;
        sum += w * mesh.nodes[j];
        wsum += w;
      }
    if (wsum <= 0.0)
      continue;
    Vec<D> step = opts.move_damping * (sum / wsum - mesh.nodes[n]);
    if (fixed_axis >= 0)
      step[fixed_axis] = 0.0;
    if (step.norm() <= 1e-14 * mesh.box.diameter())
      continue;

    double old_min = 1.0;
    for (int e : star[n])
      old_min = std::min(old_min, detail::quality_of(s, mesh.elements[e], qual_p));
    const Vec<D> origin = mesh.nodes[n];
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      mesh.nodes[n] = origin + step;
      double new_min = 1.0;
      bool valid = true;
      for (int e : star[n]) {
        const auto x = mesh.coords(e);
        if (signed_volume<D>(x) <= vol_tol) {
          valid = false;
          break;
        }
        new_min = std::min(new_min, combined_quality<D>(x, average_metric(s.psi, mesh.elements[e]), qual_p));
      }
      accepted = valid && new_min >= old_min;
      step *= 0.5;
    }
    if (!accepted)
      mesh.nodes[n] = origin;
    else {
      moved.push_back(n);
      ++counts.moves;
    }
  }

  if (!moved.empty()) {
    std::vector<Vec<D>> pts;
    std::vector<int> seeds;
    for (int n : moved) {
      pts.push_back(mesh.nodes[n]);
      seeds.push_back(star[n].front());
    }
    const auto vals = interpolate_points<D>(before, s.u, pts, seeds);
    for (std::size_t i = 0; i < moved.size(); ++i)
      s.u[moved[i]] = vals[i];
  }
  // moved boundary nodes stay on their face, but facet geometry changed
  classify_boundary(mesh);
  return counts;
}

namespace detail {

inline int flip_edges_2d(AdaptState<2>& s, double qual_p)
{
  auto& mesh = s.mesh;
  const auto nb = element_neighbors(mesh);
  std::vector<char> touched(mesh.elements.size(), 0);
  int flips = 0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (int k = 0; k < 3; ++k) {
      const int f = nb[e][k];
      if (f < e || touched[e] || touched[f])
        continue;
      const auto& te = mesh.elements[e];
      const int c = te[k], p = te[(k + 1) % 3], q = te[(k + 2) % 3];
      int d = -1;
      for (int n : mesh.elements[f])
        if (n != p && n != q)
          d = n;
      const double old_min = std::min(quality_of(s, te, qual_p), quality_of(s, mesh.elements[f], qual_p));
      const Simplex<2> t1{c, p, d}, t2{c, d, q};
      const double q1 = quality_of(s, t1, qual_p), q2 = quality_of(s, t2, qual_p);
      if (q1 <= 0.0 || q2 <= 0.0)
        continue;
      if (std::min(q1, q2) > old_min * (1.0 + 1e-9) + 1e-14) {
        mesh.elements[e] = t1;
        mesh.elements[f] = t2;
        touched[e] = touched[f] = 1;
        ++flips;
      }
    }
  }
  return flips;
}

/// 2-3 face swaps and 3-2 edge swaps that raise the minimum quality.
inline int flip_faces_3d(AdaptState<3>& s, double qual_p)
{
  auto& mesh = s.mesh;
  int flips = 0;
  const int ne0 = mesh.num_elements();
  std::vector<char> touched(ne0, 0), dead(ne0, 0);
  {
    const auto nb = element_neighbors(mesh);
    for (int e = 0; e < ne0; ++e)
      for (int k = 0; k < 4; ++k) {
        const int f = nb[e][k];
        if (f < e || touched[e] || touched[f])
          continue;
        const Simplex<3> t1 = mesh.elements[e];
        const int d = t1[k];
        int apex = -1;
        for (int n : mesh.elements[f])
          if (std::find(t1.begin(), t1.end(), n) == t1.end())
            apex = n;
        const double old_min = std::min(quality_of(s, t1, qual_p), quality_of(s, mesh.elements[f], qual_p));
        std::array<Simplex<3>, 3> nt;
        int m = 0;
        bool ok = true;
        double new_min = 1.0;
        for (int j = 0; j < 4 && ok; ++j) {
          if (t1[j] == d)
            continue;
          Simplex<3> t = t1;
          t[j] = apex;
          const double q = quality_of(s, t, qual_p);
          ok = q > 0.0;
          new_min = std::min(new_min, q);
          nt[m++] = t;
        }
        if (!ok || new_min <= old_min * (1.0 + 1e-9) + 1e-14)
          continue;
        mesh.elements[e] = nt[0];
        mesh.elements[f] = nt[1];
        mesh.elements.push_back(nt[2]);
        touched[e] = touched[f] = 1;
        ++flips;
      }
  }
  touched.resize(mesh.elements.size(), 1);
  dead.resize(mesh.elements.size(), 0);

  const auto star = node_elements(mesh);
  for (const auto& [a, b] : mesh_edges(mesh)) {
    std::vector<int> ring;
    for (int e : star[a]) {
      const auto& el = mesh.elements[e];
      if (std::find(el.begin(), el.end(), b) != el.end())
        ring.push_back(e);
    }
    if (ring.size() != 3)
      continue;
    bool skip = false;
    for (int e : ring)
      skip = skip || touched[e] || dead[e];
    if (skip)
      continue;
    std::vector<int> others;
    for (int e : ring)
      for (int n : mesh.elements[e])
        if (n != a && n != b)
          others.push_back(n);
    std::sort(others.begin(), others.end());
    if (others.size() != 6 || others[0] != others[1] || others[2] != others[3] || others[4] != others[5] ||
        others[1] == others[2] || others[3] == others[4])
      continue;  // open ring: edge on the boundary
    Simplex<3> ta{others[0], others[2], others[4], a};
    if (signed_volume<3>(coords_of(mesh, ta)) < 0.0)
      std::swap(ta[0], ta[1]);
    Simplex<3> tb{ta[1], ta[0], ta[2], b};
    const double qa = quality_of(s, ta, qual_p), qb = quality_of(s, tb, qual_p);
    if (qa <= 0.0 || qb <= 0.0)
      continue;
    double old_min = 1.0;
    for (int e : ring)
      old_min = std::min(old_min, quality_of(s, mesh.elements[e], qual_p));
    if (std::min(qa, qb) <= old_min * (1.0 + 1e-9) + 1e-14)
      continue;
    mesh.elements[ring[0]] = ta;
    mesh.elements[ring[1]] = tb;
    dead[ring[2]] = 1;
    for (int e : ring)
      touched[e] = 1;
    ++flips;
  }
  std::size_t w = 0;
  for (std::size_t e = 0; e < mesh.elements.size(); ++e)
    if (!dead[e])
      mesh.elements[w++] = mesh.elements[e];
  mesh.elements.resize(w);
  return flips;
}

} // namespace detail

/// Quality-improving diagonal flips (2D) or face/edge swaps (3D), repeated
/// until no swap applies or the sweep cap is reached.
template <int D>
PassCounts swap_pass(AdaptState<D>& s, const AdaptOptions& opts)
{
  PassCounts counts;
  const double qual_p = opts.quality_weight<D>();
  for (int sweep = 0; sweep < opts.swap_sweeps; ++sweep) {
    int flips = 0;
    if constexpr (D == 2)
      flips = detail::flip_edges_2d(s, qual_p);
    else
      flips = detail::flip_faces_3d(s, qual_p);
    counts.swaps += flips;
    if (flips == 0)
      break;
  }
  if (counts.swaps > 0)
    classify_boundary(s.mesh);
  return counts;
}

/// Re-evaluates the driving field on a changed mesh (used when the field is
/// known analytically rather than carried by interpolation).
template <int D>
using FieldSource = std::function<std::vector<double>(const SimplicialMesh<D>&)>;

template <int D>
struct AdaptResult {
  SimplicialMesh<D> mesh;
  std::vector<double> u;
  AdaptStats stats;
};

namespace detail {

template <int D>
void check_or_dump(const SimplicialMesh<D>& mesh, const char* pass)
{
  const auto report = validate(mesh);
  if (report.ok())
    return;
  std::string where;
  try {
    const auto path = std::filesystem::temp_directory_path() / "anisocont_invalid_mesh.txt";
    write_mesh_file(path.string(), mesh);
    where = " (mesh dumped to " + path.string() + ")";
  }
  catch (const std::exception&) {
  }
  throw AdaptError(std::string("adaptation produced an invalid mesh after ") + pass + ": inverted=" +
                   std::to_string(report.inverted) + " nonconforming=" + std::to_string(report.nonconforming) +
                   " orphan=" + std::to_string(report.orphan) + " boundary=" + std::to_string(report.boundary) + where);
}

template <int D>
MetricField<D> build_metric(const SimplicialMesh<D>& mesh, std::span<const double> u, const AdaptOptions& opts,
                            double eta_scale)
{
  const auto z = select_field(u, opts.field_selector);
  const auto H = recover_hessian<D>(mesh, z);
  const double eta = eval_eta(opts.eta_policy, mesh.num_nodes()) * eta_scale;
  SizeBounds bounds;
  if (opts.h_max_fraction > 0.0)
    bounds.h_max = opts.h_max_fraction * mesh.box.diameter();
  return compute_metric<D>(H, eta, opts.ppar, bounds);
}

template <int D>
AdaptResult<D> tradapt_impl(const SimplicialMesh<D>& mesh, std::span<const double> u, const AdaptOptions& opts,
                            double eta_scale, const FieldSource<D>& source)
{
  opts.check();
  if (u.size() != mesh.nodes.size())
    throw std::invalid_argument("tradapt: field length does not match node count");
  AdaptResult<D> out;
  out.stats.np_before = mesh.num_nodes();
  const ActionMask mask = decode_sw(opts.sw);
  AdaptState<D> s{mesh, {u.begin(), u.end()}, {}};
  if (encode_sw(mask) == 0) {
    out.mesh = std::move(s.mesh);
    out.u = std::move(s.u);
    out.stats.np_after = out.stats.np_before;
    return out;
  }
  s.psi = build_metric<D>(s.mesh, s.u, opts, eta_scale);
  out.stats.lmax_history.push_back(max_metric_edge_length(s.mesh, s.psi));
  out.stats.np_history.push_back(s.mesh.num_nodes());
  for (int it = 0; it < opts.innerit; ++it) {
    if (mask.swap) {
      out.stats.counts += swap_pass(s, opts);
      check_or_dump(s.mesh, "swap");
    }
    if (mask.coarsen) {
      out.stats.counts += coarsen_pass(s, opts);
      check_or_dump(s.mesh, "coarsen");
    }
    if (mask.refine) {
      out.stats.counts += refine_pass(s, opts);
      check_or_dump(s.mesh, "refine");
    }
    if (mask.move) {
      out.stats.counts += move_pass(s, opts);
      check_or_dump(s.mesh, "move");
    }
    if (source)
      s.u = source(s.mesh);
    s.psi = build_metric<D>(s.mesh, s.u, opts, eta_scale);
    ++out.stats.iterations;
    const double lmax = max_metric_edge_length(s.mesh, s.psi);
    out.stats.lmax_history.push_back(lmax);
    out.stats.np_history.push_back(s.mesh.num_nodes());
    if (lmax < opts.l_up)
      break;
  }
  out.stats.np_after = s.mesh.num_nodes();
  out.mesh = std::move(s.mesh);
  out.u = std::move(s.u);
  return out;
}

} // namespace detail

/// Metric-driven adaptation: builds Psi from the selected field, then runs
/// up to innerit iterations of swap, coarsen, refine and move (each only if
/// enabled by opts.sw), recomputing Psi after each iteration and stopping
/// once the longest metric edge is below l_up.
template <int D>
AdaptResult<D> tradapt(const SimplicialMesh<D>& mesh, std::span<const double> u, const AdaptOptions& opts,
                       const FieldSource<D>& source = {})
{
  return detail::tradapt_impl<D>(mesh, u, opts, 1.0, source);
}

/// Pure coarsening towards trcop.npb nodes (at most crmax calls, eta raised
/// by (np/npb)^(2/d) per call while above budget), then tradapt with trop.
/// The first stage is skipped unless npb > 0 and crmax > 0.
template <int D>
AdaptResult<D> two_step_adapt(const SimplicialMesh<D>& mesh, std::span<const double> u, const AdaptOptions& trop,
                              const CoarsenOptions& trcop, const FieldSource<D>& source = {},
                              AdaptStats* coarsen_stats = nullptr)
{
  trcop.check();
  AdaptResult<D> cur{mesh, {u.begin(), u.end()}, {}};
  AdaptStats first;
  first.np_before = first.np_after = mesh.num_nodes();
  if (trcop.npb > 0 && trcop.crmax > 0) {
    double scale = 1.0;
    for (int call = 0; call < trcop.crmax; ++call) {
      const int np = cur.mesh.num_nodes();
      if (np <= trcop.npb)
        break;
      scale *= std::pow(static_cast<double>(np) / trcop.npb, 2.0 / D);
      auto r = detail::tradapt_impl<D>(cur.mesh, cur.u, trcop, scale, source);
      r.stats.coarsening_calls = 1;
      first.append(r.stats);
      cur.mesh = std::move(r.mesh);
      cur.u = std::move(r.u);
    }
  }
  if (coarsen_stats)
    *coarsen_stats = first;
  auto second = tradapt<D>(cur.mesh, cur.u, trop, source);
  AdaptStats total = first;
  total.append(second.stats);
  total.np_before = mesh.num_nodes();
  second.stats = total;
  return second;
}

} // namespace anisocont
