#pragma once

#include "anisocont/adapt.hpp"
#include "anisocont/fem.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>

namespace anisocont {

struct ContinuationSettings {
  double ds0 = 0.05;
  double ds_min = 1e-5;
  double ds_max = 0.2;
  double newton_tol = 1e-8;
  int newton_max_it = 10;
  int amod = 0;   // adapt every amod accepted steps, 0 = never
  int ngen = 1;   // adapt + re-solve repetitions per adaptation
  int nsteps = 50;
  bool bif_detection = true;
  double xi_w = 0.5;  // weight of the u-part in the arclength norm
  double param_min = -std::numeric_limits<double>::infinity();
  double param_max = std::numeric_limits<double>::infinity();
  double bp_bracket = 1e-4;
  double switch_delta = 0.1;

  void check() const
  {
    if (!(ds_min > 0.0) || !(ds_min <= std::abs(ds0)) || !(std::abs(ds0) <= ds_max))
      throw ConfigError("continuation: need 0 < ds_min <= |ds0| <= ds_max");
    if (amod < 0)
      throw ConfigError("continuation: amod must be >= 0");
    if (ngen < 1)
      throw ConfigError("continuation: ngen must be >= 1");
    if (!(newton_tol > 0.0) || newton_max_it < 0)
      throw ConfigError("continuation: invalid Newton settings");
    if (!(xi_w > 0.0 && xi_w < 1.0))
      throw ConfigError("continuation: xi_w must be in (0,1)");
  }
};

struct BranchRecord {
  int step = 0;
  std::string param_name;
  double param_value = 0.0;
  double l2 = 0.0;
  double min_u = 0.0;
  double max_u = 0.0;
  int np = 0;
  int n_neg = -1;  // -1: unknown
  std::string flag;
};

template <int D>
using MeshPtr = std::shared_ptr<const SimplicialMesh<D>>;

template <int D>
struct ContinuationState {
  MeshPtr<D> mesh;
  Vector u;
  ProblemDef prob;
  Vector tangent;  // (u-part, parameter), unit in the weighted norm
  int step_index = 0;
  double ds = 0.0;

  double param() const { return prob.active(); }
  Vector point() const
  {
    Vector x(u.size() + 1);
    x << u, param();
    return x;
  }
};

struct NewtonResult {
  Vector u;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;
  std::string message;
};

/// Plain Newton on G(u) = 0 with the parameters of `prob` fixed.
template <int D>
NewtonResult newton_solve(const Discretization<D>& disc, const Vector& u0, const ProblemDef& prob, double tol, int max_it)
{
  NewtonResult r;
  r.u = u0;
  Eigen::SparseLU<SparseMatrix> lu;
  for (int it = 0;; ++it) {
    const Vector G = disc.residual(r.u, prob);
    r.residual = G.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(r.residual)) {
      r.message = "residual is not finite";
      return r;
    }
    if (r.residual <= tol) {
      r.converged = true;
      return r;
    }
    if (it >= max_it) {
      r.message = "no convergence after " + std::to_string(max_it) + " iterations, |G| = " + std::to_string(r.residual);
      return r;
    }
    lu.compute(disc.jacobian(r.u, prob));
    if (lu.info() != Eigen::Success) {
      r.message = "singular Jacobian: " + lu.lastErrorMessage();
      return r;
    }
    r.u -= lu.solve(G);
    ++r.iterations;
  }
}

template <int D>
NewtonResult newton_solve(const SimplicialMesh<D>& mesh, const Vector& u0, const ProblemDef& prob, double tol, int max_it)
{
  return newton_solve(Discretization<D>(mesh, prob), u0, prob, tol, max_it);
}

/// Number of negative eigenvalues of the pencil (J, M) restricted to the
/// free nodes, from the inertia of the symmetric part of J. Returns -1 if
/// the factorization fails.
template <int D>
int stability_index(const Discretization<D>& disc, const Vector& u, const ProblemDef& prob)
{
  const SparseMatrix J = disc.restrict_free(disc.jacobian(u, prob));
  if (J.rows() == 0)
    return 0;
  const SparseMatrix Js = 0.5 * (J + SparseMatrix(J.transpose()));
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(Js);
  if (ldlt.info() != Eigen::Success)
    return -1;
  const Vector d = ldlt.vectorD();
  if (!d.allFinite())
    return -1;
  int neg = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    neg += d[i] < 0.0 ? 1 : 0;
  return neg;
}

template <int D>
int stability_index(const SimplicialMesh<D>& mesh, const Vector& u, const ProblemDef& prob)
{
  return stability_index(Discretization<D>(mesh, prob), u, prob);
}

/// Eigenvector of (J, M) on the free nodes whose eigenvalue is closest to
/// zero, by inverse iteration; returned on all nodes (zero on Dirichlet
/// nodes), normalized so that u'Mu / |Omega| = 1.
template <int D>
Vector critical_eigenvector(const Discretization<D>& disc, const Vector& u, const ProblemDef& prob, int iterations = 30)
{
  const auto& free = disc.free_nodes();
  const SparseMatrix J = disc.restrict_free(disc.jacobian(u, prob));
  const SparseMatrix M = disc.restrict_free(disc.mass());
  Eigen::SparseLU<SparseMatrix> lu(J);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("critical_eigenvector: factorization failed");
  Vector x = Vector::Ones(J.rows());
  // deterministic, not orthogonal to smooth modes
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x[i] += 0.1 * std::sin(1.0 + 0.37 * static_cast<double>(i));
  for (int it = 0; it < iterations; ++it) {
    x = lu.solve(M * x);
    x /= std::sqrt(x.dot(M * x));
  }
  Vector full = Vector::Zero(disc.size());
  for (std::size_t k = 0; k < free.size(); ++k)
    full[free[k]] = x[static_cast<Eigen::Index>(k)];
  full /= disc.l2_norm(full);
  // sign convention: largest-magnitude entry positive
  Eigen::Index imax = 0;
  full.cwiseAbs().maxCoeff(&imax);
  if (full[imax] < 0.0)
    full = -full;
  return full;
}

struct BifurcationPoint {
  int step = 0;
  double param = 0.0;
  Vector u;
  Vector phi;           // critical eigenvector
  Vector old_tangent;   // branch tangent at the BP
  bool approximate = false;
};

/// Corrector/predictor machinery on one fixed mesh.
template <int D>
class ArclengthSystem {
public:
  ArclengthSystem(MeshPtr<D> mesh, const ProblemDef& prob, const ContinuationSettings& settings)
    : mesh_(std::move(mesh)), disc_(*mesh_, prob), settings_(settings)
  {
  }

  const Discretization<D>& disc() const { return disc_; }
  const MeshPtr<D>& mesh() const { return mesh_; }
  int n() const { return disc_.size(); }

  /// Weighted inner product on (u, p) pairs.
  double inner(const Vector& a, const Vector& b) const
  {
    const auto N = n();
    const double uu = a.head(N).dot(disc_.mass() * b.head(N)) / disc_.domain_volume();
    return settings_.xi_w * uu + (1.0 - settings_.xi_w) * a[N] * b[N];
  }

  double norm(const Vector& a) const { return std::sqrt(std::max(0.0, inner(a, a))); }

  /// Row vector r with r.x = inner(t, x).
  Vector weight_row(const Vector& t) const
  {
    const auto N = n();
    Vector r(N + 1);
    r.head(N) = (settings_.xi_w / disc_.domain_volume()) * (disc_.mass() * t.head(N));
    r[N] = (1.0 - settings_.xi_w) * t[N];
    return r;
  }

  SparseMatrix bordered(const Vector& u, const ProblemDef& prob, const Vector& row) const
  {
    const auto N = n();
    const SparseMatrix J = disc_.jacobian(u, prob);
    const Vector Gp = disc_.param_derivative(u, prob, prob.active_param);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(J.nonZeros() + 2 * N + 1);
    for (int col = 0; col < J.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(J, col); it; ++it)
        trip.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index i = 0; i < N; ++i) {
      if (Gp[i] != 0.0)
        trip.emplace_back(i, N, Gp[i]);
      if (row[i] != 0.0)
        trip.emplace_back(N, i, row[i]);
    }
    trip.emplace_back(N, N, row[N]);
    SparseMatrix A(N + 1, N + 1);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return A;
  }

  /// Unit tangent at (u, prob); `reference` fixes the bordering row and the
  /// orientation. An empty reference means "increasing parameter".
  std::optional<Vector> tangent(const Vector& u, const ProblemDef& prob, const Vector& reference) const
  {
    const auto N = n();
    Vector ref = reference;
    if (ref.size() != N + 1) {
      ref = Vector::Zero(N + 1);
      ref[N] = 1.0;
    }
    Vector rhs = Vector::Zero(N + 1);
    rhs[N] = 1.0;
    Eigen::SparseLU<SparseMatrix> lu;
    for (int attempt = 0; attempt < 3; ++attempt) {
      Vector row = weight_row(ref);
      if (attempt > 0) {
        // perturb the bordering row off an exactly singular configuration
        for (Eigen::Index i = 0; i <= N; ++i)
          row[i] += 1e-6 * attempt * std::cos(0.7 * static_cast<double>(i));
      }
      lu.compute(bordered(u, prob, row));
      if (lu.info() != Eigen::Success)
        continue;
      Vector t = lu.solve(rhs);
      if (!t.allFinite())
        continue;
      const double nt = norm(t);
      if (!(nt > 0.0))
        continue;
      t /= nt;
      if (inner(t, ref) < 0.0)
        t = -t;
      return t;
    }
    return std::nullopt;
  }

  struct Corrected {
    Vector x;
    int iterations = 0;
    bool converged = false;
  };

  /// Newton on {G(u,p) = 0, inner(t, x - base) = ds} from `start`.
  Corrected correct(const Vector& start, const Vector& base, const Vector& t, double ds, ProblemDef prob) const
  {
    const auto N = n();
    Corrected c{start, 0, false};
    const Vector row = weight_row(t);
    Eigen::SparseLU<SparseMatrix> lu;
    for (int it = 0;; ++it) {
      prob.set_active(c.x[N]);
      const Vector u = c.x.head(N);
      Vector F(N + 1);
      F.head(N) = disc_.residual(u, prob);
      F[N] = row.dot(c.x - base) - ds;
      const double res = F.lpNorm<Eigen::Infinity>();
      if (!std::isfinite(res))
        return c;
      if (res <= settings_.newton_tol) {
        c.converged = true;
        return c;
      }
      if (it >= settings_.newton_max_it)
        return c;
      lu.compute(bordered(u, prob, row));
      if (lu.info() != Eigen::Success)
        return c;
      c.x -= lu.solve(F);
      ++c.iterations;
    }
  }

private:
  MeshPtr<D> mesh_;
  Discretization<D> disc_;
  ContinuationSettings settings_;
};

template <int D>
BranchRecord make_record(const ContinuationState<D>& s, int n_neg, const std::string& flag = "")
{
  BranchRecord r;
  r.step = s.step_index;
  r.param_name = s.prob.active_param;
  r.param_value = s.param();
  r.l2 = l2_norm(*s.mesh, s.u);
  r.min_u = s.u.size() ? s.u.minCoeff() : 0.0;
  r.max_u = s.u.size() ? s.u.maxCoeff() : 0.0;
  r.np = s.mesh->num_nodes();
  r.n_neg = n_neg;
  r.flag = flag;
  return r;
}

/// Tangent for a converged state; `reference` orients it (see
/// ArclengthSystem::tangent).
template <int D>
std::optional<Vector> compute_tangent(const ContinuationState<D>& s, const ContinuationSettings& settings,
                                      const Vector& reference = {})
{
  ArclengthSystem<D> sys(s.mesh, s.prob, settings);
  return sys.tangent(s.u, s.prob, reference.size() ? reference : s.tangent);
}

struct StepOutcome {
  bool accepted = false;
  int iterations = 0;
  double ds_used = 0.0;
  std::string message;
};

/// One pseudo-arclength step with stepsize control. On success the state
/// holds the new point, tangent and stepsize; on failure it is unchanged.
template <int D>
StepOutcome cont_step(ContinuationState<D>& s, const ContinuationSettings& settings)
{
  ArclengthSystem<D> sys(s.mesh, s.prob, settings);
  StepOutcome out;
  const Vector base = s.point();
  double ds = s.ds;
  while (std::abs(ds) >= settings.ds_min) {
    const Vector pred = base + ds * s.tangent;
    auto c = sys.correct(pred, base, s.tangent, ds, s.prob);
    if (c.converged) {
      const auto N = sys.n();
      ProblemDef prob = s.prob;
      prob.set_active(c.x[N]);
      const Vector u = c.x.head(N);
      auto t = sys.tangent(u, prob, s.tangent);
      if (t) {
        s.u = u;
        s.prob = prob;
        s.tangent = *t;
        ++s.step_index;
        out.accepted = true;
        out.iterations = c.iterations;
        out.ds_used = ds;
        double next = ds;
        if (c.iterations <= 3)
          next = std::copysign(std::min(std::abs(ds) * 1.3, settings.ds_max), ds);
        s.ds = next;
        return out;
      }
    }
    ds *= 0.5;
  }
  out.message = "step size fell below ds_min";
  return out;
}

/// Bisection in arclength between an accepted point (`from`) and the next
/// accepted point `ds_total` further, localizing a change of the stability
/// index to a parameter bracket below settings.bp_bracket.
template <int D>
BifurcationPoint localize_bifurcation(const ContinuationState<D>& from, int n_neg_from, double ds_total,
                                      const ContinuationState<D>& to, const ContinuationSettings& settings)
{
  ArclengthSystem<D> sys(from.mesh, from.prob, settings);
  const auto N = sys.n();
  const Vector base = from.point();
  double lo = 0.0, hi = ds_total;
  double p_lo = from.param(), p_hi = to.param();
  Vector x_lo = base, x_hi = to.point();
  BifurcationPoint bp;
  int iter = 0;
  while (std::abs(p_hi - p_lo) > settings.bp_bracket && iter < 60) {
    ++iter;
    const double mid = 0.5 * (lo + hi);
    auto c = sys.correct(base + mid * from.tangent, base, from.tangent, mid, from.prob);
    if (!c.converged) {
      bp.approximate = true;
      break;
    }
    ProblemDef prob = from.prob;
    prob.set_active(c.x[N]);
    const int nn = stability_index(sys.disc(), c.x.head(N), prob);
    if (nn < 0) {
      bp.approximate = true;
      break;
    }
    if (nn == n_neg_from) {
      lo = mid;
      p_lo = c.x[N];
      x_lo = c.x;
    }
    else {
      hi = mid;
      p_hi = c.x[N];
      x_hi = c.x;
    }
  }
  if (iter >= 60)
    bp.approximate = true;
  bp.step = to.step_index;
  bp.param = 0.5 * (p_lo + p_hi);
  const Vector x_mid = 0.5 * (x_lo + x_hi);
  bp.u = x_mid.head(N);
  ProblemDef prob = from.prob;
  prob.set_active(bp.param);
  // the midpoint is not exactly on the branch; take the nearer corrected end
  const Vector& x_near = std::abs(x_lo[N] - bp.param) <= std::abs(x_hi[N] - bp.param) ? x_lo : x_hi;
  ProblemDef near_prob = from.prob;
  near_prob.set_active(x_near[N]);
  bp.phi = critical_eigenvector(sys.disc(), x_near.head(N), near_prob);
  bp.old_tangent = from.tangent;
  return bp;
}

/// Starts a new state on the branch bifurcating at `bp`, stepping `delta`
/// along the critical eigenvector. Tries delta, -delta, then 2 delta.
template <int D>
std::optional<ContinuationState<D>> branch_switch(const MeshPtr<D>& mesh, const ProblemDef& prob_at_bp,
                                                  const BifurcationPoint& bp, const ContinuationSettings& settings,
                                                  double delta)
{
  if (delta == 0.0)
    return std::nullopt;
  ArclengthSystem<D> sys(mesh, prob_at_bp, settings);
  const auto N = sys.n();
  Vector base(N + 1);
  base << bp.u, bp.param;
  Vector tau = Vector::Zero(N + 1);
  tau.head(N) = bp.phi;
  tau /= sys.norm(tau);
  for (double d : {delta, -delta, 2.0 * delta}) {
    auto c = sys.correct(base + d * tau, base, tau, d, prob_at_bp);
    if (!c.converged)
      continue;
    Vector diff = c.x - base;
    if (bp.old_tangent.size() == N + 1) {
      const Vector& t0 = bp.old_tangent;
      diff -= (sys.inner(diff, t0) / sys.inner(t0, t0)) * t0;
    }
    if (diff.head(N).template lpNorm<Eigen::Infinity>() <= 10.0 * settings.newton_tol)
      continue;
    ContinuationState<D> s;
    s.mesh = mesh;
    s.u = c.x.head(N);
    s.prob = prob_at_bp;
    s.prob.set_active(c.x[N]);
    const Vector ref = (d > 0.0 ? 1.0 : -1.0) * tau;
    auto t = sys.tangent(s.u, s.prob, ref);
    if (!t)
      continue;
    s.tangent = *t;
    s.step_index = bp.step;
    s.ds = std::copysign(std::abs(settings.ds0), 1.0);
    return s;
  }
  return std::nullopt;
}

struct AdaptInContOutcome {
  bool rolled_back = false;
  std::string message;
  AdaptStats stats;
};

/// Mesh adaptation inside continuation: ngen times two_step_adapt followed
/// by a Newton solve on the new mesh, then a fresh tangent oriented like the
/// interpolated old one. On Newton failure the state is restored.
template <int D>
AdaptInContOutcome adapt_in_cont(ContinuationState<D>& s, const ContinuationSettings& settings,
                                 const AdaptOptions& trop, const CoarsenOptions& trcop)
{
  AdaptInContOutcome out;
  const ContinuationState<D> saved = s;
  for (int g = 0; g < settings.ngen; ++g) {
    const auto u_std = to_std(s.u);
    auto r = two_step_adapt<D>(*s.mesh, u_std, trop, trcop);
    out.stats.append(r.stats);
    auto mesh = std::make_shared<const SimplicialMesh<D>>(std::move(r.mesh));
    Discretization<D> disc(*mesh, s.prob);
    auto nr = newton_solve(disc, to_eigen(r.u), s.prob, settings.newton_tol, settings.newton_max_it);
    if (!nr.converged) {
      s = saved;
      out.rolled_back = true;
      out.message = "Newton failed after adaptation (" + nr.message + "); continuing on the previous mesh";
      return out;
    }
    // carry the tangent over for orientation
    const Vector tu_old = s.tangent.head(s.u.size());
    const auto tu_new = interpolate<D>(*s.mesh, to_std(tu_old), *mesh);
    Vector ref(mesh->num_nodes() + 1);
    ref << to_eigen(tu_new), s.tangent[s.u.size()];
    s.mesh = mesh;
    s.u = nr.u;
    ArclengthSystem<D> sys(s.mesh, s.prob, settings);
    auto t = sys.tangent(s.u, s.prob, ref);
    if (!t) {
      s = saved;
      out.rolled_back = true;
      out.message = "tangent computation failed after adaptation; continuing on the previous mesh";
      return out;
    }
    s.tangent = *t;
  }
  return out;
}

} // namespace anisocont
