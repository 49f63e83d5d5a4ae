// Acceptance suite: one PASS/FAIL line per criterion; exit status is the
// number of failed criteria.

#include "anisocont/driver.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

using namespace anisocont;
using std::numbers::pi;

#ifndef ANISOCONT_DEMOS
#define ANISOCONT_DEMOS "demos"
#endif

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <int D>
ProblemDef dirichlet_zero()
{
  ProblemDef p;
  for (int id = 1; id <= num_segments<D>(); ++id)
    p.bc[id] = BoundaryCondition::dirichlet(ProfileId::Zero);
  return p;
}

std::string fmt(double v, int prec = 6)
{
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

RunConfig trivial_branch_config()
{
  RunConfig cfg;
  cfg.problem = dirichlet_zero<2>();
  cfg.problem.lambda = -0.2;
  cfg.mesh = {2, 2 * pi, pi, 1.0, 85, 43, 2};  // h = 4 pi / 84 < 0.15
  cfg.cont.ds0 = 0.02;
  cfg.cont.ds_max = 0.04;
  cfg.cont.nsteps = 60;
  cfg.cont.param_max = 0.9;
  return cfg;
}

// Trivial-branch continuation of the cos problem with d = 0, shared by
// criteria 1 and 2.
const RunSummary& trivial_branch_run()
{
  static const RunSummary sum = run_config(trivial_branch_config(), RunOutputs{});
  return sum;
}

Outcome criterion_bifurcation_values()
{
  const auto& sum = trivial_branch_run();
  const double exact[3] = {0.3125, 0.5, 0.8125};
  if (sum.bifurcations.size() < 3)
    return {false, "found " + std::to_string(sum.bifurcations.size()) + " BPs"};
  bool ok = true;
  std::string d;
  for (int k = 0; k < 3; ++k) {
    const double v = sum.bifurcations[k].param;
    ok = ok && std::abs(v - exact[k]) <= 5e-3;
    if (k > 0)
      ok = ok && v > sum.bifurcations[k - 1].param;
    d += (k ? ", " : "") + fmt(v) + " (err " + fmt(std::abs(v - exact[k]), 2) + ")";
  }
  return {ok, "BPs " + d};
}

Outcome criterion_eigenfunction()
{
  const auto& sum = trivial_branch_run();
  if (sum.bifurcations.empty())
    return {false, "no BP"};
  const auto cfg = trivial_branch_config();
  const auto mesh = build_rect_mesh(cfg.mesh.lx, cfg.mesh.ly, cfg.mesh.nx, cfg.mesh.ny);
  const auto& phi = sum.bifurcations.front().phi;
  if (phi.size() != mesh.num_nodes())
    return {false, "eigenvector size mismatch"};
  Vector ref(mesh.num_nodes());
  for (int n = 0; n < mesh.num_nodes(); ++n)
    ref[n] = std::sin((mesh.nodes[n].x() + 2 * pi) / 4) * std::sin((mesh.nodes[n].y() + pi) / 2);
  const SparseMatrix M = assemble_mass(mesh);
  const double c = std::abs(phi.dot(M * ref)) / std::sqrt(phi.dot(M * phi) * ref.dot(M * ref));
  return {c > 0.99, "normalized inner product " + fmt(c, 8)};
}

Outcome criterion_sw_decoding()
{
  // Active actions for each sw, listed in the order c, r, m, s
  const char* table[16] = {"none", "m",     "r",     "r,m",   "c",     "c,m",   "c,r",   "c,r,m",
                           "s",    "m,s",   "r,s",   "r,m,s", "c,s",   "c,m,s", "c,r,s", "c,r,m,s"};
  int matched = 0;
  for (int sw = 0; sw < 16; ++sw) {
    const auto m = decode_sw(sw);
    std::string s;
    auto add = [&s](bool on, const char* t) {
      if (on)
        s += (s.empty() ? "" : ",") + std::string(t);
    };
    add(m.coarsen, "c");
    add(m.refine, "r");
    add(m.move, "m");
    add(m.swap, "s");
    if (s.empty())
      s = "none";
    matched += (s == table[sw] && encode_sw(m) == sw) ? 1 : 0;
  }
  bool range_ok = true;
  for (int bad : {-1, 16})
    try {
      decode_sw(bad);
      range_ok = false;
    }
    catch (const std::invalid_argument&) {
    }
  return {matched == 16 && range_ok, std::to_string(matched) + "/16 columns match"};
}

double spot_field(const Vec<2>& p) { return std::exp(-2.0 * ((p.x() - 0.5) * (p.x() - 0.5) + p.y() * p.y())); }

Outcome criterion_coarsening_budget()
{
  const auto mesh = build_rect_mesh(2 * pi, pi, 111, 56);  // 6216 nodes
  std::vector<double> u(mesh.num_nodes());
  for (int n = 0; n < mesh.num_nodes(); ++n)
    u[n] = spot_field(mesh.nodes[n]);
  AdaptOptions trop;
  CoarsenOptions trcop(trop);
  trcop.npb = 3000;
  trcop.crmax = 10;
  AdaptStats first;
  const auto r = two_step_adapt<2>(mesh, u, trop, trcop, {}, &first);
  const bool ok = mesh.num_nodes() >= 6000 && first.np_after <= 3300 && validate(r.mesh).ok();
  return {ok, "np " + std::to_string(mesh.num_nodes()) + " -> " + std::to_string(first.np_after) + " after " +
                  std::to_string(first.coarsening_calls) + " coarsening calls, final " + std::to_string(r.mesh.num_nodes())};
}

double tanh_field(const Vec<2>& p) { return std::tanh(10.0 * (p.x() - 1.0)); }

// Max |z - I_h z| sampled on a barycentric lattice in every element.
double interpolation_error(const Mesh2& m)
{
  constexpr int k = 12;
  double err = 0.0;
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto x = m.coords(e);
    const double z0 = tanh_field(x[0]), z1 = tanh_field(x[1]), z2 = tanh_field(x[2]);
    for (int i = 0; i <= k; ++i)
      for (int j = 0; i + j <= k; ++j) {
        const double b1 = double(i) / k, b2 = double(j) / k, b0 = 1 - b1 - b2;
        const Vec<2> p = b0 * x[0] + b1 * x[1] + b2 * x[2];
        err = std::max(err, std::abs(tanh_field(p) - (b0 * z0 + b1 * z1 + b2 * z2)));
      }
  }
  return err;
}

Outcome criterion_metric_uniformity()
{
  const auto start = build_rect_mesh(2, 2, 21, 21);
  const FieldSource<2> source = [](const Mesh2& m) {
    std::vector<double> z(m.num_nodes());
    for (int n = 0; n < m.num_nodes(); ++n)
      z[n] = tanh_field(m.nodes[n]);
    return z;
  };
  AdaptOptions opts;
  opts.innerit = 10;
  const auto r = tradapt<2>(start, source(start), opts, source);
  const int np = r.mesh.num_nodes();

  const auto psi = detail::build_metric<2>(r.mesh, r.u, opts, 1.0);
  const auto edges = mesh_edges(r.mesh);
  int in_range = 0;
  for (auto [a, b] : edges) {
    const double L = edge_length_metric(r.mesh, psi, a, b);
    in_range += (L >= 0.85 * opts.l_low && L <= 1.15 * opts.l_up) ? 1 : 0;
  }
  const double frac = double(in_range) / double(edges.size());

  const int side = static_cast<int>(std::lround(std::sqrt(double(np))));
  const auto uni = build_rect_mesh(2, 2, side, side);
  const double e_adapt = interpolation_error(r.mesh), e_uni = interpolation_error(uni);
  const bool matched = std::abs(uni.num_nodes() - np) <= 0.1 * np;
  const bool ok = matched && frac >= 0.85 && e_adapt <= e_uni && validate(r.mesh).ok();
  return {ok, "np " + std::to_string(np) + " (uniform " + std::to_string(uni.num_nodes()) + "), edges in range " +
                  fmt(100 * frac, 4) + "%, Linf error " + fmt(e_adapt, 3) + " vs uniform " + fmt(e_uni, 3)};
}

template <int D>
bool boundary_on_box(const SimplicialMesh<D>& m)
{
  const double tol = 1e-9 * m.box.diameter();
  for (int n = 0; n < m.num_nodes(); ++n) {
    const auto s = m.boundary_node_flags[n];
    for (int id = 1; id <= num_segments<D>(); ++id) {
      if (!has_segment(s, id))
        continue;
      const int ax = segment_axis<D>(id);
      const double plane = segment_upper<D>(id) ? m.box.hi[ax] : m.box.lo[ax];
      if (std::abs(m.nodes[n][ax] - plane) > tol)
        return false;
    }
    for (int k = 0; k < D; ++k)
      if (m.nodes[n][k] < m.box.lo[k] - tol || m.nodes[n][k] > m.box.hi[k] + tol)
        return false;
  }
  return true;
}

Outcome criterion_fuzz()
{
  std::mt19937 rng(20240611);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> swd(0, 15);
  int passes = 0, failures = 0, iters2 = 0, iters3 = 0;
  std::string first_failure;

  auto random_field = [&](auto dummy) {
    constexpr int D = decltype(dummy)::value;
    const double cx = 2 * unit(rng) - 1, cy = 2 * unit(rng) - 1, w = 1 + 6 * unit(rng), th = pi * unit(rng);
    return [=](const Vec<D>& p) {
      const double s = std::cos(th) * (p[0] - cx) + std::sin(th) * (p[1] - cy);
      return std::tanh(w * s) + 0.3 * std::exp(-(p[0] - cx) * (p[0] - cx) - (p[1] + cy) * (p[1] + cy));
    };
  };

  Mesh2 m2 = build_rect_mesh(2, 1, 17, 9);
  Mesh3 m3 = build_box_mesh(1, 1, 1, 5, 5, 5);
  for (int it = 0; it < 500; ++it) {
    const double eta = std::pow(10.0, -4.0 + 2.0 * unit(rng));
    AdaptOptions o;
    o.eta_policy = EtaPolicy::constant(eta);
    o.sw = swd(rng);
    o.innerit = 1;
    const bool three = it % 10 == 9;
    try {
      if (!three) {
        if (m2.num_nodes() > 4000)
          m2 = build_rect_mesh(2, 1, 17, 9);
        const auto f = random_field(std::integral_constant<int, 2>{});
        std::vector<double> u(m2.num_nodes());
        for (int n = 0; n < m2.num_nodes(); ++n)
          u[n] = f(m2.nodes[n]);
        auto r = tradapt<2>(m2, u, o);
        m2 = std::move(r.mesh);
        ++iters2;
        passes += r.stats.iterations;
        if (!validate(m2).ok() || !boundary_on_box(m2))
          throw AdaptError("defect after iteration");
      }
      else {
        if (m3.num_nodes() > 3000)
          m3 = build_box_mesh(1, 1, 1, 5, 5, 5);
        o.eta_policy = EtaPolicy::constant(10 * eta);
        const auto f = random_field(std::integral_constant<int, 3>{});
        std::vector<double> u(m3.num_nodes());
        for (int n = 0; n < m3.num_nodes(); ++n)
          u[n] = f(m3.nodes[n]);
        auto r = tradapt<3>(m3, u, o);
        m3 = std::move(r.mesh);
        ++iters3;
        passes += r.stats.iterations;
        if (!validate(m3).ok() || !boundary_on_box(m3))
          throw AdaptError("defect after iteration");
      }
    }
    catch (const std::exception& e) {
      if (failures++ == 0)
        first_failure = "iteration " + std::to_string(it) + " sw=" + std::to_string(o.sw) + ": " + e.what();
    }
  }
  return {failures == 0, std::to_string(iters2) + " 2D + " + std::to_string(iters3) + " 3D iterations, " +
                             std::to_string(failures) + " failures" + (failures ? " (" + first_failure + ")" : "")};
}

Outcome criterion_adaptation_transparency()
{
  auto cfg = load_run_config(std::string(ANISOCONT_DEMOS) + "/ac2d_wspot.cfg");
  const auto sum = run_config(cfg, RunOutputs{});
  double worst = 0.0;
  for (const auto& ev : sum.adapt_events)
    worst = std::max(worst, ev.relative_jump());
  const bool ok = sum.accepted_steps >= 40 && !sum.adapt_events.empty() && worst < 0.02;
  return {ok, std::to_string(sum.accepted_steps) + " steps, " + std::to_string(sum.adapt_events.size()) +
                  " adaptations, max L2 jump " + fmt(100 * worst, 3) + "%"};
}

Outcome criterion_3d_smoke()
{
  auto cfg = load_run_config(std::string(ANISOCONT_DEMOS) + "/ac3d_wspot.cfg");
  cfg.cont.nsteps = 20;
  const auto mesh = build_box_mesh(cfg.mesh.lx, cfg.mesh.ly, cfg.mesh.lz, cfg.mesh.nx, cfg.mesh.ny, cfg.mesh.nz);
  const auto sum = run_config(cfg, RunOutputs{});
  int post_max = 0, row_max = 0;
  for (const auto& ev : sum.adapt_events)
    post_max = std::max(post_max, ev.np_after);
  for (const auto& r : sum.records)
    row_max = std::max(row_max, r.np);
  const bool ok = sum.accepted_steps >= 20 && !sum.adapt_events.empty() && row_max <= 2 * post_max &&
                  sum.warnings.empty();
  return {ok, "initial np " + std::to_string(mesh.num_nodes()) + ", " + std::to_string(sum.accepted_steps) +
                  " steps, " + std::to_string(sum.adapt_events.size()) + " adaptations, max np " +
                  std::to_string(row_max) + ", max post-adaptation np " + std::to_string(post_max)};
}

template <int D>
double fd_error(const SimplicialMesh<D>& mesh, const Vector& u, const ProblemDef& prob)
{
  const Discretization<D> disc(mesh, prob);
  const Eigen::MatrixXd J(disc.jacobian(u, prob));
  double num = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double h = 1e-6 * (1 + std::abs(u[j]));
    Vector up = u, um = u;
    up[j] += h;
    um[j] -= h;
    const Vector col = (disc.residual(up, prob) - disc.residual(um, prob)) / (2 * h);
    num = std::max(num, (col - J.col(j)).cwiseAbs().maxCoeff());
  }
  return num / J.cwiseAbs().maxCoeff();
}

Outcome criterion_jacobian_fd()
{
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    ProblemDef p;
    p.c = 0.5 + std::abs(unit(rng));
    p.lambda = unit(rng);
    p.gamma = 1 + unit(rng) * 0.5;
    p.aux["xi"] = unit(rng);
    p.aux["d"] = unit(rng);
    if (t % 2 == 0) {
      auto m = build_rect_mesh(2, 1, 7 + t % 3, 5 + t % 4);
      for (int n = 0; n < m.num_nodes(); ++n)
        if (!m.on_boundary(n))
          m.nodes[n] += 0.05 * Vec<2>(unit(rng), unit(rng));
      p.bc = {{1, BoundaryCondition::dirichlet(ProfileId::Zero)}, {2, BoundaryCondition::dirichlet(ProfileId::CosHalf)},
              {3, BoundaryCondition::dirichlet(ProfileId::GaussSpot)}, {4, BoundaryCondition::neumann()}};
      Vector u(m.num_nodes());
      for (auto& v : u)
        v = 1.3 * unit(rng);
      worst = std::max(worst, fd_error(m, u, p));
    }
    else {
      auto m = build_box_mesh(1, 1.5, 1, 3 + t % 2, 4, 3);
      p.bc = {{1, BoundaryCondition::neumann()}, {2, BoundaryCondition::neumann()},
              {3, BoundaryCondition::dirichlet(ProfileId::GaussSpot)}, {4, BoundaryCondition::neumann()},
              {5, BoundaryCondition::dirichlet(ProfileId::Zero)}, {6, BoundaryCondition::neumann()}};
      Vector u(m.num_nodes());
      for (auto& v : u)
        v = 1.3 * unit(rng);
      worst = std::max(worst, fd_error(m, u, p));
    }
  }
  return {worst < 1e-6, "max relative error " + fmt(worst, 3) + " over 20 cases"};
}

Outcome criterion_stability_index()
{
  const auto m = build_rect_mesh(2 * pi, pi, 85, 43);
  auto prob = dirichlet_zero<2>();
  prob.lambda = 1.2;
  const int n = stability_index(m, Vector::Zero(m.num_nodes()), prob);
  return {n == 4, "n_neg = " + std::to_string(n)};
}

} // namespace

int main()
{
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
    {1, "bifurcation values", 120, criterion_bifurcation_values},
    {2, "critical eigenfunction shape", 60, criterion_eigenfunction},
    {3, "sw decoding", 1, criterion_sw_decoding},
    {4, "coarsening budget", 60, criterion_coarsening_budget},
    {5, "metric uniformity and interpolation error", 60, criterion_metric_uniformity},
    {6, "mesh validity fuzz", 300, criterion_fuzz},
    {7, "adaptation transparency (2D spot)", 300, criterion_adaptation_transparency},
    {8, "3D smoke test", 900, criterion_3d_smoke},
    {9, "Jacobian vs finite differences", 60, criterion_jacobian_fd},
    {10, "stability index oracle", 60, criterion_stability_index},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    }
    catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("[%s] %2d %s: %s; %.1fs (budget %.0fs)%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s, in_time ? "" : " OVER BUDGET");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed;
}
