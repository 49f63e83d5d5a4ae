#include "anisocont/adapt.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace anisocont;

namespace {

template <int D>
MetricField<D> uniform_metric(int n, double scale)
{
  MetricField<D> m;
  m.tensors.assign(n, scale * Mat<D>::Identity());
  return m;
}

template <int D>
AdaptState<D> make_state(SimplicialMesh<D> mesh, double metric_scale)
{
  const int n = mesh.num_nodes();
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i)
    u[i] = mesh.nodes[i][0];
  return {std::move(mesh), u, uniform_metric<D>(n, metric_scale)};
}

template <int D>
bool corners_kept(const SimplicialMesh<D>& m)
{
  int corners = 0;
  for (int n = 0; n < m.num_nodes(); ++n)
    corners += segment_count(m.boundary_node_flags[n]) == D ? 1 : 0;
  return corners == (1 << D);
}

Mesh2 quad(const Vec<2>& a, const Vec<2>& b, const Vec<2>& c, const Vec<2>& d)
{
  // triangles (a,b,c) and (a,c,d): diagonal a-c
  Mesh2 m;
  m.box = {Vec<2>(-10, -10), Vec<2>(10, 10)};
  m.nodes = {a, b, c, d};
  m.elements = {{0, 1, 2}, {0, 2, 3}};
  m.boundary_node_flags.assign(4, 0);
  return m;
}

std::vector<double> tanh_values(const Mesh2& m)
{
  std::vector<double> z(m.num_nodes());
  for (int n = 0; n < m.num_nodes(); ++n)
    z[n] = std::tanh(10 * (m.nodes[n].x() - 1));
  return z;
}

} // namespace

TEST(DecodeSw, TableColumns)
{
  EXPECT_EQ(decode_sw(5), (ActionMask{true, false, true, false}));
  EXPECT_EQ(decode_sw(15), (ActionMask{true, true, true, true}));
  EXPECT_EQ(decode_sw(3), (ActionMask{true, true, false, false}));
  EXPECT_EQ(decode_sw(0), (ActionMask{}));
  EXPECT_EQ(describe(decode_sw(5)), "c,m");
  EXPECT_EQ(describe(decode_sw(0)), "none");
  for (int sw = 0; sw < 16; ++sw)
    EXPECT_EQ(encode_sw(decode_sw(sw)), sw);
  EXPECT_THROW(decode_sw(16), std::invalid_argument);
  EXPECT_THROW(decode_sw(-1), std::invalid_argument);
}

TEST(Options, Validation)
{
  AdaptOptions o;
  EXPECT_NO_THROW(o.check());
  EXPECT_EQ(o.quality_weight<2>(), 0.0);
  EXPECT_EQ(o.quality_weight<3>(), 2.0);
  o.l_low = 2.0;
  EXPECT_THROW(o.check(), ConfigError);
  o = AdaptOptions{};
  o.innerit = 0;
  EXPECT_THROW(o.check(), ConfigError);
  CoarsenOptions c;
  EXPECT_EQ(c.sw, 5);
  EXPECT_EQ(c.crmax, 10);
  c.npb = -1;
  EXPECT_THROW(c.check(), ConfigError);
}

TEST(CombinedQuality, IdentityMetricAndEquilateral)
{
  const std::array<Vec<2>, 3> eq = {Vec<2>(0, 0), Vec<2>(1, 0), Vec<2>(0.5, std::sqrt(3.0) / 2)};
  const std::array<Vec<2>, 3> ri = {Vec<2>(0, 0), Vec<2>(1, 0), Vec<2>(0, 1)};
  for (double p : {0.0, 1.0, 2.0}) {
    EXPECT_NEAR(combined_quality<2>(eq, Mat<2>::Identity(), p), 1.0, 1e-12);
    const double qe = simplex_quality<2>(ri);
    EXPECT_NEAR(combined_quality<2>(ri, Mat<2>::Identity(), p), std::pow(qe, 1 + p), 1e-12);
  }
  // equilateral under diag(4,1): map an equilateral triangle by diag(1/2,1)
  std::array<Vec<2>, 3> an;
  for (int k = 0; k < 3; ++k)
    an[k] = Vec<2>(0.5 * eq[k].x(), eq[k].y());
  Mat<2> M = Mat<2>::Zero();
  M(0, 0) = 4;
  M(1, 1) = 1;
  EXPECT_NEAR(combined_quality<2>(an, M, 0.0), 1.0, 1e-10);
  EXPECT_LT(combined_quality<2>(an, Mat<2>::Identity(), 0.0), 0.9);
  const std::array<Vec<2>, 3> flat = {Vec<2>(0, 0), Vec<2>(1, 0), Vec<2>(2, 0)};
  EXPECT_EQ(combined_quality<2>(flat, M, 2.0), 0.0);
}

TEST(Coarsen, NoShortEdgesNoChange)
{
  const double h = 0.25;
  auto s = make_state(build_rect_mesh(1, 1, 9, 9), 1.0 / (h * h));
  const auto before = s.mesh.elements;
  const auto c = coarsen_pass(s, AdaptOptions{});
  EXPECT_EQ(c.collapses, 0);
  EXPECT_EQ(s.mesh.elements, before);
}

TEST(Coarsen, AllShortEdgesReduceNodes)
{
  const double h = 0.25;
  AdaptOptions o;
  const double scale = std::pow(o.l_low / (2 * h), 2);
  for (int rep = 0; rep < 2; ++rep) {
    auto s = make_state(build_rect_mesh(1, 1, 9, 9), scale);
    const int n0 = s.mesh.num_nodes();
    const auto c = coarsen_pass(s, o);
    EXPECT_GT(c.collapses, 0);
    EXPECT_LT(s.mesh.num_nodes(), n0);
    EXPECT_TRUE(validate(s.mesh).ok());
    EXPECT_TRUE(corners_kept(s.mesh));
    EXPECT_EQ(s.u.size(), s.mesh.nodes.size());
    EXPECT_EQ(s.psi.size(), s.mesh.nodes.size());
    // surviving values unchanged: u was x
    for (int n = 0; n < s.mesh.num_nodes(); ++n)
      EXPECT_DOUBLE_EQ(s.u[n], s.mesh.nodes[n].x());
  }
  auto s3 = make_state(build_box_mesh(1, 1, 1, 5, 5, 5), std::pow(o.l_low / (2 * 0.5), 2));
  const int n3 = s3.mesh.num_nodes();
  coarsen_pass(s3, o);
  EXPECT_LT(s3.mesh.num_nodes(), n3);
  EXPECT_TRUE(validate(s3.mesh).ok());
  EXPECT_TRUE(corners_kept(s3.mesh));
}

TEST(Refine, ShortEdgesNoChange)
{
  const double h = 0.25;
  auto s = make_state(build_rect_mesh(1, 1, 9, 9), 1.0 / (4 * h * h));
  const auto c = refine_pass(s, AdaptOptions{});
  EXPECT_EQ(c.splits, 0);
  EXPECT_EQ(s.mesh.num_nodes(), 81);
}

TEST(Refine, AllLongEdgesSplit)
{
  AdaptOptions o;
  const double h = 2.0;
  auto s = make_state(build_rect_mesh(1, 1, 2, 2), std::pow(2 * o.l_up / h, 2));
  const auto edges0 = mesh_edges(s.mesh);
  // one longest edge per element per pass; a few passes reach every edge
  for (int k = 0; k < 3; ++k)
    refine_pass(s, o);
  EXPECT_GT(s.mesh.num_nodes(), 4);
  EXPECT_TRUE(validate(s.mesh).ok());
  // every original edge midpoint is now a node
  for (auto [a, b] : edges0) {
    const Vec<2> mid = 0.5 * (s.mesh.nodes[a] + s.mesh.nodes[b]);
    bool found = false;
    for (const auto& p : s.mesh.nodes)
      found = found || (p - mid).norm() < 1e-12;
    EXPECT_TRUE(found);
  }
  for (int n = 0; n < s.mesh.num_nodes(); ++n) {
    EXPECT_DOUBLE_EQ(s.u[n], s.mesh.nodes[n].x());  // endpoint average of x
    const auto& p = s.mesh.nodes[n];
    const bool on_box = std::abs(std::abs(p.x()) - 1) < 1e-12 || std::abs(std::abs(p.y()) - 1) < 1e-12;
    EXPECT_EQ(on_box, s.mesh.on_boundary(n));
  }
}

TEST(Refine, SingleInteriorEdgeSplitsBothNeighbours)
{
  const double h = 2.0;
  auto s = make_state(build_rect_mesh(1, 1, 2, 2), std::pow(1.2 / h, 2));
  const auto c = refine_pass(s, AdaptOptions{});
  EXPECT_EQ(c.splits, 1);
  EXPECT_EQ(s.mesh.num_nodes(), 5);
  EXPECT_EQ(s.mesh.num_elements(), 4);
  EXPECT_TRUE(validate(s.mesh).ok());
  EXPECT_NEAR(s.mesh.nodes[4].norm(), 0.0, 1e-15);
  EXPECT_FALSE(s.mesh.on_boundary(4));
}

TEST(Refine, ThreeDimensional)
{
  AdaptOptions o;
  auto s = make_state(build_box_mesh(1, 1, 1, 3, 3, 3), std::pow(2 * o.l_up, 2));
  const int n0 = s.mesh.num_nodes();
  refine_pass(s, o);
  EXPECT_GT(s.mesh.num_nodes(), n0);
  EXPECT_TRUE(validate(s.mesh).ok());
  double vol = 0;
  for (int e = 0; e < s.mesh.num_elements(); ++e)
    vol += s.mesh.volume(e);
  EXPECT_NEAR(vol, 8.0, 1e-12);
}

TEST(Move, UniformMeshIsFixedPoint)
{
  auto s = make_state(build_rect_mesh(1, 1, 9, 9), 16.0);
  const auto before = s.mesh.nodes;
  move_pass(s, AdaptOptions{});
  for (int n = 0; n < s.mesh.num_nodes(); ++n)
    EXPECT_LT((s.mesh.nodes[n] - before[n]).norm(), 1e-10);
}

TEST(Move, PerturbedNodeReturns)
{
  auto mesh = build_rect_mesh(1, 1, 9, 9);
  int target = -1;
  for (int n = 0; n < mesh.num_nodes(); ++n)
    if ((mesh.nodes[n] - Vec<2>(0, 0)).norm() < 1e-12)
      target = n;
  ASSERT_GE(target, 0);
  const Vec<2> grid = mesh.nodes[target];
  mesh.nodes[target] += Vec<2>(0.06, -0.04);
  auto s = make_state(mesh, 16.0);
  const double d0 = (s.mesh.nodes[target] - grid).norm();
  move_pass(s, AdaptOptions{});
  EXPECT_LT((s.mesh.nodes[target] - grid).norm(), d0);
  EXPECT_TRUE(validate(s.mesh).ok());
  // u = x re-interpolated at the new position (x is affine, so exact)
  EXPECT_NEAR(s.u[target], s.mesh.nodes[target].x(), 1e-12);
}

TEST(Move, BoundaryNodesStayOnTheirFace)
{
  std::mt19937 rng(4);
  auto mesh = build_rect_mesh(1, 1, 9, 9);
  testutil::jitter_interior(mesh, 0.25, 0.3, rng);
  MetricField<2> psi;
  for (const auto& p : mesh.nodes) {
    Mat<2> m = Mat<2>::Identity();
    m(0, 0) = 16 + 200 * std::exp(-10 * p.squaredNorm());
    psi.tensors.push_back(m);
  }
  AdaptState<2> s{mesh, std::vector<double>(mesh.num_nodes(), 0.0), psi};
  for (int k = 0; k < 5; ++k)
    move_pass(s, AdaptOptions{});
  EXPECT_TRUE(validate(s.mesh).ok());
  for (int n = 0; n < s.mesh.num_nodes(); ++n)
    if (mesh.on_boundary(n))
      EXPECT_EQ(s.mesh.boundary_node_flags[n], mesh.boundary_node_flags[n]);
}

TEST(Swap, UniformMeshUnchanged)
{
  auto s = make_state(build_rect_mesh(1, 1, 9, 9), 16.0);
  const auto before = s.mesh.elements;
  const auto c = swap_pass(s, AdaptOptions{});
  EXPECT_EQ(c.swaps, 0);
  EXPECT_EQ(s.mesh.elements, before);
}

TEST(Swap, LongDiagonalFlipped)
{
  // rhombus with the long diagonal a-c
  const auto m = quad(Vec<2>(-2, 0), Vec<2>(0, -0.6), Vec<2>(2, 0), Vec<2>(0, 0.6));
  AdaptState<2> s{m, {0, 0, 0, 0}, uniform_metric<2>(4, 1.0)};
  const auto c = detail::flip_edges_2d(s, 0.0);
  EXPECT_EQ(c, 1);
  for (const auto& e : s.mesh.elements) {
    const bool has_b = std::find(e.begin(), e.end(), 1) != e.end();
    const bool has_d = std::find(e.begin(), e.end(), 3) != e.end();
    EXPECT_TRUE(has_b && has_d);
  }
  for (int e = 0; e < 2; ++e)
    EXPECT_GT(s.mesh.volume(e), 0.0);
}

TEST(Swap, NonConvexPairRejected)
{
  // c is a reflex corner of a,b,c,d so the b-d diagonal leaves the quad
  const auto m = quad(Vec<2>(-2, 0), Vec<2>(0, -3), Vec<2>(2, 0), Vec<2>(3, 0.5));
  AdaptState<2> s{m, {0, 0, 0, 0}, uniform_metric<2>(4, 1.0)};
  // the a-c diagonal pair is already the only valid triangulation
  EXPECT_EQ(detail::flip_edges_2d(s, 0.0), 0);
  EXPECT_EQ(s.mesh.elements, m.elements);
}

TEST(Swap, ThreeDimensionalKeepsValidity)
{
  std::mt19937 rng(12);
  auto mesh = build_box_mesh(1, 1, 1, 5, 5, 5);
  testutil::jitter_interior(mesh, 0.5, 0.3, rng);
  auto s = make_state(mesh, 4.0);
  double vol0 = 0;
  for (int e = 0; e < s.mesh.num_elements(); ++e)
    vol0 += s.mesh.volume(e);
  swap_pass(s, AdaptOptions{});
  EXPECT_TRUE(validate(s.mesh).ok());
  double vol = 0;
  for (int e = 0; e < s.mesh.num_elements(); ++e)
    vol += s.mesh.volume(e);
  EXPECT_NEAR(vol, vol0, 1e-12);
}

TEST(Tradapt, SwZeroIsIdentity)
{
  const auto m = build_rect_mesh(2, 2, 11, 11);
  AdaptOptions o;
  o.sw = 0;
  const auto r = tradapt<2>(m, tanh_values(m), o);
  EXPECT_EQ(r.mesh.elements, m.elements);
  EXPECT_EQ(r.mesh.nodes, m.nodes);
  EXPECT_EQ(r.u, tanh_values(m));
}

TEST(Tradapt, FullAdaptationChangesMeshAndReportsActivity)
{
  const auto m = build_rect_mesh(2, 2, 15, 15);
  AdaptOptions o;
  const auto r = tradapt<2>(m, tanh_values(m), o);
  EXPECT_NE(r.mesh.num_nodes(), m.num_nodes());
  EXPECT_GT(r.stats.counts.splits, 0);
  EXPECT_GT(r.stats.counts.collapses, 0);
  EXPECT_GT(r.stats.counts.moves, 0);
  EXPECT_LE(r.stats.iterations, o.innerit);
  EXPECT_EQ(r.stats.np_history.size(), static_cast<std::size_t>(r.stats.iterations + 1));
  EXPECT_TRUE(validate(r.mesh).ok());
  const std::string line = r.stats.to_log_line();
  EXPECT_NE(line.find("np_before=225"), std::string::npos);
  EXPECT_NE(line.find("lmax_trajectory="), std::string::npos);
}

TEST(Tradapt, CoarseningOnlyNeverGrows)
{
  auto m = build_rect_mesh(2, 2, 31, 31);
  CoarsenOptions o;
  o.eta_policy = EtaPolicy::constant(0.05);
  int np = m.num_nodes();
  for (int k = 0; k < 4; ++k) {
    auto r = tradapt<2>(m, tanh_values(m), o);
    EXPECT_LE(r.mesh.num_nodes(), np);
    np = r.mesh.num_nodes();
    m = std::move(r.mesh);
  }
  EXPECT_LT(np, 31 * 31);
}

TEST(Tradapt, SecondRunChangesLittle)
{
  const auto m = build_rect_mesh(2, 2, 21, 21);
  const FieldSource<2> src = [](const Mesh2& mm) { return tanh_values(mm); };
  AdaptOptions o;
  o.innerit = 10;
  const auto a = tradapt<2>(m, tanh_values(m), o, src);
  const auto b = tradapt<2>(a.mesh, a.u, o, src);
  EXPECT_LT(std::abs(b.mesh.num_nodes() - a.mesh.num_nodes()), 0.15 * a.mesh.num_nodes());
}

TEST(Tradapt, LengthMismatchThrows)
{
  const auto m = build_rect_mesh(1, 1, 3, 3);
  std::vector<double> u(3, 0.0);
  EXPECT_THROW(tradapt<2>(m, u, AdaptOptions{}), std::invalid_argument);
}

TEST(TwoStep, ZeroBudgetIsPlainTradapt)
{
  const auto m = build_rect_mesh(2, 2, 15, 15);
  AdaptOptions o;
  CoarsenOptions c(o);
  c.npb = 0;
  const auto a = two_step_adapt<2>(m, tanh_values(m), o, c);
  const auto b = tradapt<2>(m, tanh_values(m), o);
  EXPECT_EQ(a.mesh.elements, b.mesh.elements);
  EXPECT_EQ(a.mesh.nodes, b.mesh.nodes);
  EXPECT_EQ(a.stats.coarsening_calls, 0);
}

TEST(TwoStep, HugeBudgetSkipsCoarsening)
{
  const auto m = build_rect_mesh(2, 2, 15, 15);
  AdaptOptions o;
  CoarsenOptions c(o);
  c.npb = 100000;
  AdaptStats first;
  const auto a = two_step_adapt<2>(m, tanh_values(m), o, c, {}, &first);
  EXPECT_EQ(first.coarsening_calls, 0);
  EXPECT_EQ(first.np_after, m.num_nodes());
  const auto b = tradapt<2>(m, tanh_values(m), o);
  EXPECT_EQ(a.mesh.num_nodes(), b.mesh.num_nodes());
}

TEST(TwoStep, CoarsensToBudget)
{
  const auto m = build_rect_mesh(2 * std::numbers::pi, std::numbers::pi, 111, 56);
  std::vector<double> u(m.num_nodes());
  for (int n = 0; n < m.num_nodes(); ++n)
    u[n] = std::exp(-m.nodes[n].squaredNorm());
  AdaptOptions o;
  CoarsenOptions c(o);
  c.npb = 3000;
  AdaptStats first;
  two_step_adapt<2>(m, u, o, c, {}, &first);
  EXPECT_GE(m.num_nodes(), 6000);
  EXPECT_TRUE(first.np_after <= 3000 || first.coarsening_calls == 10);
  EXPECT_LE(first.np_after, 3300);
}

TEST(Tradapt, ThreeDimensionalFullCycle)
{
  const auto m = build_box_mesh(1, 1, 1, 7, 7, 7);
  std::vector<double> u(m.num_nodes());
  for (int n = 0; n < m.num_nodes(); ++n)
    u[n] = std::exp(-4 * (m.nodes[n] - Vec<3>(0.3, 0, -0.2)).squaredNorm());
  AdaptOptions o;
  o.eta_policy = EtaPolicy::constant(2e-2);
  const auto r = tradapt<3>(m, u, o);
  EXPECT_TRUE(validate(r.mesh).ok());
  EXPECT_NE(r.mesh.num_nodes(), m.num_nodes());
  EXPECT_TRUE(corners_kept(r.mesh));
}
