#pragma once

#include "anisocont/branch_io.hpp"
#include "anisocont/config.hpp"
#include "anisocont/continuation.hpp"
#include "anisocont/mesh_io.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace anisocont {

struct AdaptEvent {
  int step = 0;
  double l2_before = 0.0;
  double l2_after = 0.0;
  int np_before = 0;
  int np_after = 0;
  bool rolled_back = false;
  AdaptStats stats;

  double relative_jump() const { return l2_before > 0.0 ? std::abs(l2_after - l2_before) / l2_before : std::abs(l2_after); }
};

struct RunSummary {
  std::vector<BranchRecord> records;
  std::vector<BifurcationPoint> bifurcations;
  std::vector<AdaptEvent> adapt_events;
  std::vector<BranchRecord> switched_records;
  int accepted_steps = 0;
  int max_np = 0;
  bool completed = false;   // false if continuation stopped on a failure
  std::string stop_reason;
  std::vector<std::string> warnings;
  std::vector<std::string> files;
};

/// Where and how a run writes its outputs. An empty directory disables
/// all file output (used by the test drivers).
struct RunOutputs {
  std::string directory;
  std::string name = "run";
  int snapshot_stride = 0;
  std::ostream* log = nullptr;
};

namespace detail {

class OutputSink {
public:
  explicit OutputSink(const RunOutputs& o) : o_(o)
  {
    if (!o_.directory.empty())
      std::filesystem::create_directories(o_.directory);
  }

  bool enabled() const { return !o_.directory.empty(); }
  std::string path(const std::string& suffix) const
  {
    return (std::filesystem::path(o_.directory) / (o_.name + suffix)).string();
  }
  void info(const std::string& msg) const
  {
    if (o_.log)
      *o_.log << msg << '\n';
  }

  template <int D>
  void snapshot(const ContinuationState<D>& s, const std::string& tag, RunSummary& sum) const
  {
    if (!enabled())
      return;
    const auto u = to_std(s.u);
    const std::string p = path("_pt" + tag + ".vtk");
    write_vtk_file(p, *s.mesh, {{"u", std::span<const double>(u)}});
    sum.files.push_back(p);
  }

  void branch(const std::vector<BranchRecord>& rows, const std::string& suffix, RunSummary& sum) const
  {
    if (!enabled())
      return;
    const std::string csv = path(suffix + ".csv");
    std::ofstream os(csv);
    write_branch_csv(os, rows);
    os.close();
    const std::string svg = path(suffix + ".svg");
    std::ofstream so(svg, std::ios::binary);
    so << branch_svg(rows);
    sum.files.push_back(csv);
    sum.files.push_back(svg);
  }

  void adapt_log(const RunSummary& sum) const
  {
    if (!enabled())
      return;
    std::ofstream os(path("_adapt.log"));
    for (const auto& ev : sum.adapt_events)
      os << "step=" << ev.step << " l2_before=" << fmt_g17(ev.l2_before) << " l2_after=" << fmt_g17(ev.l2_after)
         << " rolled_back=" << (ev.rolled_back ? 1 : 0) << ' ' << ev.stats.to_log_line() << '\n';
  }

private:
  RunOutputs o_;
};

inline bool should_snapshot(int step, int stride) { return stride > 0 && step % stride == 0; }

} // namespace detail

/// Continues from `s` for `nsteps` accepted steps, appending rows to
/// `rows` and bifurcations to `sum`.
template <int D>
void continue_branch(ContinuationState<D>& s, int nsteps, const RunConfig& cfg, std::vector<BranchRecord>& rows,
                     RunSummary& sum, const detail::OutputSink& out, bool detect)
{
  const auto& set = cfg.cont;
  auto index_of = [&](const ContinuationState<D>& st) {
    return stability_index(*st.mesh, st.u, st.prob);
  };
  int n_neg = index_of(s);
  rows.push_back(make_record(s, n_neg));
  sum.max_np = std::max(sum.max_np, s.mesh->num_nodes());
  out.snapshot(s, std::to_string(s.step_index), sum);

  for (int k = 0; k < nsteps; ++k) {
    const ContinuationState<D> prev = s;
    const int n_neg_prev = n_neg;
    const auto step = cont_step(s, set);
    if (!step.accepted) {
      sum.stop_reason = "continuation failed at step " + std::to_string(s.step_index + 1) + ": " + step.message;
      sum.warnings.push_back(sum.stop_reason);
      out.info(sum.stop_reason);
      return;
    }
    ++sum.accepted_steps;
    n_neg = index_of(s);
    if (detect && set.bif_detection && n_neg >= 0 && n_neg_prev >= 0 && n_neg != n_neg_prev) {
      auto bp = localize_bifurcation(prev, n_neg_prev, step.ds_used, s, set);
      ContinuationState<D> at_bp = prev;
      at_bp.u = bp.u;
      at_bp.prob.set_active(bp.param);
      at_bp.step_index = s.step_index;
      auto rec = make_record(at_bp, std::min(n_neg_prev, n_neg), "BP");
      rows.push_back(rec);
      out.info("BP near " + s.prob.active_param + " = " + detail::fmt_g17(bp.param) + (bp.approximate ? " (approximate)" : ""));
      out.snapshot(at_bp, std::to_string(s.step_index) + "_bp", sum);
      sum.bifurcations.push_back(std::move(bp));
    }
    const auto N = s.u.size();
    const bool fold = prev.tangent[N] * s.tangent[N] < 0.0;
    rows.push_back(make_record(s, n_neg, fold ? "FP" : ""));
    sum.max_np = std::max(sum.max_np, s.mesh->num_nodes());
    if (detail::should_snapshot(s.step_index, cfg.output.snapshot_stride))
      out.snapshot(s, std::to_string(s.step_index), sum);

    if (set.amod > 0 && s.step_index % set.amod == 0) {
      AdaptEvent ev;
      ev.step = s.step_index;
      ev.l2_before = rows.back().l2;
      ev.np_before = s.mesh->num_nodes();
      auto res = adapt_in_cont(s, set, cfg.trop, cfg.trcop);
      ev.rolled_back = res.rolled_back;
      ev.stats = res.stats;
      if (res.rolled_back) {
        sum.warnings.push_back("step " + std::to_string(s.step_index) + ": " + res.message);
        out.info("warning: " + res.message);
      }
      n_neg = index_of(s);
      rows.push_back(make_record(s, n_neg, "ADAPT"));
      ev.l2_after = rows.back().l2;
      ev.np_after = s.mesh->num_nodes();
      sum.max_np = std::max(sum.max_np, s.mesh->num_nodes());
      out.info("adapt at step " + std::to_string(ev.step) + ": np " + std::to_string(ev.np_before) + " -> " +
               std::to_string(ev.np_after));
      sum.adapt_events.push_back(std::move(ev));
    }
    const double p = s.param();
    if (p < set.param_min || p > set.param_max) {
      sum.stop_reason = "parameter left [" + detail::fmt_g17(set.param_min) + ", " + detail::fmt_g17(set.param_max) + "]";
      return;
    }
  }
  sum.stop_reason = "step limit reached";
}

/// Initial solve (and optional adaptation), continuation with detection
/// and adaptation, optional branch switching; writes all outputs.
template <int D>
RunSummary run_problem(const RunConfig& cfg, SimplicialMesh<D> mesh, const RunOutputs& outputs)
{
  RunSummary sum;
  detail::OutputSink out(outputs);
  const auto& set = cfg.cont;

  ContinuationState<D> s;
  s.prob = cfg.problem;
  s.mesh = std::make_shared<const SimplicialMesh<D>>(std::move(mesh));
  auto nr = newton_solve(*s.mesh, Vector::Zero(s.mesh->num_nodes()), s.prob, set.newton_tol, std::max(set.newton_max_it, 20));
  if (!nr.converged)
    throw std::runtime_error("initial Newton solve failed: " + nr.message);
  s.u = nr.u;
  if (cfg.initial_adapt) {
    for (int g = 0; g < set.ngen; ++g) {
      auto r = two_step_adapt<D>(*s.mesh, to_std(s.u), cfg.trop, cfg.trcop);
      auto m = std::make_shared<const SimplicialMesh<D>>(std::move(r.mesh));
      auto n2 = newton_solve(*m, to_eigen(r.u), s.prob, set.newton_tol, std::max(set.newton_max_it, 20));
      if (!n2.converged)
        throw std::runtime_error("Newton solve after initial adaptation failed: " + n2.message);
      s.mesh = m;
      s.u = n2.u;
    }
  }
  Vector ref = Vector::Zero(s.u.size() + 1);
  ref[s.u.size()] = cfg.direction;
  auto t = compute_tangent(s, set, ref);
  if (!t)
    throw std::runtime_error("initial tangent computation failed");
  s.tangent = *t;
  s.ds = std::abs(set.ds0);

  continue_branch(s, set.nsteps, cfg, sum.records, sum, out, true);
  sum.completed = sum.stop_reason == "step limit reached" || sum.stop_reason.rfind("parameter left", 0) == 0;

  if (cfg.switch_at > 0) {
    if (static_cast<int>(sum.bifurcations.size()) < cfg.switch_at) {
      sum.warnings.push_back("branch switching requested at BP " + std::to_string(cfg.switch_at) + " but only " +
                             std::to_string(sum.bifurcations.size()) + " found");
    }
    else {
      const auto& bp = sum.bifurcations[cfg.switch_at - 1];
      // the BP lies on the mesh that was current when it was found; the
      // stored vectors match that mesh only without adaptation in between
      if (bp.u.size() == s.u.size()) {
        ProblemDef prob = s.prob;
        prob.set_active(bp.param);
        auto sw = branch_switch<D>(s.mesh, prob, bp, set, set.switch_delta);
        if (!sw) {
          sum.warnings.push_back("branch switching failed");
        }
        else {
          RunSummary sub;
          const int n = cfg.switch_steps > 0 ? cfg.switch_steps : set.nsteps;
          continue_branch(*sw, n, cfg, sum.switched_records, sub, out, false);
          sum.max_np = std::max(sum.max_np, sub.max_np);
        }
      }
      else {
        sum.warnings.push_back("branch switching skipped: mesh changed after the BP");
      }
    }
  }

  out.branch(sum.records, "_branch", sum);
  if (!sum.switched_records.empty())
    out.branch(sum.switched_records, "_switch_branch", sum);
  out.adapt_log(sum);
  return sum;
}

inline RunSummary run_config(const RunConfig& cfg, const RunOutputs& outputs)
{
  const auto& m = cfg.mesh;
  if (m.dim == 2)
    return run_problem<2>(cfg, build_rect_mesh(m.lx, m.ly, m.nx, m.ny), outputs);
  return run_problem<3>(cfg, build_box_mesh(m.lx, m.ly, m.lz, m.nx, m.ny, m.nz), outputs);
}

inline RunOutputs outputs_from_config(const RunConfig& cfg, std::ostream* log)
{
  RunOutputs o;
  o.directory = cfg.output.directory;
  o.name = cfg.output.name;
  o.snapshot_stride = cfg.output.snapshot_stride;
  o.log = log;
  return o;
}

/// Options of a standalone adaptation.
struct AdaptOnceOptions {
  AdaptOptions trop;
  CoarsenOptions trcop;  // used when npb > 0
};

template <int D>
AdaptResult<D> adapt_once(const SimplicialMesh<D>& mesh, const std::vector<double>& u, const AdaptOnceOptions& o)
{
  if (u.size() != mesh.nodes.size())
    throw std::invalid_argument("field has " + std::to_string(u.size()) + " values, mesh has " +
                                std::to_string(mesh.nodes.size()) + " nodes");
  if (o.trcop.npb > 0)
    return two_step_adapt<D>(mesh, u, o.trop, o.trcop);
  return tradapt<D>(mesh, u, o.trop);
}

} // namespace anisocont
