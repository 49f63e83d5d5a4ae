#include "anisocont/driver.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace ac = anisocont;

namespace {

void apply_thread_cap()
{
  if (const char* env = std::getenv("ANISOCONT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0)
      Eigen::setNbThreads(n);
  }
}

int cmd_run(const std::string& cfg_path)
{
  const ac::RunConfig cfg = ac::load_run_config(cfg_path);
  const auto outputs = ac::outputs_from_config(cfg, &std::cout);
  const auto sum = ac::run_config(cfg, outputs);
  std::cout << "accepted steps: " << sum.accepted_steps << "\n";
  std::cout << "bifurcation points: " << sum.bifurcations.size() << "\n";
  for (const auto& bp : sum.bifurcations)
    std::cout << "  " << cfg.problem.active_param << " = " << ac::detail::fmt_g17(bp.param)
              << (bp.approximate ? " (approximate)" : "") << "\n";
  std::cout << "adaptations: " << sum.adapt_events.size() << ", max np: " << sum.max_np << "\n";
  std::cout << "stop: " << sum.stop_reason << "\n";
  for (const auto& f : sum.files)
    if (f.ends_with(".csv") || f.ends_with(".svg"))
      std::cout << "wrote " << f << "\n";
  if (!sum.completed) {
    std::cerr << "error: " << sum.stop_reason << "\n";
    return 2;
  }
  return 0;
}

template <int D>
int adapt_mesh(const ac::SimplicialMesh<D>& mesh, const std::vector<double>& u, const ac::AdaptOnceOptions& o,
               const std::string& out_prefix)
{
  const auto r = ac::adapt_once<D>(mesh, u, o);
  ac::write_mesh_file(out_prefix + ".mesh", r.mesh);
  {
    std::ofstream os(out_prefix + ".field");
    ac::write_field(os, r.u);
  }
  {
    std::ofstream os(out_prefix + "_adapt.log");
    os << r.stats.to_log_line() << "\n";
  }
  std::cout << "np " << r.stats.np_before << " -> " << r.stats.np_after << "\n";
  return 0;
}

int cmd_adapt(const std::string& mesh_path, const std::string& field_path, const ac::AdaptOnceOptions& o,
              std::string out_prefix)
{
  auto any = ac::read_mesh_file(mesh_path);
  std::ifstream fs(field_path);
  if (!fs)
    throw std::runtime_error("cannot open field file '" + field_path + "'");
  const auto u = ac::read_field(fs);
  if (out_prefix.empty())
    out_prefix = std::filesystem::path(mesh_path).replace_extension().string() + "_adapted";
  return std::visit([&](const auto& m) {
    constexpr int D = std::decay_t<decltype(m)>::dim;
    return adapt_mesh<D>(m, u, o, out_prefix);
  }, any);
}

int cmd_validate(const std::string& mesh_path)
{
  const auto any = ac::read_mesh_file(mesh_path);
  return std::visit([](const auto& m) {
    const auto rep = ac::validate(m);
    std::cout << "nodes " << m.num_nodes() << " elements " << m.num_elements() << "\n"
              << "inverted " << rep.inverted << " nonconforming " << rep.nonconforming << " orphan " << rep.orphan
              << " boundary " << rep.boundary << " bad_index " << rep.bad_index << "\n";
    std::cout << (rep.ok() ? "valid" : "INVALID") << "\n";
    return rep.ok() ? 0 : 1;
  }, any);
}

} // namespace

int main(int argc, char** argv)
{
  apply_thread_cap();
  CLI::App app{"Anisotropic mesh adaptation and continuation of steady Allen-Cahn problems"};
  app.require_subcommand(1);

  std::string cfg_path;
  auto* run = app.add_subcommand("run", "Run a continuation described by a config file");
  run->add_option("config", cfg_path, "Config file")->required();

  std::string mesh_path, field_path, out_prefix;
  double eta = 1e-3, llow = 1.0 / std::sqrt(2.0), lup = std::sqrt(2.0);
  int sw = 15, innerit = 2, npb = 0, crmax = 10;
  bool eta_linear = false;
  auto* adapt = app.add_subcommand("adapt", "Adapt a mesh to a nodal field once");
  adapt->add_option("mesh", mesh_path, "Mesh file")->required();
  adapt->add_option("field", field_path, "Field file")->required();
  adapt->add_option("--sw", sw, "Action mask 0..15 (1 move, 2 refine, 4 coarsen, 8 swap)")->check(CLI::Range(0, 15));
  adapt->add_option("--eta", eta, "Mesh density parameter (larger is coarser)");
  adapt->add_flag("--eta-linear", eta_linear, "Interpret --eta as a prefactor of the node count");
  adapt->add_option("--llow", llow, "Lower metric edge length threshold");
  adapt->add_option("--lup", lup, "Upper metric edge length threshold");
  adapt->add_option("--innerit", innerit, "Inner iterations")->check(CLI::PositiveNumber);
  adapt->add_option("--npb", npb, "Node budget of the coarsening stage (0 disables)");
  adapt->add_option("--crmax", crmax, "Maximum number of coarsening calls");
  adapt->add_option("-o,--output", out_prefix, "Output prefix (default: <mesh>_adapted)");

  std::string csv_path, svg_path;
  auto* plot = app.add_subcommand("plot", "Plot a branch CSV as SVG");
  plot->add_option("csv", csv_path, "Branch CSV")->required();
  plot->add_option("svg", svg_path, "Output SVG")->required();

  auto* val = app.add_subcommand("validate", "Check a mesh file for defects");
  val->add_option("mesh", mesh_path, "Mesh file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run)
      return cmd_run(cfg_path);
    if (*adapt) {
      ac::AdaptOnceOptions o;
      o.trop.eta_policy = eta_linear ? ac::EtaPolicy::linear_in_np(eta) : ac::EtaPolicy::constant(eta);
      o.trop.l_low = llow;
      o.trop.l_up = lup;
      o.trop.sw = sw;
      o.trop.innerit = innerit;
      o.trop.check();
      o.trcop = ac::CoarsenOptions(o.trop);
      o.trcop.npb = npb;
      o.trcop.crmax = crmax;
      o.trcop.check();
      return cmd_adapt(mesh_path, field_path, o, out_prefix);
    }
    if (*plot) {
      ac::plot_branch(csv_path, svg_path);
      return 0;
    }
    if (*val)
      return cmd_validate(mesh_path);
  }
  catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
