// Command-line entry point: the two-DOF analytical example, the compliant-mechanism
// optimization in any solve mode, and the normalized run-time sweep.

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ldas/analytical.hpp"
#include "ldas/bench.hpp"
#include "ldas/optimizer.hpp"

namespace
{

using namespace ldas;

std::size_t expected_solves(responses::SolveMode mode)
{
  switch (mode)
  {
    case responses::SolveMode::naive: return 40;
    case responses::SolveMode::ldap: return 34;
    case responses::SolveMode::signaware: return 20;
    case responses::SolveMode::ldas: return 8;
  }
  return 0;
}

// Opens `path` for writing, or returns std::cout for "" and "-".
std::ostream &open_out(const std::string &path, std::ofstream &file)
{
  if (path.empty() || path == "-")
  {
    return std::cout;
  }
  file.open(path);
  if (!file)
  {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  return file;
}

int run_mechanism(const std::string &mesh_arg, const std::string &mode_arg, const std::string &backend_arg,
                  int iters, double tol, double change, const std::string &out, const std::string &density_out,
                  const std::string &responses_out)
{
  const auto size = bench::parse_mesh(mesh_arg);
  const auto mesh = fem2d::Mesh::mechanism(size.nelx, size.nely);
  const responses::ProblemDefinition problem;
  optimizer::RunOptions opts;
  opts.mode = responses::parse_mode(mode_arg);
  opts.max_iters = iters;
  opts.tol_change = change;
  opts.evaluation.solver.kind = parse_backend(backend_arg);
  opts.evaluation.phase.ldas.tolerance = tol;

  std::ofstream file;
  std::ostream &os = open_out(out, file);
  optimizer::write_records_header(os);
  std::ofstream resp_file;
  const auto specs = responses::build_responses(problem);
  if (!responses_out.empty())
  {
    resp_file.open(responses_out);
    resp_file << "iteration,response,value\n";
  }
  opts.on_iteration = [&](const optimizer::IterationRecord &r, const Vector &) {
    optimizer::write_record(os, r);
    if (resp_file.is_open())
    {
      resp_file.precision(17);
      for (std::size_t k = 0; k < specs.size(); ++k)
      {
        resp_file << r.iteration << ',' << specs[k].label << ',' << r.values[k] << '\n';
      }
    }
  };
  const auto result = optimizer::run(problem, mesh, opts);

  if (!density_out.empty())
  {
    std::ofstream dens(density_out);
    const fem2d::DensityFilter filter(mesh.nelx(), mesh.nely(), problem.filter_radius);
    fem2d::write_density(dens, mesh.nelx(), mesh.nely(), filter.apply(result.design));
  }

  int status = 0;
  std::cerr << "iteration  loads  backend_solves  reconstructions\n";
  for (const auto &r : result.records)
  {
    std::cerr << "  " << r.iteration << "  " << r.ledger.loads_requested << "  " << r.ledger.backend_solves << "  "
              << r.ledger.reconstructions << '\n';
    if (!r.ledger.conserved() || r.ledger.backend_solves != expected_solves(opts.mode))
    {
      std::cerr << "FAIL: iteration " << r.iteration << " performed " << r.ledger.backend_solves
                << " backend solves, expected " << expected_solves(opts.mode) << '\n';
      status = 1;
    }
  }
  std::cerr << "total: " << result.total.backend_solves << " backend solves for " << result.total.loads_requested
            << " loads over " << result.records.size() << " iterations\n";
  return status;
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Linear dependency aware solving for compound structural optimization"};
  app.require_subcommand(1);

  auto *analytical = app.add_subcommand("analytical", "two-DOF example: solve count and reconstruction table");
  bool exact = false;
  double a_tol = 1e-6;
  analytical->add_flag("--exact", exact, "also confirm the coefficient table in rational arithmetic");
  analytical->add_option("--tol", a_tol, "dependency tolerance (relative)");

  auto *mechanism = app.add_subcommand("mechanism", "optimize the compound compliant mechanism");
  std::string mesh = "40x40";
  std::string mode = "ldas";
  std::string backend = "direct";
  int iters = 60;
  double tol = 1e-6;
  double change = 1e-2;
  std::string out;
  std::string density;
  std::string responses_out;
  mechanism->add_option("--mesh", mesh, "elements, NXxNY")->capture_default_str();
  mechanism->add_option("--mode", mode, "naive | ldap | signaware | ldas")->capture_default_str();
  mechanism->add_option("--backend", backend, "direct | cg")->capture_default_str();
  mechanism->add_option("--iters", iters, "maximum design iterations")->capture_default_str();
  mechanism->add_option("--tol", tol, "dependency tolerance (relative)")->capture_default_str();
  mechanism->add_option("--change", change, "stop when the largest design change is below this")
      ->capture_default_str();
  mechanism->add_option("--out", out, "iteration CSV (default stdout)");
  mechanism->add_option("--density", density, "write the final filtered density grid here");
  mechanism->add_option("--responses", responses_out, "write every response value per iteration here");

  auto *bench_cmd = app.add_subcommand("bench", "normalized run time of one design iteration's solves");
  std::vector<std::string> b_meshes;
  std::vector<std::string> b_modes;
  std::vector<std::string> b_backends;
  std::vector<int> b_repeats;
  std::string b_out;
  double b_tol = 1e-6;
  bench_cmd->add_option("--mesh", b_meshes, "mesh sizes NXxNY (repeatable; default 20x20 40x40 80x80 160x160)");
  bench_cmd->add_option("--mode", b_modes, "modes (repeatable; default all)");
  bench_cmd->add_option("--backend", b_backends, "backends (repeatable; default direct and cg)");
  bench_cmd->add_option("--repeats", b_repeats, "repeats, one value or one per mesh");
  bench_cmd->add_option("--out", b_out, "CSV output (default stdout)");
  bench_cmd->add_option("--tol", b_tol, "dependency tolerance (relative)");

  CLI11_PARSE(app, argc, argv);

  try
  {
    if (*analytical)
    {
      LdasOptions opts;
      opts.tolerance = a_tol;
      const auto report = analytical::run_analytical(exact, opts);
      analytical::print_report(std::cout, report);
      return report.passed() ? 0 : 1;
    }
    if (*mechanism)
    {
      return run_mechanism(mesh, mode, backend, iters, tol, change, out, density, responses_out);
    }
    if (*bench_cmd)
    {
      bench::BenchConfig config;
      if (!b_meshes.empty())
      {
        config.meshes.clear();
        for (const auto &m : b_meshes)
        {
          config.meshes.push_back(bench::parse_mesh(m));
        }
      }
      if (!b_modes.empty())
      {
        config.modes.clear();
        for (const auto &m : b_modes)
        {
          config.modes.push_back(responses::parse_mode(m));
        }
      }
      if (!b_backends.empty())
      {
        config.backends.clear();
        for (const auto &b : b_backends)
        {
          config.backends.push_back(parse_backend(b));
        }
      }
      config.repeats = b_repeats;
      config.ldas.tolerance = b_tol;
      const auto rows = bench::run_bench(config, &std::cerr);
      std::ofstream file;
      bench::write_csv(open_out(b_out, file), rows);
      for (const auto &r : rows)
      {
        if (r.flagged)
        {
          std::cerr << "warning: timing anomaly at n=" << r.n << " mode=" << responses::to_string(r.mode) << '\n';
        }
      }
      return 0;
    }
  }
  catch (const std::exception &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
