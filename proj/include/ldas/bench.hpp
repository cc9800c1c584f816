#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ldas/fem2d.hpp"
#include "ldas/responses.hpp"
#include "ldas/solvers.hpp"

namespace ldas::bench
{

using responses::SolveMode;

struct MeshSize
{
  int nelx;
  int nely;
  int dofs() const { return 2 * (nelx + 1) * (nely + 1); }
};

inline MeshSize parse_mesh(const std::string &s)
{
  const auto x = s.find_first_of("xX");
  try
  {
    if (x == std::string::npos)
    {
      const int n = std::stoi(s);
      return {n, n};
    }
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  }
  catch (const std::logic_error &)
  {
    throw contract_violation("mesh must look like NXxNY, got '" + s + "'");
  }
}

struct BenchConfig
{
  std::vector<MeshSize> meshes{{20, 20}, {40, 40}, {80, 80}, {160, 160}};
  std::vector<BackendKind> backends{BackendKind::direct, BackendKind::iterative};
  std::vector<SolveMode> modes{SolveMode::naive, SolveMode::ldap, SolveMode::signaware, SolveMode::ldas};
  // Repeats per mesh (same length as meshes); empty means 4^(k-1-i): the largest mesh
  // runs once and every halving of the mesh quadruples the repeats.
  std::vector<int> repeats;
  responses::ProblemDefinition problem{};
  SolverOptions solver{};
  LdasOptions ldas{};

  // Sorts meshes ascending by DOF count, fills the repeat schedule, and forces the
  // naive mode in (it is the normalization reference).
  void normalize()
  {
    if (meshes.empty() || backends.empty() || modes.empty())
    {
      throw contract_violation("bench needs at least one mesh, backend and mode");
    }
    if (!repeats.empty() && repeats.size() != meshes.size())
    {
      if (repeats.size() != 1)
      {
        throw contract_violation("give one repeat count, or one per mesh");
      }
      repeats.assign(meshes.size(), repeats.front());
    }
    std::vector<std::pair<MeshSize, int>> zipped;
    for (std::size_t i = 0; i < meshes.size(); ++i)
    {
      zipped.emplace_back(meshes[i], repeats.empty() ? 0 : repeats[i]);
    }
    std::stable_sort(zipped.begin(), zipped.end(),
                     [](const auto &a, const auto &b) { return a.first.dofs() < b.first.dofs(); });
    const bool schedule = repeats.empty();
    meshes.clear();
    repeats.clear();
    for (std::size_t i = 0; i < zipped.size(); ++i)
    {
      meshes.push_back(zipped[i].first);
      int r = zipped[i].second;
      if (schedule)
      {
        r = 1;
        for (std::size_t k = i + 1; k < zipped.size(); ++k)
        {
          r = std::min(r * 4, 1024);
        }
      }
      if (r < 1)
      {
        throw contract_violation("repeats must be at least 1");
      }
      repeats.push_back(r);
    }
    if (std::find(modes.begin(), modes.end(), SolveMode::naive) == modes.end())
    {
      modes.insert(modes.begin(), SolveMode::naive);
    }
  }
};

struct BenchRow
{
  int n = 0;  // free DOFs
  SolveMode mode = SolveMode::naive;
  BackendKind backend = BackendKind::direct;
  std::size_t solves = 0;
  double prep_s = 0.0;   // median preprocessing time
  double solve_s = 0.0;  // median time of everything after preprocessing
  double total_s = 0.0;  // median of preprocess + solves
  double t_hat = 0.0;    // total_s / total_s(naive)
  bool flagged = false;  // non-positive timing seen
};

inline double median(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

// Times the solves of one design iteration (preprocess included) at the uniform start
// design, for every (mesh, backend, mode), and normalizes by the naive mode.
inline std::vector<BenchRow> run_bench(BenchConfig config, std::ostream *progress = nullptr)
{
  config.normalize();
  std::vector<BenchRow> rows;
  for (std::size_t mi = 0; mi < config.meshes.size(); ++mi)
  {
    const MeshSize ms = config.meshes[mi];
    const auto mesh = fem2d::Mesh::mechanism(ms.nelx, ms.nely);
    const fem2d::DensityFilter filter(ms.nelx, ms.nely, config.problem.filter_radius);
    const Vector physical =
        filter.apply(Vector::Constant(mesh.element_count(), config.problem.volume_fraction));
    const SymmetricSystem system = fem2d::assemble(mesh, physical, config.problem.material);
    const auto specs = responses::build_responses(config.problem);
    for (BackendKind backend : config.backends)
    {
      SolverOptions so = config.solver;
      so.kind = backend;
      std::map<SolveMode, std::vector<double>> prep, rest, total;
      std::map<SolveMode, std::size_t> solves;
      std::map<SolveMode, bool> flagged;
      for (int rep = 0; rep < config.repeats[mi]; ++rep)
      {
        // Modes are interleaved so slow drift hits all of them alike.
        for (SolveMode mode : config.modes)
        {
          const auto t0 = std::chrono::steady_clock::now();
          const PreparedSolver solver = preprocess(system, so);
          responses::PhaseOptions po;
          po.ldas = config.ldas;
          const auto phase = responses::solve_states(config.problem, mesh, system, physical, specs, solver, mode, po);
          const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          prep[mode].push_back(solver.preprocess_seconds());
          rest[mode].push_back(t - solver.preprocess_seconds());
          total[mode].push_back(t);
          solves[mode] = phase.ledger.backend_solves;
          if (!(t > 0.0) || !(solver.preprocess_seconds() > 0.0))
          {
            flagged[mode] = true;
          }
        }
      }
      const double reference = median(total[SolveMode::naive]);
      for (SolveMode mode : config.modes)
      {
        BenchRow row;
        row.n = system.dimension();
        row.mode = mode;
        row.backend = backend;
        row.solves = solves[mode];
        row.prep_s = median(prep[mode]);
        row.solve_s = median(rest[mode]);
        row.total_s = median(total[mode]);
        row.t_hat = mode == SolveMode::naive ? 1.0 : row.total_s / reference;
        row.flagged = flagged[mode] || !(reference > 0.0);
        if (progress)
        {
          *progress << "n=" << row.n << " backend=" << to_string(backend) << " mode=" << to_string(mode)
                    << " solves=" << row.solves << " t_hat=" << row.t_hat << (row.flagged ? " [flagged]" : "")
                    << '\n';
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

inline void write_csv_header(std::ostream &os) { os << "n,mode,backend,solves,prep_s,solve_s,t_hat\n"; }

inline void write_csv(std::ostream &os, const std::vector<BenchRow> &rows)
{
  write_csv_header(os);
  for (const auto &r : rows)
  {
    os << r.n << ',' << to_string(r.mode) << ',' << to_string(r.backend) << ',' << r.solves << ',' << r.prep_s
       << ',' << r.solve_s << ',' << r.t_hat << '\n';
  }
}

}  // namespace ldas::bench
