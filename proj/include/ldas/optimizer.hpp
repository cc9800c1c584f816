#pragma once

#include <chrono>
#include <functional>
#include <limits>
#include <ostream>
#include <vector>

#include "ldas/fem2d.hpp"
#include "ldas/mma.hpp"
#include "ldas/responses.hpp"

namespace ldas::optimizer
{

using responses::SolveMode;

struct IterationRecord
{
  int iteration = 0;
  double objective = 0.0;
  double max_violation = 0.0;  // max(0, g_i) over the normalized constraints
  double max_change = 0.0;
  double kkt_residual = 0.0;
  bool fallback = false;
  SolveLedger ledger;
  double wall_seconds = 0.0;
  std::vector<double> values;
};

struct RunOptions
{
  SolveMode mode = SolveMode::ldas;
  int max_iters = 60;
  double tol_change = 1e-2;
  responses::EvaluationOptions evaluation{};
  mma::Settings mma{};
  // Called after each iteration with the record and the updated design.
  std::function<void(const IterationRecord &, const Vector &)> on_iteration;
};

struct RunResult
{
  std::vector<IterationRecord> records;
  std::vector<Vector> designs;  // design after each update; designs[0] is the start
  SolveLedger total;
  Vector design;
};

// filter -> assemble -> fresh basis -> states and sensitivities -> MMA update, until the
// largest design change drops below tol_change or max_iters is reached. The solve mode
// only changes how states are obtained, never the designs produced.
inline RunResult run(const responses::ProblemDefinition &problem, const fem2d::Mesh &mesh,
                     const RunOptions &options)
{
  if (options.max_iters < 1)
  {
    throw contract_violation("optimizer needs at least one iteration");
  }
  const fem2d::DensityFilter filter(mesh.nelx(), mesh.nely(), problem.filter_radius);
  const int n = mesh.element_count();
  const auto specs = responses::build_responses(problem);
  const int m = static_cast<int>(specs.size()) - 1;

  mma::Optimizer mma(Vector::Constant(n, problem.volume_fraction), Vector::Zero(n), Vector::Ones(n), m,
                     options.mma);
  RunResult out;
  out.designs.push_back(mma.design());
  for (int it = 1; it <= options.max_iters; ++it)
  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto eval = responses::evaluate_iteration(problem, mesh, filter, mma.design(), options.mode,
                                                    options.evaluation);
    const Eigen::Map<const Vector> all(eval.values.data(), static_cast<Eigen::Index>(eval.values.size()));
    const Vector constraints = all.tail(m);
    const auto step = mma.update(eval.gradients.row(0).transpose(), constraints, eval.gradients.bottomRows(m));

    IterationRecord rec;
    rec.iteration = it;
    rec.objective = eval.values.front();
    rec.max_violation = std::max(0.0, constraints.maxCoeff());
    rec.max_change = step.max_change;
    rec.kkt_residual = step.kkt_residual;
    rec.fallback = step.fallback;
    rec.ledger = eval.ledger;
    rec.values = eval.values;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.total += rec.ledger;
    out.designs.push_back(step.design);
    out.records.push_back(std::move(rec));
    if (options.on_iteration)
    {
      options.on_iteration(out.records.back(), step.design);
    }
    if (step.max_change < options.tol_change)
    {
      break;
    }
  }
  out.design = mma.design();
  return out;
}

inline void write_records_header(std::ostream &os)
{
  os << "iteration,objective,max_violation,max_change,loads,solves,reconstructions,prep_s,solve_s,wall_s\n";
}

inline void write_record(std::ostream &os, const IterationRecord &r)
{
  os << r.iteration << ',' << r.objective << ',' << r.max_violation << ',' << r.max_change << ','
     << r.ledger.loads_requested << ',' << r.ledger.backend_solves << ',' << r.ledger.reconstructions << ','
     << r.ledger.preprocess_seconds << ',' << r.ledger.solve_seconds << ',' << r.wall_seconds << '\n';
}

}  // namespace ldas::optimizer
