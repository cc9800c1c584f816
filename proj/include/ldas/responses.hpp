#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ldas/errors.hpp"
#include "ldas/fem2d.hpp"
#include "ldas/ldas.hpp"
#include "ldas/solvers.hpp"
#include "ldas/system.hpp"

namespace ldas::responses
{

// How the states of one design iteration are obtained.
//   naive     - one backend solve per physical and per nonzero adjoint load
//   ldap      - adjoint loads that are a scaled copy of their own physical load reuse its state
//   signaware - additionally, lower-bound adjoints reuse the negated upper-bound adjoint
//   ldas      - every load goes through the dependency aware solver
enum class SolveMode
{
  naive,
  ldap,
  signaware,
  ldas
};

inline std::string_view to_string(SolveMode m)
{
  switch (m)
  {
    case SolveMode::naive: return "naive";
    case SolveMode::ldap: return "ldap";
    case SolveMode::signaware: return "signaware";
    case SolveMode::ldas: return "ldas";
  }
  return "?";
}

inline SolveMode parse_mode(std::string_view s)
{
  for (SolveMode m : {SolveMode::naive, SolveMode::ldap, SolveMode::signaware, SolveMode::ldas})
  {
    if (s == to_string(m))
    {
      return m;
    }
  }
  throw contract_violation("unknown solve mode '" + std::string(s) + "'");
}

struct Transmission
{
  int output;  // DOF label i
  int input;   // DOF label j
  double ratio;
};

struct Crosstalk
{
  int input;                  // loaded DOF label j
  std::vector<int> measured;  // DOF labels i
};

// Compound compliant-mechanism problem on the eight labeled DOFs.
struct ProblemDefinition
{
  std::vector<int> objective_dofs{1, 3, 5, 7};
  std::vector<int> input_dofs{6, 8};
  std::vector<Crosstalk> crosstalk{{6, {1, 2, 3, 5, 7, 8}}, {8, {1, 3, 4, 5, 6, 7}}};
  std::vector<Transmission> transmission{{4, 6, 2.0}, {2, 8, 2.0}};
  double u_in = 1.0;
  double u_ct = 1e-3;
  double u_t = 1e-3;
  double volume_fraction = 0.3;
  double filter_radius = 2.0;
  fem2d::Material material{};

  // Physical load order: objective DOFs, then input DOFs.
  std::vector<int> loaded_dofs() const
  {
    std::vector<int> d = objective_dofs;
    d.insert(d.end(), input_dofs.begin(), input_dofs.end());
    return d;
  }

  std::size_t state_of(int dof) const
  {
    const auto d = loaded_dofs();
    for (std::size_t k = 0; k < d.size(); ++k)
    {
      if (d[k] == dof)
      {
        return k;
      }
    }
    throw contract_violation("DOF " + std::to_string(dof) + " carries no physical load");
  }
};

// Unit (or negated unit) load at one labeled DOF, on the free DOFs of a mechanism mesh.
struct UnitLoad
{
  int label;
  double sign = 1.0;

  LoadVector vector(const fem2d::Mesh &mesh) const
  {
    LoadVector v = LoadVector::Zero(mesh.free_count());
    v[mesh.poi_free_dof(label)] = sign;
    return v;
  }
};

inline std::vector<LoadVector> forward_loads(const ProblemDefinition &problem, const fem2d::Mesh &mesh)
{
  std::vector<LoadVector> loads;
  for (int dof : problem.loaded_dofs())
  {
    loads.push_back(UnitLoad{dof}.vector(mesh));
  }
  return loads;
}

inline double strain_energy(const StateVector &u, const SymmetricSystem &system)
{
  return 0.5 * u.dot(system.apply(u));
}

enum class ResponseKind
{
  objective,
  volume,
  input,
  crosstalk_upper,
  crosstalk_lower,
  transmission_upper,
  transmission_lower
};

inline bool is_constraint(ResponseKind k) { return k != ResponseKind::objective; }

// Constraints are stored normalized, value/bound - 1 <= 0.
struct ResponseSpec
{
  std::string label;
  ResponseKind kind;
  int measured = 0;  // DOF label i
  int loaded = 0;    // DOF label j (selects the state)
  double ratio = 0.0;
  // Response whose adjoint loads are exactly the negation of this one's.
  std::optional<std::size_t> negated_twin;
};

inline std::vector<ResponseSpec> build_responses(const ProblemDefinition &p)
{
  std::vector<ResponseSpec> r;
  r.push_back({"objective", ResponseKind::objective, 0, 0, 0.0, std::nullopt});
  r.push_back({"volume", ResponseKind::volume, 0, 0, 0.0, std::nullopt});
  for (int j : p.input_dofs)
  {
    r.push_back({"in(" + std::to_string(j) + "," + std::to_string(j) + ")", ResponseKind::input, j, j, 0.0, std::nullopt});
  }
  for (const auto &ct : p.crosstalk)
  {
    for (int i : ct.measured)
    {
      const std::string base = "ct(" + std::to_string(i) + "," + std::to_string(ct.input) + ")";
      r.push_back({base + "+", ResponseKind::crosstalk_upper, i, ct.input, 0.0, std::nullopt});
      r.push_back({base + "-", ResponseKind::crosstalk_lower, i, ct.input, 0.0, r.size() - 1});
    }
  }
  for (const auto &t : p.transmission)
  {
    const std::string base = "t(" + std::to_string(t.output) + "," + std::to_string(t.input) + ")";
    r.push_back({base + "+", ResponseKind::transmission_upper, t.output, t.input, t.ratio, std::nullopt});
    r.push_back({base + "-", ResponseKind::transmission_lower, t.output, t.input, t.ratio, r.size() - 1});
  }
  return r;
}

// Everything a response needs at one design point.
struct EvaluationContext
{
  const ProblemDefinition &problem;
  const fem2d::Mesh &mesh;
  const SymmetricSystem &system;
  const Vector &physical;                     // filtered densities
  const std::vector<StateVector> &states;     // one per physical load
};

namespace detail
{

inline double displacement(const EvaluationContext &c, int measured, int loaded)
{
  return c.states.at(c.problem.state_of(loaded))[c.mesh.poi_free_dof(measured)];
}

[[noreturn]] inline void unknown_kind()
{
  throw contract_violation("unknown response kind");
}

}  // namespace detail

inline double response_value(const ResponseSpec &r, const EvaluationContext &c)
{
  const auto &p = c.problem;
  switch (r.kind)
  {
    case ResponseKind::objective:
    {
      double sum = 0.0;
      for (int j : p.objective_dofs)
      {
        sum += strain_energy(c.states.at(p.state_of(j)), c.system);
      }
      return sum;
    }
    case ResponseKind::volume:
      return c.physical.sum() / (static_cast<double>(c.physical.size()) * p.volume_fraction) - 1.0;
    case ResponseKind::input:
      return 1.0 - detail::displacement(c, r.loaded, r.loaded) / p.u_in;
    case ResponseKind::crosstalk_upper:
      return detail::displacement(c, r.measured, r.loaded) / p.u_ct - 1.0;
    case ResponseKind::crosstalk_lower:
      return -detail::displacement(c, r.measured, r.loaded) / p.u_ct - 1.0;
    case ResponseKind::transmission_upper:
    case ResponseKind::transmission_lower:
    {
      const double dev = r.ratio * detail::displacement(c, r.measured, r.loaded) -
                         detail::displacement(c, r.loaded, r.loaded);
      const double sign = r.kind == ResponseKind::transmission_upper ? 1.0 : -1.0;
      return sign * dev / p.u_t - 1.0;
    }
  }
  detail::unknown_kind();
}

// Partial derivative with respect to the filtered densities at fixed states.
inline Vector explicit_derivative(const ResponseSpec &r, const EvaluationContext &c)
{
  const int n_el = c.mesh.element_count();
  Vector d = Vector::Zero(n_el);
  switch (r.kind)
  {
    case ResponseKind::objective:
      for (int j : c.problem.objective_dofs)
      {
        const StateVector &u = c.states.at(c.problem.state_of(j));
        for (int e = 0; e < n_el; ++e)
        {
          const auto ue = c.mesh.gather(u, e);
          d[e] += 0.5 * fem2d::stiffness_derivative_apply(c.mesh.reference(), c.problem.material,
                                                          c.physical[e], ue, ue);
        }
      }
      return d;
    case ResponseKind::volume:
      d.setConstant(1.0 / (static_cast<double>(n_el) * c.problem.volume_fraction));
      return d;
    case ResponseKind::input:
    case ResponseKind::crosstalk_upper:
    case ResponseKind::crosstalk_lower:
    case ResponseKind::transmission_upper:
    case ResponseKind::transmission_lower:
      return d;
  }
  detail::unknown_kind();
}

struct AdjointTerm
{
  std::size_t state;  // index of the physical state this load belongs to
  LoadVector load;
  // Set when load == ldap_scale * (physical load of `state`).
  std::optional<double> ldap_scale;
};

// dg/du_j for every state the response depends on; structural zeros are omitted.
inline std::vector<AdjointTerm> adjoint_loads(const ResponseSpec &r, const EvaluationContext &c)
{
  const auto &p = c.problem;
  const auto &m = c.mesh;
  std::vector<AdjointTerm> out;
  switch (r.kind)
  {
    case ResponseKind::objective:
      for (int j : p.objective_dofs)
      {
        out.push_back({p.state_of(j), UnitLoad{j}.vector(m), 1.0});
      }
      return out;
    case ResponseKind::volume:
      return out;
    case ResponseKind::input:
      out.push_back({p.state_of(r.loaded), (-1.0 / p.u_in) * UnitLoad{r.loaded}.vector(m), -1.0 / p.u_in});
      return out;
    case ResponseKind::crosstalk_upper:
    case ResponseKind::crosstalk_lower:
    {
      const double s = r.kind == ResponseKind::crosstalk_upper ? 1.0 : -1.0;
      out.push_back({p.state_of(r.loaded), (s / p.u_ct) * UnitLoad{r.measured}.vector(m), std::nullopt});
      return out;
    }
    case ResponseKind::transmission_upper:
    case ResponseKind::transmission_lower:
    {
      const double s = r.kind == ResponseKind::transmission_upper ? 1.0 : -1.0;
      LoadVector l = (s * r.ratio / p.u_t) * UnitLoad{r.measured}.vector(m) -
                     (s / p.u_t) * UnitLoad{r.loaded}.vector(m);
      out.push_back({p.state_of(r.loaded), std::move(l), std::nullopt});
      return out;
    }
  }
  detail::unknown_kind();
}

// All forward and adjoint states of one design iteration plus the solve bookkeeping.
struct StatePhase
{
  std::vector<StateVector> states;
  // adjoints[r][k] pairs with adjoint_loads(responses[r])[k]
  std::vector<std::vector<StateVector>> adjoints;
  std::vector<std::vector<AdjointTerm>> adjoint_terms;
  SolveLedger ledger;
  std::vector<std::string> solved_labels;
};

struct PhaseOptions
{
  LdasOptions ldas{};
  // Forward loads through partition_independent with concurrent residual solves.
  bool concurrent_forward = false;
};

// Finds every state needed for values and sensitivities, using `solver` (prepared on
// `system`) according to `mode`.
inline StatePhase solve_states(const ProblemDefinition &problem, const fem2d::Mesh &mesh,
                               const SymmetricSystem &system, const Vector &physical,
                               const std::vector<ResponseSpec> &responses, const PreparedSolver &solver,
                               SolveMode mode, const PhaseOptions &options = {})
{
  if (solver.version() != system.version())
  {
    throw stale_basis_error("solver was prepared on a different system version");
  }
  StatePhase out;
  out.ledger.record_preprocess(solver.preprocess_seconds());
  OrthoBasis basis;
  if (mode == SolveMode::ldas)
  {
    reset_basis(basis, system.version(), out.ledger);
  }

  auto direct_solve = [&](const LoadVector &f, const std::string &label) {
    SolveOutcome v = solver.solve(f);
    out.ledger.record_solve(v.seconds);
    out.solved_labels.push_back(label);
    return std::move(v.state);
  };
  auto through_ldas = [&](const LoadVector &f, const std::string &label) {
    auto res = ldas_solve_detailed(system, std::span<const LoadVector>(&f, 1), basis, out.ledger, solver,
                                   options.ldas);
    if (res.solved.front())
    {
      out.solved_labels.push_back(label);
    }
    return std::move(res.states.front());
  };

  const auto loads = forward_loads(problem, mesh);
  const auto dofs = problem.loaded_dofs();
  if (mode == SolveMode::ldas && options.concurrent_forward)
  {
    const PartitionPlan plan = partition_independent(loads, basis, options.ldas);
    out.states = complete_partition(system, plan, basis, out.ledger, solver, true);
    for (std::size_t k = 0; k < loads.size(); ++k)
    {
      if (plan.independent[k])
      {
        out.solved_labels.push_back("f" + std::to_string(dofs[k]));
      }
    }
  }
  else
  {
    for (std::size_t k = 0; k < loads.size(); ++k)
    {
      const std::string label = "f" + std::to_string(dofs[k]);
      out.states.push_back(mode == SolveMode::ldas ? through_ldas(loads[k], label)
                                                   : direct_solve(loads[k], label));
    }
  }

  const EvaluationContext ctx{problem, mesh, system, physical, out.states};
  out.adjoints.resize(responses.size());
  out.adjoint_terms.resize(responses.size());
  for (std::size_t r = 0; r < responses.size(); ++r)
  {
    out.adjoint_terms[r] = adjoint_loads(responses[r], ctx);
    const auto &terms = out.adjoint_terms[r];
    for (std::size_t k = 0; k < terms.size(); ++k)
    {
      const AdjointTerm &t = terms[k];
      const std::string label =
          responses[r].label + "/du" + std::to_string(dofs.at(t.state));
      const auto twin = responses[r].negated_twin;
      StateVector lambda;
      if (mode == SolveMode::ldas)
      {
        lambda = through_ldas(t.load, label);
      }
      else if (mode != SolveMode::naive && t.ldap_scale)
      {
        lambda = *t.ldap_scale * out.states[t.state];
        out.ledger.record_reconstruction();
      }
      else if (mode == SolveMode::signaware && twin && k < out.adjoints[*twin].size())
      {
        lambda = -out.adjoints[*twin][k];
        out.ledger.record_reconstruction();
      }
      else
      {
        lambda = direct_solve(t.load, label);
      }
      out.adjoints[r].push_back(std::move(lambda));
    }
  }
  return out;
}

// d(response)/d(design) for every response, rows in response order.
inline Eigen::MatrixXd sensitivities(const std::vector<ResponseSpec> &responses, const EvaluationContext &ctx,
                                     const StatePhase &phase, const fem2d::DensityFilter &filter)
{
  const int n_el = ctx.mesh.element_count();
  Eigen::MatrixXd grad(static_cast<Eigen::Index>(responses.size()), n_el);
  // Element slices of the physical states are shared by all responses.
  std::vector<std::vector<fem2d::ElementVector>> u_el(ctx.states.size());
  for (std::size_t j = 0; j < ctx.states.size(); ++j)
  {
    u_el[j].reserve(static_cast<std::size_t>(n_el));
    for (int e = 0; e < n_el; ++e)
    {
      u_el[j].push_back(ctx.mesh.gather(ctx.states[j], e));
    }
  }
  for (std::size_t r = 0; r < responses.size(); ++r)
  {
    Vector d = explicit_derivative(responses[r], ctx);
    const auto &terms = phase.adjoint_terms.at(r);
    if (phase.adjoints.at(r).size() != terms.size())
    {
      throw contract_violation("missing adjoint state for response " + responses[r].label);
    }
    for (std::size_t k = 0; k < terms.size(); ++k)
    {
      const StateVector &lambda = phase.adjoints[r][k];
      const auto &ue = u_el[terms[k].state];
      for (int e = 0; e < n_el; ++e)
      {
        d[e] -= fem2d::stiffness_derivative_apply(ctx.mesh.reference(), ctx.problem.material, ctx.physical[e],
                                                  ue[static_cast<std::size_t>(e)], ctx.mesh.gather(lambda, e));
      }
    }
    grad.row(static_cast<Eigen::Index>(r)) = filter.apply_transpose(d).transpose();
  }
  return grad;
}

struct IterationEvaluation
{
  std::vector<double> values;
  Eigen::MatrixXd gradients;  // responses x design variables
  SolveLedger ledger;
  std::vector<std::string> solved_labels;
  StatePhase phase;
};

struct EvaluationOptions
{
  SolverOptions solver{};
  PhaseOptions phase{};
};

// One full design iteration: filter, assemble, preprocess, states, values, gradients.
inline IterationEvaluation evaluate_iteration(const ProblemDefinition &problem, const fem2d::Mesh &mesh,
                                              const fem2d::DensityFilter &filter, const Vector &design,
                                              SolveMode mode, const EvaluationOptions &options = {})
{
  if (design.size() != mesh.element_count())
  {
    throw contract_violation("design length does not match the element count");
  }
  const Vector physical = filter.apply(design);
  const SymmetricSystem system = fem2d::assemble(mesh, physical, problem.material);
  const PreparedSolver solver = preprocess(system, options.solver);
  const auto responses = build_responses(problem);
  IterationEvaluation out;
  out.phase = solve_states(problem, mesh, system, physical, responses, solver, mode, options.phase);
  const EvaluationContext ctx{problem, mesh, system, physical, out.phase.states};
  out.values.reserve(responses.size());
  for (const auto &r : responses)
  {
    out.values.push_back(response_value(r, ctx));
  }
  out.gradients = sensitivities(responses, ctx, out.phase, filter);
  out.ledger = out.phase.ledger;
  out.solved_labels = out.phase.solved_labels;
  return out;
}

}  // namespace ldas::responses
