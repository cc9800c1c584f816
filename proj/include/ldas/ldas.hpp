#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <future>
#include <span>
#include <vector>

#include "ldas/errors.hpp"
#include "ldas/solvers.hpp"
#include "ldas/system.hpp"

namespace ldas
{

//
// Linear dependency aware solving. Every load is first orthogonalized against a basis
// of previously solved residual loads. If nothing is left, its state is a linear
// combination of the stored states and no solve is needed; otherwise only the residual
// is solved and the (residual, state) pair enriches the basis.
//

// Arithmetic the orthogonalization needs from a vector type. Specialized for Eigen
// vectors here and for exact rational vectors in analytical.hpp.
template <typename Vec>
struct vector_traits;

template <>
struct vector_traits<Vector>
{
  using scalar = double;
  static double dot(const Vector &a, const Vector &b) { return a.dot(b); }
  static void subtract_scaled(Vector &y, double a, const Vector &x) { y.noalias() -= a * x; }
  static double squared_norm(const Vector &a) { return a.squaredNorm(); }
  static std::size_t size(const Vector &a) { return static_cast<std::size_t>(a.size()); }
};

template <typename Vec>
struct GsoResultT
{
  std::vector<typename vector_traits<Vec>::scalar> coefficients;
  Vec residual;
};

using GsoResult = GsoResultT<Vector>;

struct GsoOptions
{
  bool reorthogonalize = true;
  // Second pass runs when ||r|| < threshold * ||f||.
  double reorthogonalization_threshold = 1e-3;
};

// Modified Gram-Schmidt: each coefficient is taken against the running residual.
template <typename Vec>
GsoResultT<Vec> gso(const Vec &f, std::span<const Vec> basis_loads, const GsoOptions &options = {})
{
  using T = vector_traits<Vec>;
  GsoResultT<Vec> out;
  out.residual = f;
  out.coefficients.reserve(basis_loads.size() + 1);
  for (const Vec &b : basis_loads)
  {
    if (T::size(b) != T::size(f))
    {
      throw contract_violation("load length does not match the basis dimension");
    }
    const auto alpha = T::dot(out.residual, b) / T::dot(b, b);
    T::subtract_scaled(out.residual, alpha, b);
    out.coefficients.push_back(alpha);
  }
  const double t = options.reorthogonalization_threshold;
  if (options.reorthogonalize && !basis_loads.empty() &&
      T::squared_norm(out.residual) < t * t * T::squared_norm(f))
  {
    for (std::size_t i = 0; i < basis_loads.size(); ++i)
    {
      const Vec &b = basis_loads[i];
      const auto correction = T::dot(out.residual, b) / T::dot(b, b);
      T::subtract_scaled(out.residual, correction, b);
      out.coefficients[i] += correction;
    }
  }
  return out;
}

enum class ToleranceMode
{
  relative,  // ||r|| <= tol * max(||f||, floor)
  absolute   // ||r|| <= tol
};

struct LdasOptions
{
  double tolerance = 1e-6;
  ToleranceMode mode = ToleranceMode::relative;
  double floor = 1e-300;
  GsoOptions gso;
  // When positive, every returned state is checked against ||K u - f|| <= v * ||f||.
  double verify_tolerance = 0.0;
};

template <typename Vec>
bool is_dependent(const GsoResultT<Vec> &result, const Vec &f, double tol,
                  ToleranceMode mode = ToleranceMode::relative, double floor = 1e-300)
{
  using T = vector_traits<Vec>;
  const double r2 = T::squared_norm(result.residual);
  if (mode == ToleranceMode::absolute)
  {
    return r2 <= tol * tol;
  }
  const double scale = std::max(std::sqrt(T::squared_norm(f)), floor);
  return r2 <= (tol * scale) * (tol * scale);
}

inline bool is_dependent(const GsoResult &result, const LoadVector &f, const LdasOptions &options)
{
  return is_dependent(result, f, options.tolerance, options.mode, options.floor);
}

// Orthogonal load basis and matching states, valid for one system version.
class OrthoBasis
{
public:
  OrthoBasis() = default;
  explicit OrthoBasis(SystemVersion version) : version_(version) {}

  std::size_t size() const noexcept { return loads_.size(); }
  bool empty() const noexcept { return loads_.empty(); }
  SystemVersion version() const noexcept { return version_; }
  const std::vector<LoadVector> &loads() const noexcept { return loads_; }
  const std::vector<StateVector> &states() const noexcept { return states_; }

  void append(LoadVector load, StateVector state)
  {
    if (load.size() != state.size() || (!loads_.empty() && load.size() != loads_.front().size()))
    {
      throw contract_violation("basis load/state length mismatch");
    }
    if (load.squaredNorm() == 0.0)
    {
      throw contract_violation("zero vector cannot join the basis");
    }
    loads_.push_back(std::move(load));
    states_.push_back(std::move(state));
  }

  void reset(SystemVersion version)
  {
    loads_.clear();
    states_.clear();
    version_ = version;
  }

private:
  std::vector<LoadVector> loads_;
  std::vector<StateVector> states_;
  SystemVersion version_;
};

inline OrthoBasis reset_basis(const OrthoBasis &, SystemVersion new_version)
{
  return OrthoBasis(new_version);
}

struct SolveLedger
{
  std::size_t loads_requested = 0;
  std::size_t backend_solves = 0;
  std::size_t reconstructions = 0;
  std::size_t preprocess_count = 0;
  std::size_t basis_resets = 0;
  double preprocess_seconds = 0.0;
  double solve_seconds = 0.0;

  bool conserved() const noexcept { return loads_requested == backend_solves + reconstructions; }

  void record_preprocess(double seconds)
  {
    ++preprocess_count;
    preprocess_seconds += seconds;
  }

  void record_solve(double seconds)
  {
    ++loads_requested;
    ++backend_solves;
    solve_seconds += seconds;
  }

  void record_reconstruction()
  {
    ++loads_requested;
    ++reconstructions;
  }

  SolveLedger &operator+=(const SolveLedger &o)
  {
    loads_requested += o.loads_requested;
    backend_solves += o.backend_solves;
    reconstructions += o.reconstructions;
    preprocess_count += o.preprocess_count;
    basis_resets += o.basis_resets;
    preprocess_seconds += o.preprocess_seconds;
    solve_seconds += o.solve_seconds;
    return *this;
  }
};

inline void reset_basis(OrthoBasis &basis, SystemVersion new_version, SolveLedger &ledger)
{
  basis.reset(new_version);
  ++ledger.basis_resets;
}

// Anything that can answer single solves for one system version.
template <typename S>
concept StateSolver = requires(const S &s, const LoadVector &rhs) {
  { s.solve(rhs) } -> std::same_as<SolveOutcome>;
  { s.version() } -> std::same_as<SystemVersion>;
};

// u = sum_i coefficients[i] * states[i]
inline StateVector reconstruct(std::span<const double> coefficients,
                               std::span<const StateVector> states, Eigen::Index n)
{
  StateVector u = StateVector::Zero(n);
  for (std::size_t i = 0; i < coefficients.size(); ++i)
  {
    if (coefficients[i] != 0.0)
    {
      u.noalias() += coefficients[i] * states[i];
    }
  }
  return u;
}

struct LdasOutcome
{
  std::vector<StateVector> states;
  std::vector<bool> solved;  // true where the load needed a backend solve
};

namespace detail
{

inline void check_load(const LoadVector &f, int n)
{
  if (f.size() != n)
  {
    throw contract_violation("load length " + std::to_string(f.size()) +
                             " does not match system dimension " + std::to_string(n));
  }
  if (!f.allFinite())
  {
    throw contract_violation("load contains non-finite entries");
  }
}

inline void check_versions(const SymmetricSystem &system, const OrthoBasis &basis,
                           SystemVersion solver_version)
{
  if (basis.version() != system.version())
  {
    throw stale_basis_error("orthogonal basis belongs to a different system version; reset it");
  }
  if (solver_version != system.version())
  {
    throw stale_basis_error("solver was prepared on a different system version");
  }
}

inline void verify(const SymmetricSystem &system, const StateVector &u, const LoadVector &f,
                   const LdasOptions &options)
{
  if (options.verify_tolerance > 0.0)
  {
    const double rel = system.relative_residual(u, f, options.floor);
    if (rel > options.verify_tolerance)
    {
      throw convergence_error("returned state violates the residual bound", rel, 0);
    }
  }
}

}  // namespace detail

// Returns states for `loads`, solving only residuals that are not yet spanned by the basis.
// Not reentrant for the same basis.
template <StateSolver Solver>
LdasOutcome ldas_solve_detailed(const SymmetricSystem &system, std::span<const LoadVector> loads,
                                OrthoBasis &basis, SolveLedger &ledger, const Solver &solver,
                                const LdasOptions &options = {})
{
  detail::check_versions(system, basis, solver.version());
  const int n = system.dimension();
  LdasOutcome out;
  out.states.reserve(loads.size());
  out.solved.reserve(loads.size());
  for (const LoadVector &f : loads)
  {
    detail::check_load(f, n);
    if (f.norm() <= options.floor)
    {
      out.states.push_back(StateVector::Zero(n));
      out.solved.push_back(false);
      ledger.record_reconstruction();
      continue;
    }
    GsoResult g = gso<Vector>(f, basis.loads(), options.gso);
    const bool dependent = is_dependent(g, f, options);
    if (!dependent)
    {
      SolveOutcome v = solver.solve(g.residual);
      ledger.record_solve(v.seconds);
      basis.append(std::move(g.residual), std::move(v.state));
      g.coefficients.push_back(1.0);
    }
    else
    {
      ledger.record_reconstruction();
    }
    out.states.push_back(reconstruct(g.coefficients, basis.states(), n));
    out.solved.push_back(!dependent);
    detail::verify(system, out.states.back(), f, options);
  }
  return out;
}

template <StateSolver Solver>
std::vector<StateVector> ldas_solve(const SymmetricSystem &system, std::span<const LoadVector> loads,
                                    OrthoBasis &basis, SolveLedger &ledger, const Solver &solver,
                                    const LdasOptions &options = {})
{
  return ldas_solve_detailed(system, loads, basis, ledger, solver, options).states;
}

// Batch form for state-independent loads: find all residuals first, solve them (possibly
// concurrently), then reconstruct. plans[k] indexes basis states followed by the new
// residual states; an empty plan marks a zero load.
struct PartitionPlan
{
  SystemVersion version;
  std::size_t basis_size = 0;
  std::vector<LoadVector> residuals;
  std::vector<std::vector<double>> plans;
  std::vector<bool> independent;
};

inline PartitionPlan partition_independent(std::span<const LoadVector> loads, const OrthoBasis &basis,
                                           const LdasOptions &options = {})
{
  PartitionPlan plan;
  plan.version = basis.version();
  plan.basis_size = basis.size();
  std::vector<LoadVector> working(basis.loads().begin(), basis.loads().end());
  const Eigen::Index n = working.empty() ? (loads.empty() ? 0 : loads.front().size())
                                         : working.front().size();
  for (const LoadVector &f : loads)
  {
    detail::check_load(f, static_cast<int>(n));
    if (f.norm() <= options.floor)
    {
      plan.plans.emplace_back();
      plan.independent.push_back(false);
      continue;
    }
    GsoResult g = gso<Vector>(f, working, options.gso);
    const bool dependent = is_dependent(g, f, options);
    if (!dependent)
    {
      g.coefficients.push_back(1.0);
      working.push_back(g.residual);
      plan.residuals.push_back(std::move(g.residual));
    }
    plan.plans.push_back(std::move(g.coefficients));
    plan.independent.push_back(!dependent);
  }
  return plan;
}

// Solves the residuals of a plan, enriches the basis, and rebuilds every state.
template <StateSolver Solver>
std::vector<StateVector> complete_partition(const SymmetricSystem &system, const PartitionPlan &plan,
                                            OrthoBasis &basis, SolveLedger &ledger,
                                            const Solver &solver, bool concurrent = false)
{
  detail::check_versions(system, basis, solver.version());
  if (plan.version != basis.version() || plan.basis_size != basis.size())
  {
    throw stale_basis_error("partition plan was made against a different basis state");
  }
  std::vector<SolveOutcome> solved(plan.residuals.size());
  if (concurrent)
  {
    std::vector<std::future<SolveOutcome>> jobs;
    jobs.reserve(plan.residuals.size());
    for (const LoadVector &r : plan.residuals)
    {
      jobs.push_back(std::async(std::launch::async, [&solver, &r] { return solver.solve(r); }));
    }
    for (std::size_t i = 0; i < jobs.size(); ++i)
    {
      solved[i] = jobs[i].get();
    }
  }
  else
  {
    for (std::size_t i = 0; i < plan.residuals.size(); ++i)
    {
      solved[i] = solver.solve(plan.residuals[i]);
    }
  }
  for (std::size_t i = 0; i < plan.residuals.size(); ++i)
  {
    basis.append(plan.residuals[i], std::move(solved[i].state));
    ledger.solve_seconds += solved[i].seconds;
  }
  const int n = system.dimension();
  std::vector<StateVector> states;
  states.reserve(plan.plans.size());
  for (std::size_t k = 0; k < plan.plans.size(); ++k)
  {
    ++ledger.loads_requested;
    if (plan.independent[k])
    {
      ++ledger.backend_solves;
    }
    else
    {
      ++ledger.reconstructions;
    }
    states.push_back(reconstruct(plan.plans[k], basis.states(), n));
  }
  return states;
}

}  // namespace ldas
