#pragma once

#include <array>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "ldas/ldas.hpp"
#include "ldas/solvers.hpp"
#include "ldas/system.hpp"

namespace ldas
{

using Rational = boost::rational<long long>;
using RationalVector = std::vector<Rational>;

template <>
struct vector_traits<RationalVector>
{
  using scalar = Rational;
  static Rational dot(const RationalVector &a, const RationalVector &b)
  {
    Rational s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
      s += a[i] * b[i];
    }
    return s;
  }
  static void subtract_scaled(RationalVector &y, const Rational &a, const RationalVector &x)
  {
    for (std::size_t i = 0; i < y.size(); ++i)
    {
      y[i] -= a * x[i];
    }
  }
  static double squared_norm(const RationalVector &a) { return boost::rational_cast<double>(dot(a, a)); }
  static std::size_t size(const RationalVector &a) { return a.size(); }
};

}  // namespace ldas

namespace ldas::analytical
{

//
// Two-DOF spring example: three physical loads and three adjoint loads, of which only
// two are linearly independent. Reconstruction coefficients depend on the loads only,
// so they are checked against closed-form values for any SPD K.
//

struct LoadCase
{
  std::string label;
  std::array<Rational, 2> load;
  int physical_index;  // index of the physical load this adjoint belongs to; -1 for physical loads
  bool adjoint;
};

inline std::vector<LoadCase> load_cases()
{
  using R = Rational;
  return {
      {"f1", {R(1), R(0)}, 0, false},
      {"f2", {R(1), R(2)}, 1, false},
      {"f3", {R(4), R(4)}, 2, false},
      {"dg1/du2", {R(1, 2), R(1)}, 1, true},
      {"dg2/du1", {R(2), R(1)}, 0, true},
      {"dg2/du3", {R(1), R(3)}, 2, true},
  };
}

// Coefficients over the residual basis (r1, r2) for each load, in load order.
inline std::vector<std::array<Rational, 2>> expected_coefficients()
{
  using R = Rational;
  return {{R(1), R(0)}, {R(1), R(1)}, {R(4), R(2)}, {R(1, 2), R(1, 2)}, {R(2), R(1, 2)}, {R(1), R(3, 2)}};
}

inline Eigen::Matrix2d stiffness()
{
  Eigen::Matrix2d k;
  k << 2.0, -1.0, -1.0, 2.0;
  return k;
}

struct Check
{
  std::string name;
  bool ok;
  std::string expected;
  std::string actual;
};

struct Report
{
  bool exact = false;
  std::size_t loads = 0;
  std::size_t backend_solves = 0;
  std::size_t solves_no_detection = 0;
  std::size_t solves_ldpp_ldap = 0;
  std::vector<std::string> labels;
  std::vector<std::array<double, 2>> coefficients;
  std::vector<StateVector> states;
  std::vector<Check> checks;

  bool passed() const
  {
    for (const auto &c : checks)
    {
      if (!c.ok)
      {
        return false;
      }
    }
    return !checks.empty();
  }
};

namespace detail
{

inline std::string str(const Rational &r)
{
  std::ostringstream os;
  os << r.numerator();
  if (r.denominator() != 1)
  {
    os << '/' << r.denominator();
  }
  return os.str();
}

inline std::string pair_str(const std::array<Rational, 2> &p) { return "(" + str(p[0]) + ", " + str(p[1]) + ")"; }

inline std::string pair_str(const std::array<double, 2> &p)
{
  std::ostringstream os;
  os.precision(17);
  os << '(' << p[0] << ", " << p[1] << ')';
  return os.str();
}

inline Vector to_vector(const std::array<Rational, 2> &a)
{
  return Vector{{boost::rational_cast<double>(a[0]), boost::rational_cast<double>(a[1])}};
}

// Counts solves when dependencies are only detected within a pool of loads of the same
// kind (physical among physical, adjoint among adjoint), plus adjoint loads that are a
// scaled copy of their own physical load.
inline std::size_t count_same_kind_policy(const std::vector<LoadCase> &cases, const PreparedSolver &solver,
                                          const LdasOptions &options)
{
  std::size_t solves = 0;
  OrthoBasis physical(solver.version());
  OrthoBasis adjoint(solver.version());
  std::vector<StateVector> physical_states(cases.size());
  for (const auto &c : cases)
  {
    const Vector f = to_vector(c.load);
    OrthoBasis &pool = c.adjoint ? adjoint : physical;
    GsoResult g = gso<Vector>(f, pool.loads(), options.gso);
    if (is_dependent(g, f, options))
    {
      if (!c.adjoint)
      {
        physical_states[static_cast<std::size_t>(c.physical_index)] = reconstruct(g.coefficients, pool.states(), 2);
      }
      continue;
    }
    StateVector state;
    if (c.adjoint)
    {
      // Parallel to the corresponding physical load: reuse its state.
      const Vector &own = to_vector(cases[static_cast<std::size_t>(c.physical_index)].load);
      const double scale = own.dot(f) / own.squaredNorm();
      if ((f - scale * own).norm() <= options.tolerance * f.norm())
      {
        state = scale * physical_states[static_cast<std::size_t>(c.physical_index)];
      }
    }
    if (state.size() == 0)
    {
      state = solver.solve(f).state;
      ++solves;
    }
    if (!c.adjoint)
    {
      physical_states[static_cast<std::size_t>(c.physical_index)] = state;
    }
    // The residual's state follows from the full state minus its basis part.
    StateVector v = state - reconstruct(g.coefficients, pool.states(), 2);
    pool.append(std::move(g.residual), std::move(v));
  }
  return solves;
}

}  // namespace detail

// Runs the example in floating point (full dependency aware solve against K) or, with
// exact = true, additionally confirms the coefficient table in rational arithmetic.
inline Report run_analytical(bool exact = false, const LdasOptions &options = {})
{
  Report rep;
  rep.exact = exact;
  const auto cases = load_cases();
  const auto expected = expected_coefficients();
  const SymmetricSystem system = SymmetricSystem::from_dense(stiffness());
  const PreparedSolver solver = preprocess(system, SolverOptions{});
  rep.loads = cases.size();

  std::vector<LoadVector> loads;
  for (const auto &c : cases)
  {
    loads.push_back(detail::to_vector(c.load));
    rep.labels.push_back(c.label);
  }

  // Sequential path gives the solve count and states.
  OrthoBasis basis(system.version());
  SolveLedger ledger;
  ledger.record_preprocess(solver.preprocess_seconds());
  const auto seq = ldas_solve_detailed(system, loads, basis, ledger, solver, options);
  rep.backend_solves = ledger.backend_solves;
  rep.states = seq.states;
  rep.checks.push_back({"backend solves", ledger.backend_solves == 2, "2", std::to_string(ledger.backend_solves)});
  rep.checks.push_back({"ledger conservation", ledger.conserved(), "true", ledger.conserved() ? "true" : "false"});

  // The batch plan exposes the reconstruction coefficients.
  const PartitionPlan plan = partition_independent(loads, OrthoBasis(system.version()), options);
  for (std::size_t k = 0; k < cases.size(); ++k)
  {
    std::array<double, 2> c{0.0, 0.0};
    for (std::size_t i = 0; i < plan.plans[k].size() && i < 2; ++i)
    {
      c[i] = plan.plans[k][i];
    }
    rep.coefficients.push_back(c);
    const auto e = expected[k];
    const bool ok = plan.plans[k].size() <= 2 &&
                    std::abs(c[0] - boost::rational_cast<double>(e[0])) <= 1e-12 &&
                    std::abs(c[1] - boost::rational_cast<double>(e[1])) <= 1e-12;
    rep.checks.push_back({"coefficients " + cases[k].label, ok, detail::pair_str(e), detail::pair_str(c)});
  }

  // States obey K u = f.
  for (std::size_t k = 0; k < cases.size(); ++k)
  {
    const double rel = system.relative_residual(seq.states[k], loads[k]);
    rep.checks.push_back({"residual " + cases[k].label, rel <= 1e-12, "<= 1e-12", std::to_string(rel)});
  }

  if (exact)
  {
    std::vector<RationalVector> basis_loads;
    std::size_t independent = 0;
    for (std::size_t k = 0; k < cases.size(); ++k)
    {
      const RationalVector f(cases[k].load.begin(), cases[k].load.end());
      auto g = gso<RationalVector>(f, basis_loads, GsoOptions{false});
      const bool zero = g.residual[0].numerator() == 0 && g.residual[1].numerator() == 0;
      if (!zero)
      {
        ++independent;
        basis_loads.push_back(g.residual);
        g.coefficients.push_back(Rational(1));
      }
      std::array<Rational, 2> c{Rational(0), Rational(0)};
      for (std::size_t i = 0; i < g.coefficients.size() && i < 2; ++i)
      {
        c[i] = g.coefficients[i];
      }
      const bool ok = g.coefficients.size() <= 2 && c == expected[k];
      rep.checks.push_back({"exact coefficients " + cases[k].label, ok, detail::pair_str(expected[k]),
                            detail::pair_str(c)});
    }
    rep.checks.push_back({"exact independent loads", independent == 2, "2", std::to_string(independent)});
  }

  // Reference counts under partial detection policies.
  std::size_t none = 0;
  for (const auto &f : loads)
  {
    (void)solver.solve(f);
    ++none;
  }
  rep.solves_no_detection = none;
  rep.solves_ldpp_ldap = detail::count_same_kind_policy(cases, solver, options);
  rep.checks.push_back({"solves without detection", none == 6, "6", std::to_string(none)});
  rep.checks.push_back({"solves with LDPP + LDAP", rep.solves_ldpp_ldap == 3, "3",
                        std::to_string(rep.solves_ldpp_ldap)});
  return rep;
}

inline void print_report(std::ostream &os, const Report &rep)
{
  os << "two-DOF example (" << (rep.exact ? "exact + float" : "float") << "), K = [[2,-1],[-1,2]]\n";
  os << "loads requested: " << rep.loads << ", backend solves: " << rep.backend_solves << "\n";
  os << "load        coefficients over (r1, r2)\n";
  for (std::size_t k = 0; k < rep.labels.size(); ++k)
  {
    os << "  " << rep.labels[k];
    for (std::size_t pad = rep.labels[k].size(); pad < 10; ++pad)
    {
      os << ' ';
    }
    os << detail::pair_str(rep.coefficients[k]) << '\n';
  }
  os << "solves: no detection " << rep.solves_no_detection << ", LDPP+LDAP " << rep.solves_ldpp_ldap
     << ", dependency aware " << rep.backend_solves << '\n';
  for (const auto &c : rep.checks)
  {
    if (!c.ok)
    {
      os << "FAIL " << c.name << ": expected " << c.expected << ", got " << c.actual << '\n';
    }
  }
  os << (rep.passed() ? "all checks passed" : "checks FAILED") << '\n';
}

}  // namespace ldas::analytical
