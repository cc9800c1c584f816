// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ldas/analytical.hpp"
#include "ldas/bench.hpp"
#include "ldas/optimizer.hpp"
#include "support.hpp"

using namespace ldas;
using responses::SolveMode;

namespace
{

struct Outcome
{
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string &what)
  {
    if (!cond)
    {
      if (!ok)
      {
        detail << "; ";
      }
      ok = false;
      detail << what;
    }
  }
};

using Criterion = std::function<void(Outcome &)>;

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double row_relative(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b, Eigen::Index r)
{
  const double scale = std::max(b.row(r).cwiseAbs().maxCoeff(), 1e-300);
  return (a.row(r) - b.row(r)).cwiseAbs().maxCoeff() / scale;
}

Vector random_design(std::mt19937 &rng, int n, double lo, double hi)
{
  std::uniform_real_distribution<double> u(lo, hi);
  Vector x(n);
  for (auto &v : x)
  {
    v = u(rng);
  }
  return x;
}

void ac1(Outcome &o)
{
  for (bool exact : {false, true})
  {
    const auto rep = analytical::run_analytical(exact);
    const std::string tag = exact ? "exact: " : "float: ";
    for (const auto &c : rep.checks)
    {
      o.require(c.ok, tag + c.name + " expected " + c.expected + " got " + c.actual);
    }
    o.require(rep.passed(), tag + "report failed");
    o.require(rep.backend_solves == 2, tag + "solve count");
    o.require(rep.solves_no_detection == 6 && rep.solves_ldpp_ldap == 3, tag + "partial policy counts");
  }
}

void ac2(Outcome &o)
{
  const responses::ProblemDefinition problem;
  const std::vector<std::pair<SolveMode, std::size_t>> expected{
      {SolveMode::naive, 40}, {SolveMode::ldap, 34}, {SolveMode::signaware, 20}, {SolveMode::ldas, 8}};
  for (int nel : {4, 40})
  {
    const auto mesh = fem2d::Mesh::mechanism(nel, nel);
    const fem2d::DensityFilter filter(nel, nel, problem.filter_radius);
    const Vector x = Vector::Constant(mesh.element_count(), problem.volume_fraction);
    for (const auto &[mode, count] : expected)
    {
      const auto ev = responses::evaluate_iteration(problem, mesh, filter, x, mode);
      o.require(ev.ledger.backend_solves == count && ev.ledger.conserved(),
                std::to_string(nel) + "x" + std::to_string(nel) + " " + std::string(to_string(mode)) + ": " +
                    std::to_string(ev.ledger.backend_solves) + " solves");
    }
  }
}

void ac3(Outcome &o)
{
  const responses::ProblemDefinition problem;
  const auto mesh = fem2d::Mesh::mechanism(20, 20);
  const fem2d::DensityFilter filter(20, 20, problem.filter_radius);
  std::mt19937 rng(3);
  double worst_value = 0.0, worst_grad = 0.0;
  for (const Vector &x : {Vector(Vector::Constant(mesh.element_count(), problem.volume_fraction)),
                          random_design(rng, mesh.element_count(), 0.1, 0.9)})
  {
    const auto a = responses::evaluate_iteration(problem, mesh, filter, x, SolveMode::naive);
    const auto b = responses::evaluate_iteration(problem, mesh, filter, x, SolveMode::ldas);
    for (std::size_t r = 0; r < a.values.size(); ++r)
    {
      worst_value = std::max(worst_value, std::abs(a.values[r] - b.values[r]) / std::max(1.0, std::abs(a.values[r])));
      worst_grad = std::max(worst_grad, row_relative(b.gradients, a.gradients, static_cast<Eigen::Index>(r)));
    }
  }
  o.require(worst_value <= 1e-8, "value difference " + std::to_string(worst_value));
  o.require(worst_grad <= 1e-8, "gradient difference " + std::to_string(worst_grad));

  optimizer::RunOptions opts;
  opts.max_iters = 10;
  opts.tol_change = 0.0;
  opts.mode = SolveMode::naive;
  const auto naive = optimizer::run(problem, mesh, opts);
  opts.mode = SolveMode::ldas;
  const auto fast = optimizer::run(problem, mesh, opts);
  double worst_design = 0.0;
  o.require(naive.designs.size() == 11 && fast.designs.size() == 11, "trajectory length");
  for (std::size_t i = 0; i < std::min(naive.designs.size(), fast.designs.size()); ++i)
  {
    worst_design = std::max(worst_design, (naive.designs[i] - fast.designs[i]).cwiseAbs().maxCoeff());
  }
  o.require(worst_design <= 1e-6, "trajectory difference " + std::to_string(worst_design));
  o.detail << "value " << worst_value << ", gradient " << worst_grad << ", trajectory " << worst_design;
}

void ac4(Outcome &o)
{
  std::mt19937 rng(4);
  double worst = 0.0;
  int wrong_counts = 0;
  for (int trial = 0; trial < 100; ++trial)
  {
    const int n = std::uniform_int_distribution<int>(12, 200)(rng);
    const int k = std::uniform_int_distribution<int>(1, 12)(rng);
    const int count = k + std::uniform_int_distribution<int>(0, 20)(rng);
    const Eigen::MatrixXd a = testing_support::random_spd(rng, n);
    const testing_support::DenseCholesky oracle(a);
    const auto system = SymmetricSystem::from_dense(a);
    const auto solver = preprocess(system);
    const auto loads = testing_support::rank_deficient_loads(rng, n, k, count);
    OrthoBasis basis(system.version());
    SolveLedger ledger;
    const auto states = ldas_solve(system, loads, basis, ledger, solver);
    if (ledger.backend_solves != static_cast<std::size_t>(k) || !ledger.conserved())
    {
      ++wrong_counts;
    }
    for (std::size_t i = 0; i < loads.size(); ++i)
    {
      worst = std::max(worst, testing_support::relative_error(states[i], oracle.solve(loads[i])));
    }
  }
  o.require(wrong_counts == 0, std::to_string(wrong_counts) + " trials with the wrong solve count");
  o.require(worst <= 1e-8, "state error " + std::to_string(worst));
  if (o.ok)
  {
    o.detail << "worst state error " << worst;
  }
}

void ac5(Outcome &o)
{
  const responses::ProblemDefinition problem;
  const auto mesh = fem2d::Mesh::mechanism(6, 6);
  const fem2d::DensityFilter filter(6, 6, problem.filter_radius);
  const int n = mesh.element_count();
  std::mt19937 rng(5);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial)
  {
    const Vector x = random_design(rng, n, 0.1, 0.9);
    const auto ev = responses::evaluate_iteration(problem, mesh, filter, x, SolveMode::ldas);
    Eigen::MatrixXd fd(ev.gradients.rows(), n);
    for (int e = 0; e < n; ++e)
    {
      Vector xp = x, xm = x;
      xp[e] += h;
      xm[e] -= h;
      const auto vp = responses::evaluate_iteration(problem, mesh, filter, xp, SolveMode::ldas).values;
      const auto vm = responses::evaluate_iteration(problem, mesh, filter, xm, SolveMode::ldas).values;
      for (std::size_t r = 0; r < vp.size(); ++r)
      {
        fd(static_cast<Eigen::Index>(r), e) = (vp[r] - vm[r]) / (2.0 * h);
      }
    }
    for (Eigen::Index r = 0; r < fd.rows(); ++r)
    {
      worst = std::max(worst, row_relative(ev.gradients, fd, r));
    }
  }
  o.require(worst <= 1e-4, "gradient error " + std::to_string(worst));
  if (o.ok)
  {
    o.detail << "worst relative error " << worst;
  }
}

const bench::BenchRow &row(const std::vector<bench::BenchRow> &rows, SolveMode mode)
{
  return *std::find_if(rows.begin(), rows.end(), [&](const auto &r) { return r.mode == mode; });
}

void ac6(Outcome &o)
{
  // More repeats for the fast direct backend; the naive iterative run dominates wall time.
  for (const auto &[backend, repeats] : {std::pair{BackendKind::iterative, 3}, std::pair{BackendKind::direct, 7}})
  {
    bench::BenchConfig c;
    c.meshes = {{160, 160}};
    c.backends = {backend};
    c.repeats = {repeats};
    const auto rows = bench::run_bench(c);
    const double ldap = row(rows, SolveMode::ldap).t_hat;
    const auto &fast = row(rows, SolveMode::ldas);
    const std::string name(to_string(backend));
    o.detail << (o.detail.tellp() > 0 ? ", " : "") << name << " n=" << fast.n << " ldas " << fast.t_hat << " ldap "
             << ldap;
    o.require(fast.t_hat < ldap, name + ": ldas not faster than ldap");
    if (backend == BackendKind::iterative)
    {
      o.require(fast.t_hat <= 0.35, name + ": ldas above 0.35");
      o.require(ldap < 1.0, name + ": ldap not below naive");
    }
    else
    {
      const double share = fast.prep_s / row(rows, SolveMode::naive).total_s;
      o.detail << " prep share " << share;
      o.require(fast.t_hat >= share, name + ": ldas below the preprocessing share");
    }
  }
}

double max_normalized_inner_product(const OrthoBasis &basis)
{
  double worst = 0.0;
  const auto &v = basis.loads();
  for (std::size_t i = 0; i < v.size(); ++i)
  {
    for (std::size_t j = i + 1; j < v.size(); ++j)
    {
      worst = std::max(worst, std::abs(v[i].dot(v[j])) / (v[i].norm() * v[j].norm()));
    }
  }
  return worst;
}

void ac7(Outcome &o)
{
  std::mt19937 rng(7);
  double ortho = 0.0, residual = 0.0;
  for (int trial = 0; trial < 50; ++trial)
  {
    const int n = std::uniform_int_distribution<int>(5, 80)(rng);
    const int k = std::uniform_int_distribution<int>(1, std::min(n, 12))(rng);
    const auto system = SymmetricSystem::from_dense(testing_support::random_spd(rng, n));
    const auto solver = preprocess(system);
    auto loads = testing_support::rank_deficient_loads(rng, n, k, k + 6);
    loads.push_back(Vector::Zero(n));

    OrthoBasis basis(system.version());
    SolveLedger ledger;
    const auto states = ldas_solve(system, loads, basis, ledger, solver);
    o.require(ledger.conserved(), "ledger not conserved");
    o.require(states.back().norm() == 0.0, "zero load gave a nonzero state");
    ortho = std::max(ortho, max_normalized_inner_product(basis));

    // Reversed order: different basis, same states up to the residual bound.
    std::vector<Vector> reversed(loads.rbegin(), loads.rend());
    OrthoBasis b2(system.version());
    SolveLedger l2;
    const auto s2 = ldas_solve(system, reversed, b2, l2, solver);
    o.require(l2.backend_solves == ledger.backend_solves, "order changed the solve count");
    for (std::size_t i = 0; i < loads.size(); ++i)
    {
      residual = std::max(residual, system.relative_residual(states[i], loads[i]));
      residual = std::max(residual, system.relative_residual(s2[loads.size() - 1 - i], loads[i]));
    }
  }
  {
    const auto system = SymmetricSystem::from_dense(testing_support::random_spd(rng, 10));
    const auto solver = preprocess(system);
    OrthoBasis basis(system.version());
    SolveLedger ledger;
    (void)ldas_solve(system, std::vector<Vector>(3, Vector::Zero(10)), basis, ledger, solver);
    o.require(ledger.backend_solves == 0 && basis.empty(), "zero loads reached the backend");
  }
  double rows = 0.0;
  for (int nx : {1, 7, 20})
  {
    for (double radius : {1.0, 2.0, 3.7})
    {
      const fem2d::DensityFilter f(nx, 13, radius);
      const Vector sums = f.matrix() * Vector::Ones(nx * 13);
      rows = std::max(rows, (sums.array() - 1.0).abs().maxCoeff());
    }
  }
  o.require(ortho <= 1e-10, "orthogonality " + std::to_string(ortho));
  o.require(residual <= 1e-8, "residual " + std::to_string(residual));
  o.require(rows <= 1e-14, "filter row sum error " + std::to_string(rows));
  if (o.ok)
  {
    o.detail << "orthogonality " << ortho << ", residual " << residual << ", filter rows " << rows;
  }
}

}  // namespace

int main()
{
  struct Entry
  {
    const char *name;
    double budget_s;
    Criterion run;
  };
  const std::vector<Entry> criteria{
      {"AC1 analytical example", 1.0, ac1},      {"AC2 solve counts", 10.0, ac2},
      {"AC3 naive/ldas equivalence", 1e9, ac3},  {"AC4 oracle equivalence", 30.0, ac4},
      {"AC5 gradient verification", 60.0, ac5},  {"AC6 run-time trend", 600.0, ac6},
      {"AC7 invariant suite", 1e9, ac7},
  };
  int failures = 0;
  for (const auto &c : criteria)
  {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try
    {
      c.run(o);
    }
    catch (const std::exception &e)
    {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double t = seconds_since(t0);
    o.require(t < c.budget_s, "took " + std::to_string(t) + " s");
    failures += o.ok ? 0 : 1;
    std::cout << (o.ok ? "PASS " : "FAIL ") << c.name << " (" << t << " s) " << o.detail.str() << std::endl;
  }
  return failures;
}
