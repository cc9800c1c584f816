#include <future>
#include <iostream>
#include <random>
#include <vector>

#include "doctest.h"

#include "ldas/fem2d.hpp"
#include "ldas/ldas.hpp"
#include "ldas/solvers.hpp"
#include "support.hpp"

using namespace ldas;

namespace
{

SolverOptions cg()
{
  SolverOptions o;
  o.kind = BackendKind::iterative;
  return o;
}

SymmetricSystem mechanism_system(int nel)
{
  const auto mesh = fem2d::Mesh::mechanism(nel, nel);
  const fem2d::DensityFilter filter(nel, nel, 2.0);
  const Vector x = filter.apply(Vector::Constant(mesh.element_count(), 0.3));
  return fem2d::assemble(mesh, x, fem2d::Material{});
}

}  // namespace

TEST_CASE("SymmetricSystem validates its input")
{
  CHECK_THROWS_AS(SymmetricSystem::from_dense(Eigen::MatrixXd::Zero(2, 3)), contract_violation);
  Eigen::Matrix2d a;
  a << 0, 1, 1, 2;
  CHECK_THROWS_AS(SymmetricSystem::from_dense(a), contract_violation);
  a << 1, std::nan(""), std::nan(""), 2;
  CHECK_THROWS_AS(SymmetricSystem::from_dense(a), contract_violation);

  const auto k = SymmetricSystem::from_dense((Eigen::Matrix2d() << 2, -1, -1, 2).finished());
  CHECK(k.dimension() == 2);
  CHECK(k.apply(Vector{{1.0, 1.0}}).isApprox(Vector{{1.0, 1.0}}));
  CHECK(k.to_dense() == (Eigen::Matrix2d() << 2, -1, -1, 2).finished());
  CHECK(k.version() != SymmetricSystem::from_dense(k.to_dense()).version());
}

TEST_CASE("direct: 2x2 factor is reusable")
{
  const auto k = SymmetricSystem::from_dense((Eigen::Matrix2d() << 2, -1, -1, 2).finished());
  const auto s = preprocess(k);
  CHECK(s.kind() == BackendKind::direct);
  CHECK(s.solve(Vector{{1.0, 0.0}}).state.isApprox(Vector{{2.0 / 3.0, 1.0 / 3.0}}, 1e-14));
  CHECK(s.solve(Vector{{0.0, 1.0}}).state.isApprox(Vector{{1.0 / 3.0, 2.0 / 3.0}}, 1e-14));
  CHECK(s.solve(Vector{{1.0, 1.0}}).state.isApprox(Vector{{1.0, 1.0}}, 1e-14));
}

TEST_CASE("identity and diagonal systems")
{
  const auto eye = SymmetricSystem::from_dense(Eigen::MatrixXd::Identity(2, 2));
  const auto diag = SymmetricSystem::from_dense((Eigen::Matrix2d() << 2, 0, 0, 4).finished());
  for (const auto &opts : {SolverOptions{}, cg()})
  {
    CHECK(preprocess(eye, opts).solve(Vector{{3.0, 4.0}}).state.isApprox(Vector{{3.0, 4.0}}, 1e-14));
    CHECK(preprocess(diag, opts).solve(Vector{{2.0, 4.0}}).state.isApprox(Vector{{1.0, 1.0}}, 1e-14));
  }
  // The system is a temporary; the prepared solver must not depend on it.
  const auto s = preprocess(SymmetricSystem::from_dense(Eigen::MatrixXd::Identity(50, 50)), cg());
  CHECK(s.preconditioner_shift() == 0.0);
  std::mt19937 rng(1);
  CHECK(s.solve(testing_support::random_vector(rng, 50)).iterations <= 1);
}

TEST_CASE("random SPD 100x100 against the dense oracle")
{
  std::mt19937 rng(21);
  const auto a = testing_support::random_spd(rng, 100);
  const auto k = SymmetricSystem::from_dense(a);
  const testing_support::DenseCholesky oracle(a);
  SolverOptions natural;
  natural.ordering = DirectOrdering::natural;
  for (const auto &opts : {SolverOptions{}, natural, cg()})
  {
    const auto s = preprocess(k, opts);
    for (int i = 0; i < 3; ++i)
    {
      const Vector b = testing_support::random_vector(rng, 100);
      CHECK(testing_support::relative_error(s.solve(b).state, oracle.solve(b)) <= 1e-7);
      if (opts.kind == BackendKind::direct)
      {
        CHECK(testing_support::relative_error(s.solve(b).state, oracle.solve(b)) <= 1e-8);
      }
    }
  }
}

TEST_CASE("backends agree on an assembled stiffness")
{
  const auto k = mechanism_system(30);
  const auto direct = preprocess(k);
  const auto iterative = preprocess(k, cg());
  std::mt19937 rng(4);
  for (int i = 0; i < 3; ++i)
  {
    const Vector b = testing_support::random_vector(rng, k.dimension());
    const Vector ud = direct.solve(b).state;
    const auto ui = iterative.solve(b);
    CHECK(ui.relative_residual <= 1e-8);
    const double diff = (ud - ui.state).lpNorm<Eigen::Infinity>() / ud.lpNorm<Eigen::Infinity>();
    // CG stops on the residual; the state error carries the condition number on top.
    CHECK(diff <= 1e-4);
    CHECK(k.relative_residual(ud, b) <= 1e-8);
  }
}

TEST_CASE("backends agree to 1e-7 on random SPD systems")
{
  std::mt19937 rng(8);
  for (int n : {10, 60, 200})
  {
    const auto k = SymmetricSystem::from_dense(testing_support::random_spd(rng, n));
    const Vector b = testing_support::random_vector(rng, n);
    const Vector ud = preprocess(k).solve(b).state;
    const Vector ui = preprocess(k, cg()).solve(b).state;
    CHECK((ud - ui).lpNorm<Eigen::Infinity>() / ud.lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("direct solves are deterministic")
{
  const auto k = mechanism_system(12);
  const auto s1 = preprocess(k);
  const auto s2 = preprocess(k);
  std::mt19937 rng(9);
  const Vector b = testing_support::random_vector(rng, k.dimension());
  const Vector u1 = s1.solve(b).state;
  CHECK(u1 == s1.solve(b).state);
  CHECK(u1 == s2.solve(b).state);
}

TEST_CASE("concurrent solves on one prepared solver")
{
  const auto k = mechanism_system(16);
  std::mt19937 rng(10);
  std::vector<Vector> rhs;
  for (int i = 0; i < 6; ++i)
  {
    rhs.push_back(testing_support::random_vector(rng, k.dimension()));
  }
  for (const auto &opts : {SolverOptions{}, cg()})
  {
    const auto s = preprocess(k, opts);
    std::vector<std::future<SolveOutcome>> jobs;
    for (const auto &b : rhs)
    {
      jobs.push_back(std::async(std::launch::async, [&s, &b] { return s.solve(b); }));
    }
    for (std::size_t i = 0; i < rhs.size(); ++i)
    {
      CHECK(jobs[i].get().state == s.solve(rhs[i]).state);
    }
  }
}

TEST_CASE("singular and indefinite systems are reported")
{
  Eigen::Matrix2d a;
  a << 1, 2, 2, 1;
  const auto k = SymmetricSystem::from_dense(a);
  CHECK_THROWS_AS(preprocess(k), singular_system_error);
}

TEST_CASE("incomplete factorization falls back to a shifted diagonal")
{
  // SPD, but zero-fill IC breaks down without a diagonal shift.
  Eigen::MatrixXd a(6, 6);
  a << 2, -0.5, 0.5, 0, 1.5, 0,
       -0.5, 2, 1, 0, 0, -0.5,
       0.5, 1, 2, 0, 1, -0.5,
       0, 0, 0, 2, 0, -1,
       1.5, 0, 1, 0, 2, -1,
       0, -0.5, -0.5, -1, -1, 2;
  REQUIRE(a.llt().info() == Eigen::Success);
  const auto k = SymmetricSystem::from_dense(a);
  const auto s = preprocess(k, cg());
  CHECK(s.preconditioner_shift() > 0.0);
  const Vector b = Vector::Ones(6);
  CHECK(k.relative_residual(s.solve(b).state, b) <= 1e-8);
}

TEST_CASE("mismatched right-hand side length")
{
  const auto s = preprocess(SymmetricSystem::from_dense(Eigen::MatrixXd::Identity(3, 3)));
  CHECK_THROWS_AS(s.solve(Vector::Ones(2)), contract_violation);
}

TEST_CASE("chi: factorization is preprocessing-heavy, CG is solve-heavy")
{
  const auto k = mechanism_system(40);
  const auto direct = estimate_chi(k, SolverOptions{}, 5);
  const auto iterative = estimate_chi(k, cg(), 5);
  MESSAGE("chi(direct) = " << direct.chi << ", chi(cg) = " << iterative.chi);
  CHECK(direct.chi > 1.0);
  CHECK(iterative.chi < 1.0);
  CHECK(direct.chi > iterative.chi);

  const auto single = estimate_chi(k, SolverOptions{}, 1);
  CHECK(single.low_confidence);
  CHECK(single.chi > 0.0);
  CHECK_FALSE(direct.low_confidence);
  CHECK_THROWS_AS(estimate_chi(k, SolverOptions{}, 0), contract_violation);
}

TEST_CASE("one preprocess serves many solves")
{
  const auto k = mechanism_system(8);
  const auto s = preprocess(k);
  OrthoBasis basis(k.version());
  SolveLedger ledger;
  ledger.record_preprocess(s.preprocess_seconds());
  std::mt19937 rng(2);
  std::vector<Vector> loads;
  for (int i = 0; i < 5; ++i)
  {
    loads.push_back(testing_support::random_vector(rng, k.dimension()));
  }
  (void)ldas_solve(k, loads, basis, ledger, s);
  CHECK(ledger.preprocess_count == 1);
  CHECK(ledger.backend_solves == 5);
}
