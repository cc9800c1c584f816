#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <variant>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include "ldas/errors.hpp"
#include "ldas/system.hpp"

namespace ldas
{

//
// Symmetric positive definite solve backends with an explicit preprocess/solve split.
// The direct backend spends its effort up front in a sparse Cholesky factorization
// (high chi); the iterative backend builds a cheap zero-fill incomplete Cholesky
// preconditioner and spends its effort in conjugate gradient iterations (low chi).
//

enum class BackendKind
{
  direct,
  iterative
};

inline std::string_view to_string(BackendKind k)
{
  return k == BackendKind::direct ? "direct" : "cg";
}

inline BackendKind parse_backend(std::string_view s)
{
  if (s == "direct" || s == "cholesky")
  {
    return BackendKind::direct;
  }
  if (s == "cg" || s == "iterative")
  {
    return BackendKind::iterative;
  }
  throw contract_violation("unknown backend '" + std::string(s) + "'");
}

enum class DirectOrdering
{
  natural,
  amd
};

struct SolverOptions
{
  BackendKind kind = BackendKind::direct;
  DirectOrdering ordering = DirectOrdering::amd;
  double cg_tolerance = 1e-8;  // relative residual
  int max_iterations = 0;      // 0 means 5n
  int max_shift_retries = 4;
  double first_shift = 1e-3;   // Manteuffel shift after the unshifted attempt fails
};

struct SolveOutcome
{
  StateVector state;
  int iterations = 0;
  double seconds = 0.0;
  double relative_residual = std::numeric_limits<double>::quiet_NaN();
};

namespace detail
{

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename Ordering>
using DirectFactor =
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double, Eigen::ColMajor, int>, Eigen::Lower, Ordering>;

// Zero-fill incomplete Cholesky factor L (lower, row-compressed, same pattern as the
// lower triangle of K) with K + shift*diag(K) ~= L L^T.
struct IncompleteCholesky
{
  SymmetricSystem::Lower factor;
  double shift = 0.0;
  int attempts = 0;

  // Returns false on a non-positive pivot.
  static bool try_factor(const SymmetricSystem::Lower &a, double shift, SymmetricSystem::Lower &l)
  {
    l = a;
    const int n = static_cast<int>(l.rows());
    const int *outer = l.outerIndexPtr();
    const int *inner = l.innerIndexPtr();
    double *val = l.valuePtr();
    std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
    {
      const int row_begin = outer[i];
      const int row_end = outer[i + 1];
      for (int k = row_begin; k < row_end; ++k)
      {
        const int j = inner[k];
        double s = val[k];
        if (j < i)
        {
          // s -= sum_{m<j} L(i,m) L(j,m), merging the two sorted rows.
          int p = row_begin;
          int q = outer[j];
          const int q_end = outer[j + 1];
          while (p < k && q < q_end)
          {
            const int cp = inner[p];
            const int cq = inner[q];
            if (cq >= j)
            {
              break;
            }
            if (cp == cq)
            {
              s -= val[p] * val[q];
              ++p;
              ++q;
            }
            else if (cp < cq)
            {
              ++p;
            }
            else
            {
              ++q;
            }
          }
          val[k] = s / diag[static_cast<std::size_t>(j)];
        }
        else
        {
          s *= (1.0 + shift);
          for (int p = row_begin; p < k; ++p)
          {
            s -= val[p] * val[p];
          }
          if (!(s > 0.0) || !std::isfinite(s))
          {
            return false;
          }
          val[k] = std::sqrt(s);
          diag[static_cast<std::size_t>(i)] = val[k];
        }
      }
    }
    return true;
  }

  // z = (L L^T)^{-1} r
  void apply(const Vector &r, Vector &z) const
  {
    const int n = static_cast<int>(factor.rows());
    const int *outer = factor.outerIndexPtr();
    const int *inner = factor.innerIndexPtr();
    const double *val = factor.valuePtr();
    z = r;
    for (int i = 0; i < n; ++i)
    {
      double s = z[i];
      const int last = outer[i + 1] - 1;  // diagonal is the last entry of each row
      for (int k = outer[i]; k < last; ++k)
      {
        s -= val[k] * z[inner[k]];
      }
      z[i] = s / val[last];
    }
    for (int i = n - 1; i >= 0; --i)
    {
      const int last = outer[i + 1] - 1;
      z[i] /= val[last];
      const double zi = z[i];
      for (int k = outer[i]; k < last; ++k)
      {
        z[inner[k]] -= val[k] * zi;
      }
    }
  }
};

struct DirectPayload
{
  std::variant<DirectFactor<Eigen::AMDOrdering<int>>, DirectFactor<Eigen::NaturalOrdering<int>>>
      factor;
};

struct IterativePayload
{
  // Own copy, so the solver stays valid after the caller's system goes away.
  std::shared_ptr<const SymmetricSystem> system;
  IncompleteCholesky preconditioner;
  double tolerance = 1e-8;
  int max_iterations = 0;
};

}  // namespace detail

// Preprocessing product of one backend for one system version. Immutable after
// construction; solve() keeps all scratch space local, so concurrent calls are safe.
class PreparedSolver
{
public:
  static PreparedSolver prepare(const SymmetricSystem &system, const SolverOptions &options = {})
  {
    PreparedSolver ps;
    ps.kind_ = options.kind;
    ps.version_ = system.version();
    ps.dimension_ = system.dimension();
    const auto t0 = detail::Clock::now();
    if (options.kind == BackendKind::direct)
    {
      auto payload = std::make_shared<detail::DirectPayload>();
      const Eigen::SparseMatrix<double, Eigen::ColMajor, int> lower = system.lower();
      auto factorize = [&](auto &llt) {
        llt.compute(lower);
        if (llt.info() != Eigen::Success)
        {
          throw singular_system_error("Cholesky factorization failed: system is not positive definite");
        }
      };
      if (options.ordering == DirectOrdering::amd)
      {
        payload->factor.emplace<0>();
        factorize(std::get<0>(payload->factor));
      }
      else
      {
        payload->factor.emplace<1>();
        factorize(std::get<1>(payload->factor));
      }
      ps.direct_ = std::move(payload);
    }
    else
    {
      auto payload = std::make_shared<detail::IterativePayload>();
      payload->system = std::make_shared<const SymmetricSystem>(system);
      payload->tolerance = options.cg_tolerance;
      payload->max_iterations =
          options.max_iterations > 0 ? options.max_iterations : 5 * std::max(1, system.dimension());
      double shift = 0.0;
      bool ok = false;
      for (int attempt = 0; attempt <= options.max_shift_retries; ++attempt)
      {
        payload->preconditioner.attempts = attempt + 1;
        if (detail::IncompleteCholesky::try_factor(system.lower(), shift,
                                                   payload->preconditioner.factor))
        {
          payload->preconditioner.shift = shift;
          ok = true;
          break;
        }
        shift = (shift == 0.0) ? options.first_shift : shift * 10.0;
      }
      if (!ok)
      {
        throw singular_system_error("incomplete Cholesky broke down after " +
                                    std::to_string(options.max_shift_retries) + " shift retries");
      }
      ps.iterative_ = std::move(payload);
    }
    ps.preprocess_seconds_ = detail::seconds_since(t0);
    return ps;
  }

  SolveOutcome solve(const LoadVector &rhs) const
  {
    if (rhs.size() != dimension_)
    {
      throw contract_violation("right-hand side length does not match the prepared system");
    }
    const auto t0 = detail::Clock::now();
    SolveOutcome out;
    if (direct_)
    {
      std::visit([&](const auto &llt) { out.state = llt.solve(rhs); }, direct_->factor);
    }
    else
    {
      out = conjugate_gradient(rhs);
    }
    out.seconds = detail::seconds_since(t0);
    return out;
  }

  BackendKind kind() const noexcept { return kind_; }
  SystemVersion version() const noexcept { return version_; }
  int dimension() const noexcept { return dimension_; }
  double preprocess_seconds() const noexcept { return preprocess_seconds_; }

  // Diagonal shift the incomplete factorization needed (0 when unshifted, or direct).
  double preconditioner_shift() const noexcept
  {
    return iterative_ ? iterative_->preconditioner.shift : 0.0;
  }

private:
  PreparedSolver() = default;

  SolveOutcome conjugate_gradient(const LoadVector &b) const
  {
    const auto &p = *iterative_;
    const SymmetricSystem &k = *p.system;
    if (k.version() != version_)
    {
      throw stale_basis_error("iterative backend's system changed after preprocessing");
    }
    SolveOutcome out;
    out.state = Vector::Zero(dimension_);
    const double bnorm = b.norm();
    if (bnorm == 0.0)
    {
      out.relative_residual = 0.0;
      return out;
    }
    Vector r = b;
    Vector z(dimension_);
    p.preconditioner.apply(r, z);
    Vector dir = z;
    double rz = r.dot(z);
    double rel = 1.0;
    int it = 0;
    while (it < p.max_iterations)
    {
      const Vector q = k.apply(dir);
      const double alpha = rz / dir.dot(q);
      out.state.noalias() += alpha * dir;
      r.noalias() -= alpha * q;
      ++it;
      rel = r.norm() / bnorm;
      if (rel <= p.tolerance)
      {
        break;
      }
      p.preconditioner.apply(r, z);
      const double rz_next = r.dot(z);
      dir = z + (rz_next / rz) * dir;
      rz = rz_next;
    }
    out.iterations = it;
    out.relative_residual = rel;
    if (rel > p.tolerance)
    {
      throw convergence_error("conjugate gradient did not converge in " + std::to_string(it) +
                                  " iterations",
                              rel, it);
    }
    return out;
  }

  BackendKind kind_ = BackendKind::direct;
  SystemVersion version_;
  int dimension_ = 0;
  double preprocess_seconds_ = 0.0;
  std::shared_ptr<const detail::DirectPayload> direct_;
  std::shared_ptr<const detail::IterativePayload> iterative_;
};

inline PreparedSolver preprocess(const SymmetricSystem &system, const SolverOptions &options = {})
{
  return PreparedSolver::prepare(system, options);
}

struct ChiEstimate
{
  double preprocess_seconds = 0.0;
  double mean_solve_seconds = 0.0;
  double chi = 0.0;
  int probes = 0;
  bool low_confidence = false;
};

// Times one preprocess and probe_count solves with random unit-norm right-hand sides.
inline ChiEstimate estimate_chi(const SymmetricSystem &system, const SolverOptions &options,
                                int probe_count, unsigned seed = 7)
{
  if (probe_count < 1)
  {
    throw contract_violation("chi estimate needs at least one probe solve");
  }
  const PreparedSolver solver = preprocess(system, options);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double total = 0.0;
  for (int i = 0; i < probe_count; ++i)
  {
    Vector rhs(system.dimension());
    for (auto &x : rhs)
    {
      x = normal(rng);
    }
    rhs.normalize();
    total += solver.solve(rhs).seconds;
  }
  ChiEstimate est;
  est.probes = probe_count;
  est.preprocess_seconds = std::max(solver.preprocess_seconds(), 1e-9);
  est.mean_solve_seconds = std::max(total / probe_count, 1e-9);
  est.chi = est.preprocess_seconds / est.mean_solve_seconds;
  est.low_confidence = probe_count < 3;
  return est;
}

}  // namespace ldas
