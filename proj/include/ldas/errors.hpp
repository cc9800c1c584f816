#pragma once

#include <stdexcept>
#include <string>

namespace ldas
{

// Caller broke a precondition: wrong dimension, non-finite entries, unknown kind.
class contract_violation : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

// An orthogonal basis or prepared solver was used against a different system version.
class stale_basis_error : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

// Factorization broke down (not positive definite on the free DOF set).
class singular_system_error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Iterative solve ran out of iterations; carries the residual it reached.
class convergence_error : public std::runtime_error
{
public:
  convergence_error(const std::string &what, double achieved_residual, int iterations)
    : std::runtime_error(what), achieved_residual_(achieved_residual), iterations_(iterations)
  {
  }

  double achieved_residual() const noexcept { return achieved_residual_; }
  int iterations() const noexcept { return iterations_; }

private:
  double achieved_residual_;
  int iterations_;
};

}  // namespace ldas
