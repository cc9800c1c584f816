#pragma once

#include <atomic>
#include <cmath>
#include <compare>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "ldas/errors.hpp"

namespace ldas
{

using Vector = Eigen::VectorXd;
using LoadVector = Vector;
using StateVector = Vector;

// Opaque token naming one assembled operator. A new token is minted for every
// assembly, so states computed against one design never leak into the next.
class SystemVersion
{
public:
  constexpr SystemVersion() = default;

  static SystemVersion next()
  {
    static std::atomic<std::uint64_t> counter{0};
    return SystemVersion(++counter);
  }

  constexpr std::uint64_t value() const noexcept { return value_; }
  constexpr bool valid() const noexcept { return value_ != 0; }

  friend constexpr auto operator<=>(const SystemVersion &, const SystemVersion &) = default;

private:
  constexpr explicit SystemVersion(std::uint64_t v) : value_(v) {}
  std::uint64_t value_ = 0;
};

inline bool all_finite(const Vector &v) { return v.allFinite(); }

// Sparse symmetric operator stored as its lower triangle (diagonal included) in
// row-compressed form.
class SymmetricSystem
{
public:
  using Lower = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

  SymmetricSystem() = default;

  explicit SymmetricSystem(Lower lower, SystemVersion version = SystemVersion::next())
    : lower_(std::move(lower)), version_(version)
  {
    if (lower_.rows() != lower_.cols())
    {
      throw contract_violation("symmetric system must be square");
    }
    lower_.makeCompressed();
    for (int i = 0; i < lower_.outerSize(); ++i)
    {
      bool has_diag = false;
      for (Lower::InnerIterator it(lower_, i); it; ++it)
      {
        if (it.col() > i)
        {
          throw contract_violation("symmetric system storage must be lower triangular");
        }
        if (!std::isfinite(it.value()))
        {
          throw contract_violation("symmetric system has non-finite entries");
        }
        has_diag = has_diag || (it.col() == i && it.value() != 0.0);
      }
      if (!has_diag)
      {
        throw contract_violation("symmetric system has a zero diagonal entry");
      }
    }
  }

  // Builds from (row, col, value) triplets of the full matrix; the upper triangle
  // is dropped. Duplicates are summed.
  static SymmetricSystem from_triplets(int n, const std::vector<Eigen::Triplet<double>> &full)
  {
    std::vector<Eigen::Triplet<double>> lower;
    lower.reserve(full.size());
    for (const auto &t : full)
    {
      if (t.col() <= t.row())
      {
        lower.push_back(t);
      }
    }
    Lower m(n, n);
    m.setFromTriplets(lower.begin(), lower.end());
    return SymmetricSystem(std::move(m));
  }

  static SymmetricSystem from_dense(const Eigen::MatrixXd &full)
  {
    const int n = static_cast<int>(full.rows());
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < n; ++i)
    {
      for (int j = 0; j <= i; ++j)
      {
        if (full(i, j) != 0.0)
        {
          t.emplace_back(i, j, full(i, j));
        }
      }
    }
    Lower m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return SymmetricSystem(std::move(m));
  }

  int dimension() const noexcept { return static_cast<int>(lower_.rows()); }
  SystemVersion version() const noexcept { return version_; }
  const Lower &lower() const noexcept { return lower_; }

  // y = K x using only the stored triangle.
  Vector apply(const Vector &x) const
  {
    if (x.size() != dimension())
    {
      throw contract_violation("operator applied to vector of wrong length");
    }
    Vector y = Vector::Zero(dimension());
    const int *outer = lower_.outerIndexPtr();
    const int *inner = lower_.innerIndexPtr();
    const double *val = lower_.valuePtr();
    for (int i = 0; i < dimension(); ++i)
    {
      double acc = 0.0;
      for (int k = outer[i]; k < outer[i + 1]; ++k)
      {
        const int j = inner[k];
        acc += val[k] * x[j];
        if (j != i)
        {
          y[j] += val[k] * x[i];
        }
      }
      y[i] += acc;
    }
    return y;
  }

  Vector diagonal() const
  {
    Vector d = Vector::Zero(dimension());
    for (int i = 0; i < lower_.outerSize(); ++i)
    {
      for (Lower::InnerIterator it(lower_, i); it; ++it)
      {
        if (it.col() == i)
        {
          d[i] = it.value();
        }
      }
    }
    return d;
  }

  Eigen::MatrixXd to_dense() const
  {
    Eigen::MatrixXd full = Eigen::MatrixXd(lower_);
    Eigen::MatrixXd sym = full + full.transpose();
    sym.diagonal() = full.diagonal();
    return sym;
  }

  // Relative residual ||K u - f|| / max(||f||, floor).
  double relative_residual(const Vector &u, const Vector &f, double floor = 1e-300) const
  {
    return (apply(u) - f).norm() / std::max(f.norm(), floor);
  }

private:
  Lower lower_;
  SystemVersion version_;
};

}  // namespace ldas
