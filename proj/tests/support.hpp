#pragma once

// Oracles and generators shared by the test suites. Nothing here calls into the
// library's solvers: the dense Cholesky below is the independent reference.

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ldas/system.hpp"

namespace testing_support
{

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Textbook dense Cholesky, row by row.
class DenseCholesky
{
public:
  explicit DenseCholesky(const MatrixXd &a) : l_(MatrixXd::Zero(a.rows(), a.cols()))
  {
    const Eigen::Index n = a.rows();
    for (Eigen::Index i = 0; i < n; ++i)
    {
      for (Eigen::Index j = 0; j <= i; ++j)
      {
        double s = a(i, j);
        for (Eigen::Index k = 0; k < j; ++k)
        {
          s -= l_(i, k) * l_(j, k);
        }
        if (i == j)
        {
          if (s <= 0.0)
          {
            throw std::runtime_error("oracle: matrix not SPD");
          }
          l_(i, i) = std::sqrt(s);
        }
        else
        {
          l_(i, j) = s / l_(j, j);
        }
      }
    }
  }

  VectorXd solve(const VectorXd &b) const
  {
    const Eigen::Index n = b.size();
    VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
      double s = b[i];
      for (Eigen::Index k = 0; k < i; ++k)
      {
        s -= l_(i, k) * y[k];
      }
      y[i] = s / l_(i, i);
    }
    VectorXd x(n);
    for (Eigen::Index i = n - 1; i >= 0; --i)
    {
      double s = y[i];
      for (Eigen::Index k = i + 1; k < n; ++k)
      {
        s -= l_(k, i) * x[k];
      }
      x[i] = s / l_(i, i);
    }
    return x;
  }

private:
  MatrixXd l_;
};

inline MatrixXd random_matrix(std::mt19937 &rng, Eigen::Index rows, Eigen::Index cols)
{
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
  {
    for (Eigen::Index i = 0; i < rows; ++i)
    {
      m(i, j) = g(rng);
    }
  }
  return m;
}

inline VectorXd random_vector(std::mt19937 &rng, Eigen::Index n) { return random_matrix(rng, n, 1).col(0); }

// B Bᵀ / n + shift I: SPD with condition number of a few hundred at most.
inline MatrixXd random_spd(std::mt19937 &rng, Eigen::Index n, double shift = 0.5)
{
  const MatrixXd b = random_matrix(rng, n, n);
  MatrixXd a = b * b.transpose() / static_cast<double>(n);
  a.diagonal().array() += shift;
  return a;
}

// `count` loads spanning a random rank-`rank` subspace. The coefficient matrix is
// well conditioned, so numerical rank equals `rank`.
inline std::vector<VectorXd> rank_deficient_loads(std::mt19937 &rng, Eigen::Index n, int rank, int count)
{
  const MatrixXd span = random_matrix(rng, n, rank);
  std::vector<VectorXd> loads;
  for (int i = 0; i < count; ++i)
  {
    VectorXd c = random_vector(rng, rank);
    if (i < rank)
    {
      c = VectorXd::Unit(rank, i) + 0.1 * c;  // first `rank` loads are clearly independent
    }
    loads.push_back(span * c);
  }
  std::shuffle(loads.begin(), loads.end(), rng);
  return loads;
}

inline double relative_error(const VectorXd &a, const VectorXd &reference)
{
  return (a - reference).norm() / std::max(reference.norm(), 1e-300);
}

}  // namespace testing_support
