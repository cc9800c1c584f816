#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "ldas/errors.hpp"
#include "ldas/system.hpp"

namespace ldas::fem2d
{

using ElementMatrix = Eigen::Matrix<double, 8, 8>;
using ElementVector = Eigen::Matrix<double, 8, 1>;

// SIMP material: E(x) = e_min + (e0 - e_min) * x^penalty.
struct Material
{
  double e0 = 1.0;
  double e_min = 1e-9;
  double poisson = 0.3;
  double penalty = 3.0;

  double modulus(double x) const { return e_min + (e0 - e_min) * std::pow(x, penalty); }
  double modulus_derivative(double x) const
  {
    return penalty * (e0 - e_min) * std::pow(x, penalty - 1.0);
  }
};

// Bilinear quadrilateral, plane stress, unit thickness and unit Young's modulus, for a
// width x height rectangle. Nodes run counterclockwise from the lower-left corner; DOFs
// are (x, y) per node.
inline ElementMatrix reference_stiffness(double width, double height, double poisson)
{
  const double c = 1.0 / (1.0 - poisson * poisson);
  Eigen::Matrix3d d;
  d << c, c * poisson, 0.0, c * poisson, c, 0.0, 0.0, 0.0, c * (1.0 - poisson) / 2.0;
  const std::array<double, 4> xi_n{-1.0, 1.0, 1.0, -1.0};
  const std::array<double, 4> eta_n{-1.0, -1.0, 1.0, 1.0};
  const double g = 1.0 / std::sqrt(3.0);
  ElementMatrix ke = ElementMatrix::Zero();
  for (double xi : {-g, g})
  {
    for (double eta : {-g, g})
    {
      Eigen::Matrix<double, 3, 8> b = Eigen::Matrix<double, 3, 8>::Zero();
      for (int a = 0; a < 4; ++a)
      {
        const double dndx = 0.25 * xi_n[a] * (1.0 + eta * eta_n[a]) * 2.0 / width;
        const double dndy = 0.25 * eta_n[a] * (1.0 + xi * xi_n[a]) * 2.0 / height;
        b(0, 2 * a) = dndx;
        b(1, 2 * a + 1) = dndy;
        b(2, 2 * a) = dndy;
        b(2, 2 * a + 1) = dndx;
      }
      ke.noalias() += b.transpose() * d * b * (width * height / 4.0);
    }
  }
  return 0.5 * (ke + ke.transpose());
}

// Regular nelx x nely grid on the unit square. Node (ix, iy) has id iy*(nelx+1)+ix,
// element (ex, ey) has id ey*nelx+ex. Fixed DOFs are eliminated: systems and states
// live on the free DOFs only.
class Mesh
{
public:
  Mesh(int nelx, int nely, std::vector<int> fixed_dofs) : nelx_(nelx), nely_(nely)
  {
    if (nelx < 1 || nely < 1)
    {
      throw contract_violation("mesh needs at least one element per direction");
    }
    std::sort(fixed_dofs.begin(), fixed_dofs.end());
    fixed_dofs.erase(std::unique(fixed_dofs.begin(), fixed_dofs.end()), fixed_dofs.end());
    free_index_.assign(static_cast<std::size_t>(dof_count()), 0);
    for (int d : fixed_dofs)
    {
      if (d < 0 || d >= dof_count())
      {
        throw contract_violation("fixed DOF out of range");
      }
      free_index_[static_cast<std::size_t>(d)] = -1;
    }
    fixed_ = std::move(fixed_dofs);
    int k = 0;
    for (auto &idx : free_index_)
    {
      if (idx == 0)
      {
        idx = k++;
      }
    }
    free_count_ = k;
    reference_ = reference_stiffness(element_width(), element_height(), 0.3);
  }

  // Four points of interest at the edge midpoints (labels 1-8 counterclockwise from
  // the left edge, odd = x, even = y) and clamped L-shaped legs at each corner.
  static Mesh mechanism(int nelx, int nely)
  {
    if (nelx < 4 || nely < 4)
    {
      throw contract_violation("mechanism mesh must be at least 4x4 elements");
    }
    const int leg_x = std::max(1, std::min(2, nelx / 2 - 1));
    const int leg_y = std::max(1, std::min(2, nely / 2 - 1));
    std::vector<int> fixed;
    auto clamp = [&](int ix, int iy) {
      const int n = iy * (nelx + 1) + ix;
      fixed.push_back(2 * n);
      fixed.push_back(2 * n + 1);
    };
    for (int iy : {0, nely})
    {
      for (int i = 0; i <= leg_x; ++i)
      {
        clamp(i, iy);
        clamp(nelx - i, iy);
      }
    }
    for (int ix : {0, nelx})
    {
      for (int i = 0; i <= leg_y; ++i)
      {
        clamp(ix, i);
        clamp(ix, nely - i);
      }
    }
    Mesh mesh(nelx, nely, std::move(fixed));
    const std::array<std::array<int, 2>, 4> points{{{0, nely / 2}, {nelx / 2, 0}, {nelx, nely / 2}, {nelx / 2, nely}}};
    for (int p = 0; p < 4; ++p)
    {
      const int node = mesh.node(points[static_cast<std::size_t>(p)][0], points[static_cast<std::size_t>(p)][1]);
      mesh.poi_[static_cast<std::size_t>(2 * p)] = 2 * node;
      mesh.poi_[static_cast<std::size_t>(2 * p + 1)] = 2 * node + 1;
    }
    for (int label = 1; label <= 8; ++label)
    {
      if (mesh.free_dof(mesh.poi_dof(label)) < 0)
      {
        throw contract_violation("point of interest coincides with a clamped DOF");
      }
    }
    return mesh;
  }

  int nelx() const noexcept { return nelx_; }
  int nely() const noexcept { return nely_; }
  int element_count() const noexcept { return nelx_ * nely_; }
  int node_count() const noexcept { return (nelx_ + 1) * (nely_ + 1); }
  int dof_count() const noexcept { return 2 * node_count(); }
  int free_count() const noexcept { return free_count_; }
  double element_width() const noexcept { return 1.0 / nelx_; }
  double element_height() const noexcept { return 1.0 / nely_; }
  int node(int ix, int iy) const noexcept { return iy * (nelx_ + 1) + ix; }

  const std::vector<int> &fixed_dofs() const noexcept { return fixed_; }
  // Reduced index of a full DOF, -1 when fixed.
  int free_dof(int full_dof) const { return free_index_.at(static_cast<std::size_t>(full_dof)); }

  bool has_points_of_interest() const noexcept { return poi_[0] >= 0; }

  // Full DOF of labeled point-of-interest DOF (1-8).
  int poi_dof(int label) const
  {
    if (label < 1 || label > 8 || !has_points_of_interest())
    {
      throw contract_violation("point-of-interest label must be 1-8 on a mechanism mesh");
    }
    return poi_[static_cast<std::size_t>(label - 1)];
  }

  int poi_free_dof(int label) const { return free_dof(poi_dof(label)); }

  std::array<int, 8> element_dofs(int e) const
  {
    const int ex = e % nelx_;
    const int ey = e / nelx_;
    const std::array<int, 4> nodes{node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1), node(ex, ey + 1)};
    std::array<int, 8> dofs{};
    for (std::size_t a = 0; a < 4; ++a)
    {
      dofs[2 * a] = 2 * nodes[a];
      dofs[2 * a + 1] = 2 * nodes[a] + 1;
    }
    return dofs;
  }

  // Element slice of a free-DOF vector; fixed DOFs read as zero.
  ElementVector gather(const Vector &reduced, int e) const
  {
    ElementVector v;
    const auto dofs = element_dofs(e);
    for (std::size_t a = 0; a < 8; ++a)
    {
      const int f = free_index_[static_cast<std::size_t>(dofs[a])];
      v[static_cast<Eigen::Index>(a)] = f < 0 ? 0.0 : reduced[f];
    }
    return v;
  }

  Vector expand(const Vector &reduced) const
  {
    Vector full = Vector::Zero(dof_count());
    for (int d = 0; d < dof_count(); ++d)
    {
      const int f = free_index_[static_cast<std::size_t>(d)];
      if (f >= 0)
      {
        full[d] = reduced[f];
      }
    }
    return full;
  }

  // Reference element matrix for this mesh's element shape, Poisson ratio 0.3.
  const ElementMatrix &reference() const noexcept { return reference_; }

private:
  int nelx_;
  int nely_;
  int free_count_ = 0;
  std::vector<int> fixed_;
  std::vector<int> free_index_;
  std::array<int, 8> poi_{-1, -1, -1, -1, -1, -1, -1, -1};
  ElementMatrix reference_;
};

// Linear cone-weight convolution, w_ij = max(0, r - dist(i, j)) in element units,
// each row normalized to sum one.
class DensityFilter
{
public:
  DensityFilter(int nelx, int nely, double radius) : radius_(radius)
  {
    if (radius < 1.0)
    {
      throw contract_violation("filter radius must be at least one element");
    }
    const int reach = static_cast<int>(std::ceil(radius)) - 1;
    const int n = nelx * nely;
    std::vector<Eigen::Triplet<double>> t;
    for (int ey = 0; ey < nely; ++ey)
    {
      for (int ex = 0; ex < nelx; ++ex)
      {
        const int row = ey * nelx + ex;
        std::vector<Eigen::Triplet<double>> row_entries;
        double sum = 0.0;
        for (int jy = std::max(ey - reach, 0); jy <= std::min(ey + reach, nely - 1); ++jy)
        {
          for (int jx = std::max(ex - reach, 0); jx <= std::min(ex + reach, nelx - 1); ++jx)
          {
            const double w = radius - std::hypot(ex - jx, ey - jy);
            if (w > 0.0)
            {
              row_entries.emplace_back(row, jy * nelx + jx, w);
              sum += w;
            }
          }
        }
        for (const auto &e : row_entries)
        {
          t.emplace_back(e.row(), e.col(), e.value() / sum);
        }
      }
    }
    matrix_.resize(n, n);
    matrix_.setFromTriplets(t.begin(), t.end());
    transpose_ = matrix_.transpose();
  }

  Vector apply(const Vector &x) const { return matrix_ * x; }
  Vector apply_transpose(const Vector &x) const { return transpose_ * x; }
  const Eigen::SparseMatrix<double, Eigen::RowMajor> &matrix() const noexcept { return matrix_; }
  double radius() const noexcept { return radius_; }

private:
  double radius_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> transpose_;
};

inline Vector density_filter(const Vector &design, int nelx, int nely, double radius)
{
  return DensityFilter(nelx, nely, radius).apply(design);
}

// Global stiffness on the free DOFs for filtered densities `physical`.
inline SymmetricSystem assemble(const Mesh &mesh, const Vector &physical, const Material &material)
{
  if (physical.size() != mesh.element_count())
  {
    throw contract_violation("density field length does not match the element count");
  }
  const ElementMatrix ke =
      material.poisson == 0.3 ? mesh.reference()
                              : reference_stiffness(mesh.element_width(), mesh.element_height(), material.poisson);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(mesh.element_count()) * 36);
  for (int e = 0; e < mesh.element_count(); ++e)
  {
    const double x = physical[e];
    if (!(x >= 0.0 && x <= 1.0))
    {
      throw contract_violation("filtered density outside [0, 1]");
    }
    const double modulus = material.modulus(x);
    const auto dofs = mesh.element_dofs(e);
    std::array<int, 8> free{};
    for (std::size_t a = 0; a < 8; ++a)
    {
      free[a] = mesh.free_dof(dofs[a]);
    }
    for (int a = 0; a < 8; ++a)
    {
      const int ra = free[static_cast<std::size_t>(a)];
      if (ra < 0)
      {
        continue;
      }
      for (int b = 0; b < 8; ++b)
      {
        const int rb = free[static_cast<std::size_t>(b)];
        if (rb >= 0 && rb <= ra)
        {
          t.emplace_back(ra, rb, modulus * ke(a, b));
        }
      }
    }
  }
  SymmetricSystem::Lower lower(mesh.free_count(), mesh.free_count());
  lower.setFromTriplets(t.begin(), t.end());
  return SymmetricSystem(std::move(lower));
}

// lambda_e . (dK_e / dx_e) u_e at filtered density x_e. Chain rule through the filter
// is the caller's job.
inline double stiffness_derivative_apply(const ElementMatrix &reference, const Material &material,
                                         double x, const ElementVector &u_e, const ElementVector &lambda_e)
{
  return material.modulus_derivative(x) * lambda_e.dot(reference * u_e);
}

// Plain-text density grid: "nelx nely" header, then one line per element row.
inline void write_density(std::ostream &os, int nelx, int nely, const Vector &values)
{
  if (values.size() != nelx * nely)
  {
    throw contract_violation("density export size mismatch");
  }
  os << nelx << ' ' << nely << '\n';
  os.precision(17);
  for (int ey = 0; ey < nely; ++ey)
  {
    for (int ex = 0; ex < nelx; ++ex)
    {
      os << (ex ? " " : "") << values[ey * nelx + ex];
    }
    os << '\n';
  }
}

struct DensityGrid
{
  int nelx = 0;
  int nely = 0;
  Vector values;
};

inline DensityGrid read_density(std::istream &is)
{
  DensityGrid g;
  if (!(is >> g.nelx >> g.nely) || g.nelx < 1 || g.nely < 1)
  {
    throw contract_violation("density grid header is malformed");
  }
  g.values.resize(g.nelx * g.nely);
  for (auto &v : g.values)
  {
    if (!(is >> v))
    {
      throw contract_violation("density grid is truncated");
    }
  }
  return g;
}

}  // namespace ldas::fem2d
