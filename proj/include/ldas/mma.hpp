#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ldas/errors.hpp"

namespace ldas::mma
{

//
// Method of moving asymptotes (Svanberg 1987) for
//   min f0(x)  s.t.  f_i(x) <= 0,  xmin <= x <= xmax,
// with the usual artificial variables (a0 = 1, a = 0, c = 1000, d = 1) and a
// primal-dual interior point solve of the convex separable subproblem.
//

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Settings
{
  double asymptote_init = 0.5;
  double asymptote_decrease = 0.7;
  double asymptote_increase = 1.2;
  double move = 0.2;
  double albefa = 0.1;
  double raa0 = 1e-5;
  double a0 = 1.0;
  double c = 1000.0;
  double d = 1.0;
  int barrier_steps = 10;  // barrier parameter runs 1, 0.1, ..., 10^-barrier_steps
};

// Convex approximation built at the current point:
//   f~_i(x) = sum_j p_ij / (upp_j - x_j) + q_ij / (x_j - low_j) - b_i
// (row 0 of p, q is the objective, whose constant is dropped), over alpha <= x <= beta.
struct Subproblem
{
  VectorXd low, upp, alpha, beta;
  VectorXd p0, q0;
  MatrixXd p, q;  // m x n
  VectorXd b;     // m
  double a0 = 1.0;
  VectorXd a, c, d;

  int n() const { return static_cast<int>(low.size()); }
  int m() const { return static_cast<int>(b.size()); }

  double objective(const VectorXd &x) const
  {
    return (p0.array() / (upp - x).array() + q0.array() / (x - low).array()).sum();
  }

  VectorXd constraints(const VectorXd &x) const
  {
    const VectorXd ux = (upp - x).cwiseInverse();
    const VectorXd xl = (x - low).cwiseInverse();
    return p * ux + q * xl - b;
  }
};

struct SubproblemSolution
{
  VectorXd x, y, lam, xsi, eta, mu, s;
  double z = 0.0, zet = 0.0;
  double kkt_residual = 0.0;  // unperturbed (barrier-free) KKT residual, row-scaled max norm
  int newton_iterations = 0;
};

namespace detail
{

struct Point
{
  VectorXd x, y;
  double z;
  VectorXd lam, xsi, eta, mu;
  double zet;
  VectorXd s;
};

inline VectorXd residual(const Subproblem &sp, const Point &w, double epsi)
{
  const int n = sp.n();
  const int m = sp.m();
  const VectorXd ux1 = sp.upp - w.x;
  const VectorXd xl1 = w.x - sp.low;
  const VectorXd plam = sp.p0 + sp.p.transpose() * w.lam;
  const VectorXd qlam = sp.q0 + sp.q.transpose() * w.lam;
  const VectorXd gvec = sp.p * ux1.cwiseInverse() + sp.q * xl1.cwiseInverse();
  const VectorXd dpsidx = plam.cwiseQuotient(ux1.cwiseProduct(ux1)) - qlam.cwiseQuotient(xl1.cwiseProduct(xl1));
  VectorXd r(3 * n + 4 * m + 2);
  int k = 0;
  auto put = [&](const VectorXd &v) {
    r.segment(k, v.size()) = v;
    k += static_cast<int>(v.size());
  };
  put(dpsidx - w.xsi + w.eta);
  put(sp.c + sp.d.cwiseProduct(w.y) - w.mu - w.lam);
  r[k++] = sp.a0 - w.zet - sp.a.dot(w.lam);
  put(gvec - sp.a * w.z - w.y + w.s - sp.b);
  put((w.xsi.array() * (w.x - sp.alpha).array() - epsi).matrix());
  put((w.eta.array() * (sp.beta - w.x).array() - epsi).matrix());
  put((w.mu.array() * w.y.array() - epsi).matrix());
  r[k++] = w.zet * w.z - epsi;
  put((w.lam.array() * w.s.array() - epsi).matrix());
  return r;
}

// Max-norm of the residual with each stationarity and feasibility row divided by
// max(1, sum of the magnitudes of its terms); complementarity rows stay absolute. In
// double precision this is what can actually be driven to ~1e-10 when gradients are large.
inline double scaled_residual(const Subproblem &sp, const Point &w, double epsi)
{
  const int n = sp.n();
  const int m = sp.m();
  VectorXd r = residual(sp, w, epsi);
  const VectorXd ux1 = sp.upp - w.x;
  const VectorXd xl1 = w.x - sp.low;
  const VectorXd plam = sp.p0 + sp.p.transpose() * w.lam;
  const VectorXd qlam = sp.q0 + sp.q.transpose() * w.lam;
  const VectorXd gvec = sp.p * ux1.cwiseInverse() + sp.q * xl1.cwiseInverse();
  const VectorXd tx = plam.cwiseQuotient(ux1.cwiseProduct(ux1)) + qlam.cwiseQuotient(xl1.cwiseProduct(xl1)) +
                      w.xsi + w.eta;
  const VectorXd ty = sp.c + sp.d.cwiseProduct(w.y) + w.mu + w.lam;
  const double tz = sp.a0 + w.zet + sp.a.cwiseAbs().dot(w.lam);
  const VectorXd tl = gvec + sp.a.cwiseAbs() * w.z + w.y + w.s + sp.b.cwiseAbs();
  auto div = [&](int at, const VectorXd &t) {
    for (Eigen::Index i = 0; i < t.size(); ++i)
    {
      r[at + i] /= std::max(1.0, t[i]);
    }
  };
  div(0, tx);
  div(n, ty);
  r[n + m] /= std::max(1.0, tz);
  div(n + m + 1, tl);
  return r.lpNorm<Eigen::Infinity>();
}

inline SubproblemSolution solve_interior(const Subproblem &sp, const Settings &settings)
{
  const int n = sp.n();
  const int m = sp.m();
  const VectorXd een = VectorXd::Ones(n);
  const VectorXd eem = VectorXd::Ones(m);

  Point w;
  w.x = 0.5 * (sp.alpha + sp.beta);
  w.y = eem;
  w.z = 1.0;
  w.lam = eem;
  w.xsi = (w.x - sp.alpha).cwiseInverse().cwiseMax(een);
  w.eta = (sp.beta - w.x).cwiseInverse().cwiseMax(een);
  w.mu = (0.5 * sp.c).cwiseMax(eem);
  w.zet = 1.0;
  w.s = eem;

  SubproblemSolution out;
  double epsi = 1.0;
  for (int step = 0; step <= settings.barrier_steps; ++step, epsi *= 0.1)
  {
    VectorXd res = detail::residual(sp, w, epsi);
    double resnorm = res.norm();
    double resmax = scaled_residual(sp, w, epsi);
    int inner = 0;
    while (resmax > 0.9 * epsi && inner < 200)
    {
      ++inner;
      ++out.newton_iterations;
      const VectorXd ux1 = sp.upp - w.x;
      const VectorXd xl1 = w.x - sp.low;
      const VectorXd ux2 = ux1.cwiseProduct(ux1);
      const VectorXd xl2 = xl1.cwiseProduct(xl1);
      const VectorXd ux3 = ux1.cwiseProduct(ux2);
      const VectorXd xl3 = xl1.cwiseProduct(xl2);
      const VectorXd plam = sp.p0 + sp.p.transpose() * w.lam;
      const VectorXd qlam = sp.q0 + sp.q.transpose() * w.lam;
      const VectorXd gvec = sp.p * ux1.cwiseInverse() + sp.q * xl1.cwiseInverse();
      const MatrixXd gg = sp.p * ux2.cwiseInverse().asDiagonal() - sp.q * xl2.cwiseInverse().asDiagonal();
      const VectorXd dpsidx = plam.cwiseQuotient(ux2) - qlam.cwiseQuotient(xl2);
      const VectorXd xa = w.x - sp.alpha;
      const VectorXd bx_ = sp.beta - w.x;
      const VectorXd delx = dpsidx - epsi * xa.cwiseInverse() + epsi * bx_.cwiseInverse();
      const VectorXd dely = sp.c + sp.d.cwiseProduct(w.y) - w.lam - epsi * w.y.cwiseInverse();
      const double delz = sp.a0 - sp.a.dot(w.lam) - epsi / w.z;
      const VectorXd dellam = gvec - sp.a * w.z - w.y - sp.b + epsi * w.lam.cwiseInverse();
      const VectorXd diagx = 2.0 * (plam.cwiseQuotient(ux3) + qlam.cwiseQuotient(xl3)) +
                             w.xsi.cwiseQuotient(xa) + w.eta.cwiseQuotient(bx_);
      const VectorXd diagy = sp.d + w.mu.cwiseQuotient(w.y);
      const VectorXd diaglamyi = w.s.cwiseQuotient(w.lam) + diagy.cwiseInverse();

      VectorXd dx, dlam;
      double dz = 0.0;
      if (m < n)
      {
        const VectorXd blam = dellam + dely.cwiseQuotient(diagy) - gg * delx.cwiseQuotient(diagx);
        MatrixXd aa(m + 1, m + 1);
        aa.topLeftCorner(m, m) = gg * diagx.cwiseInverse().asDiagonal() * gg.transpose();
        aa.topLeftCorner(m, m).diagonal() += diaglamyi;
        aa.topRightCorner(m, 1) = sp.a;
        aa.bottomLeftCorner(1, m) = sp.a.transpose();
        aa(m, m) = -w.zet / w.z;
        VectorXd bb(m + 1);
        bb.head(m) = blam;
        bb[m] = delz;
        const VectorXd sol = aa.partialPivLu().solve(bb);
        dlam = sol.head(m);
        dz = sol[m];
        dx = -delx.cwiseQuotient(diagx) - (gg.transpose() * dlam).cwiseQuotient(diagx);
      }
      else
      {
        const VectorXd dli = diaglamyi.cwiseInverse();
        const VectorXd dellamyi = dellam + dely.cwiseQuotient(diagy);
        MatrixXd aa(n + 1, n + 1);
        aa.topLeftCorner(n, n) = gg.transpose() * dli.asDiagonal() * gg;
        aa.topLeftCorner(n, n).diagonal() += diagx;
        const VectorXd axz = -gg.transpose() * sp.a.cwiseProduct(dli);
        aa.topRightCorner(n, 1) = axz;
        aa.bottomLeftCorner(1, n) = axz.transpose();
        aa(n, n) = w.zet / w.z + sp.a.dot(sp.a.cwiseProduct(dli));
        VectorXd bb(n + 1);
        bb.head(n) = -(delx + gg.transpose() * dellamyi.cwiseProduct(dli));
        bb[n] = -(delz - sp.a.dot(dellamyi.cwiseProduct(dli)));
        const VectorXd sol = aa.partialPivLu().solve(bb);
        dx = sol.head(n);
        dz = sol[n];
        dlam = (gg * dx).cwiseProduct(dli) - dz * sp.a.cwiseProduct(dli) + dellamyi.cwiseProduct(dli);
      }
      const VectorXd dy = -dely.cwiseQuotient(diagy) + dlam.cwiseQuotient(diagy);
      const VectorXd dxsi = -w.xsi + epsi * xa.cwiseInverse() - w.xsi.cwiseProduct(dx).cwiseQuotient(xa);
      const VectorXd deta = -w.eta + epsi * bx_.cwiseInverse() + w.eta.cwiseProduct(dx).cwiseQuotient(bx_);
      const VectorXd dmu = -w.mu + epsi * w.y.cwiseInverse() - w.mu.cwiseProduct(dy).cwiseQuotient(w.y);
      const double dzet = -w.zet + epsi / w.z - w.zet * dz / w.z;
      const VectorXd ds = -w.s + epsi * w.lam.cwiseInverse() - w.s.cwiseProduct(dlam).cwiseQuotient(w.lam);

      // Largest step keeping every positive variable positive.
      double stm = 1.0;
      auto bound = [&](const VectorXd &v, const VectorXd &dv) {
        for (Eigen::Index i = 0; i < v.size(); ++i)
        {
          stm = std::max(stm, -1.01 * dv[i] / v[i]);
        }
      };
      bound(w.y, dy);
      bound(w.lam, dlam);
      bound(w.xsi, dxsi);
      bound(w.eta, deta);
      bound(w.mu, dmu);
      bound(w.s, ds);
      stm = std::max(stm, -1.01 * dz / w.z);
      stm = std::max(stm, -1.01 * dzet / w.zet);
      for (int i = 0; i < n; ++i)
      {
        stm = std::max(stm, -1.01 * dx[i] / xa[i]);
        stm = std::max(stm, 1.01 * dx[i] / bx_[i]);
      }
      double steg = 1.0 / stm;

      const Point old = w;
      double resinew = 2.0 * resnorm;
      int backtrack = 0;
      while (resinew > resnorm && backtrack < 50)
      {
        ++backtrack;
        w.x = old.x + steg * dx;
        w.y = old.y + steg * dy;
        w.z = old.z + steg * dz;
        w.lam = old.lam + steg * dlam;
        w.xsi = old.xsi + steg * dxsi;
        w.eta = old.eta + steg * deta;
        w.mu = old.mu + steg * dmu;
        w.zet = old.zet + steg * dzet;
        w.s = old.s + steg * ds;
        res = detail::residual(sp, w, epsi);
        resinew = res.norm();
        steg /= 2.0;
      }
      if (resinew > resnorm)
      {
        w = old;  // no descent even for tiny steps: this barrier level is as good as it gets
        break;
      }
      resnorm = resinew;
      resmax = scaled_residual(sp, w, epsi);
    }
  }
  out.x = w.x;
  out.y = w.y;
  out.z = w.z;
  out.lam = w.lam;
  out.xsi = w.xsi;
  out.eta = w.eta;
  out.mu = w.mu;
  out.zet = w.zet;
  out.s = w.s;
  out.kkt_residual = scaled_residual(sp, w, 0.0);
  return out;
}

}  // namespace detail

// Constraint rows are equilibrated first: row i, y_i, c_i and d_i are rescaled so that
// the subproblem is unchanged in x but its values and slopes are O(1). Without this the
// interior point path stalls when constraints sit at 1e5 (tight displacement bounds).
// The reported KKT residual is that of the equilibrated problem.
inline SubproblemSolution solve_subproblem(const Subproblem &sp, const Settings &settings = {})
{
  const int m = sp.m();
  const VectorXd x0 = 0.5 * (sp.alpha + sp.beta);
  const VectorXd ux1 = sp.upp - x0;
  const VectorXd xl1 = x0 - sp.low;
  const VectorXd value = sp.constraints(x0);
  const MatrixXd slope = sp.p * ux1.cwiseProduct(ux1).cwiseInverse().asDiagonal() -
                         sp.q * xl1.cwiseProduct(xl1).cwiseInverse().asDiagonal();
  VectorXd sigma(m);
  for (int i = 0; i < m; ++i)
  {
    const double scale = std::max({1.0, std::abs(value[i])});
    sigma[i] = std::isfinite(scale) ? 1.0 / scale : 1.0;
  }
  Subproblem eq = sp;
  eq.p = sigma.asDiagonal() * sp.p;
  eq.q = sigma.asDiagonal() * sp.q;
  eq.b = sigma.cwiseProduct(sp.b);
  eq.a = sigma.cwiseProduct(sp.a);
  eq.c = sp.c.cwiseQuotient(sigma);
  eq.d = sp.d.cwiseQuotient(sigma.cwiseProduct(sigma));
  SubproblemSolution out = detail::solve_interior(eq, settings);
  out.y = out.y.cwiseQuotient(sigma);
  out.s = out.s.cwiseQuotient(sigma);
  out.lam = out.lam.cwiseProduct(sigma);
  out.mu = out.mu.cwiseProduct(sigma);
  return out;
}

// Moving-asymptote state: current and two previous designs plus the asymptotes.
class Optimizer
{
public:
  Optimizer(VectorXd x0, VectorXd xmin, VectorXd xmax, int constraints, Settings settings = {})
    : x_(std::move(x0)), xmin_(std::move(xmin)), xmax_(std::move(xmax)), m_(constraints), settings_(settings)
  {
    if (x_.size() != xmin_.size() || x_.size() != xmax_.size() || constraints < 0)
    {
      throw contract_violation("MMA bounds and design must have equal length");
    }
    if ((x_.array() < xmin_.array()).any() || (x_.array() > xmax_.array()).any())
    {
      throw contract_violation("MMA start point outside its bounds");
    }
    xold1_ = x_;
    xold2_ = x_;
    low_ = xmin_;
    upp_ = xmax_;
  }

  const VectorXd &design() const noexcept { return x_; }
  const VectorXd &low() const noexcept { return low_; }
  const VectorXd &upp() const noexcept { return upp_; }
  int iteration() const noexcept { return iter_; }
  const Settings &settings() const noexcept { return settings_; }

  // Convex approximation around the current design (advances the asymptotes).
  Subproblem approximate(const VectorXd &df0dx, const VectorXd &fval, const MatrixXd &dfdx)
  {
    const int n = static_cast<int>(x_.size());
    if (df0dx.size() != n || fval.size() != m_ || dfdx.rows() != m_ || dfdx.cols() != n)
    {
      throw contract_violation("MMA gradient dimensions do not match");
    }
    if (!df0dx.allFinite() || !fval.allFinite() || !dfdx.allFinite())
    {
      throw contract_violation("MMA received non-finite responses");
    }
    ++iter_;
    const Settings &st = settings_;
    const VectorXd range = xmax_ - xmin_;
    if (iter_ <= 2)
    {
      low_ = x_ - st.asymptote_init * range;
      upp_ = x_ + st.asymptote_init * range;
    }
    else
    {
      for (int j = 0; j < n; ++j)
      {
        const double sgn = (x_[j] - xold1_[j]) * (xold1_[j] - xold2_[j]);
        const double factor = sgn > 0 ? st.asymptote_increase : (sgn < 0 ? st.asymptote_decrease : 1.0);
        double lo = x_[j] - factor * (xold1_[j] - low_[j]);
        double up = x_[j] + factor * (upp_[j] - xold1_[j]);
        lo = std::clamp(lo, x_[j] - 10.0 * range[j], x_[j] - 0.01 * range[j]);
        up = std::clamp(up, x_[j] + 0.01 * range[j], x_[j] + 10.0 * range[j]);
        low_[j] = lo;
        upp_[j] = up;
      }
    }
    Subproblem sp;
    sp.low = low_;
    sp.upp = upp_;
    sp.alpha.resize(n);
    sp.beta.resize(n);
    for (int j = 0; j < n; ++j)
    {
      sp.alpha[j] = std::max({low_[j] + st.albefa * (x_[j] - low_[j]), x_[j] - st.move * range[j], xmin_[j]});
      sp.beta[j] = std::min({upp_[j] - st.albefa * (upp_[j] - x_[j]), x_[j] + st.move * range[j], xmax_[j]});
    }
    const VectorXd ux1 = upp_ - x_;
    const VectorXd xl1 = x_ - low_;
    const VectorXd ux2 = ux1.cwiseProduct(ux1);
    const VectorXd xl2 = xl1.cwiseProduct(xl1);
    const VectorXd rinv = range.cwiseMax(1e-5).cwiseInverse();

    VectorXd p0 = df0dx.cwiseMax(0.0);
    VectorXd q0 = (-df0dx).cwiseMax(0.0);
    const VectorXd pq0 = 0.001 * (p0 + q0) + st.raa0 * rinv;
    sp.p0 = (p0 + pq0).cwiseProduct(ux2);
    sp.q0 = (q0 + pq0).cwiseProduct(xl2);

    MatrixXd p = dfdx.cwiseMax(0.0);
    MatrixXd q = (-dfdx).cwiseMax(0.0);
    const MatrixXd pq = 0.001 * (p + q) + st.raa0 * VectorXd::Ones(m_) * rinv.transpose();
    sp.p = (p + pq) * ux2.asDiagonal();
    sp.q = (q + pq) * xl2.asDiagonal();
    sp.b = sp.p * ux1.cwiseInverse() + sp.q * xl1.cwiseInverse() - fval;
    sp.a0 = st.a0;
    sp.a = VectorXd::Zero(m_);
    sp.c = VectorXd::Constant(m_, st.c);
    sp.d = VectorXd::Constant(m_, st.d);
    return sp;
  }

  struct Step
  {
    VectorXd design;
    double max_change = 0.0;
    double kkt_residual = 0.0;
    bool fallback = false;  // subproblem solve failed; took a plain move-limit step instead
  };

  Step update(const VectorXd &df0dx, const VectorXd &fval, const MatrixXd &dfdx)
  {
    const Subproblem sp = approximate(df0dx, fval, dfdx);
    SubproblemSolution sol = solve_subproblem(sp, settings_);
    Step step;
    step.kkt_residual = sol.kkt_residual;
    VectorXd xnew = sol.x;
    if (!xnew.allFinite())
    {
      step.fallback = true;
      xnew = x_;
      for (Eigen::Index j = 0; j < xnew.size(); ++j)
      {
        const double dir = df0dx[j] > 0 ? -1.0 : (df0dx[j] < 0 ? 1.0 : 0.0);
        xnew[j] = std::clamp(x_[j] + dir * settings_.move * (xmax_[j] - xmin_[j]), xmin_[j], xmax_[j]);
      }
    }
    xnew = xnew.cwiseMax(xmin_).cwiseMin(xmax_);
    xold2_ = xold1_;
    xold1_ = x_;
    step.max_change = (xnew - x_).lpNorm<Eigen::Infinity>();
    x_ = xnew;
    step.design = x_;
    return step;
  }

private:
  VectorXd x_, xmin_, xmax_;
  VectorXd xold1_, xold2_, low_, upp_;
  int m_;
  int iter_ = 0;
  Settings settings_;
};

}  // namespace ldas::mma
