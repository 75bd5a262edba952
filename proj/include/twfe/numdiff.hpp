#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace twfe::numdiff {

inline double step(double x, double rel) { return rel * std::max(1.0, std::abs(x)); }

/// Central differences of a scalar function.
template <class F>
Eigen::VectorXd gradient(F&& f, const Eigen::VectorXd& x, double rel = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = step(x[j], rel);
    xp[j] = x[j] + h;
    const double fp = f(xp);
    xp[j] = x[j] - h;
    const double fm = f(xp);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central differences of a vector function; column j is d f / d x_j.
template <class F>
Eigen::MatrixXd jacobian(F&& f, const Eigen::VectorXd& x, double rel = 1e-5) {
  Eigen::MatrixXd jac;
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = step(x[j], rel);
    xp[j] = x[j] + h;
    const Eigen::VectorXd fp = f(xp);
    xp[j] = x[j] - h;
    const Eigen::VectorXd fm = f(xp);
    xp[j] = x[j];
    if (j == 0) jac.resize(fp.size(), x.size());
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

/// Symmetrized central-difference Jacobian of a gradient function.
template <class G>
Eigen::MatrixXd hessian_from_gradient(G&& grad, const Eigen::VectorXd& x, double rel = 1e-4) {
  Eigen::MatrixXd h = jacobian(grad, x, rel);
  return 0.5 * (h + h.transpose());
}

}  // namespace twfe::numdiff
