#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "twfe/distributions.hpp"
#include "twfe/error.hpp"
#include "twfe/numdiff.hpp"
#include "twfe/objective.hpp"

namespace twfe {

/// Null hypothesis R(theta) = 0 with r restrictions.
struct Constraint {
  enum class Kind { point, linear, general };

  Kind kind = Kind::point;
  Eigen::VectorXd point;                                        // point
  Eigen::MatrixXd c;                                            // linear: C theta = rhs
  Eigen::VectorXd rhs;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn;    // general
  int r = 0;
  std::string description;

  static Constraint at_point(Eigen::VectorXd theta, std::string desc = {}) {
    Constraint k;
    k.kind = Kind::point;
    k.r = static_cast<int>(theta.size());
    k.point = std::move(theta);
    k.description = std::move(desc);
    return k;
  }

  static Constraint linear(Eigen::MatrixXd c, Eigen::VectorXd rhs, std::string desc = {}) {
    if (c.rows() != rhs.size()) throw Error(ErrorKind::ConfigError, "constraint matrix and right-hand side disagree");
    Constraint k;
    k.kind = Kind::linear;
    k.r = static_cast<int>(c.rows());
    k.c = std::move(c);
    k.rhs = std::move(rhs);
    k.description = std::move(desc);
    return k;
  }

  static Constraint general(std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn, int r, std::string desc = {}) {
    Constraint k;
    k.kind = Kind::general;
    k.fn = std::move(fn);
    k.r = r;
    k.description = std::move(desc);
    return k;
  }

  Eigen::VectorXd residual(const Eigen::VectorXd& theta) const {
    switch (kind) {
      case Kind::point: return theta - point;
      case Kind::linear: return c * theta - rhs;
      case Kind::general: return fn(theta);
    }
    return {};
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta) const {
    switch (kind) {
      case Kind::point: return Eigen::MatrixXd::Identity(theta.size(), theta.size());
      case Kind::linear: return c;
      case Kind::general: return numdiff::jacobian(fn, theta);
    }
    return {};
  }
};

struct EstimateResult {
  Eigen::VectorXd theta_hat;
  ObjectiveKind objective_kind = ObjectiveKind::raw;
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::VectorXd se;
  Eigen::MatrixXd hessian_theta;
  ProfileResult profile;
  bool converged = false;
  int iterations = 0;
  double nt = 0.0;
  std::optional<Constraint> constrained_to;
  std::vector<std::string> flags;
};

struct MaximizeOptions {
  std::optional<Eigen::VectorXd> start;
  int max_iter = 200;
  double gtol = 1e-7;
  double ftol = 1e-12;
  bool compute_hessian = true;
  /// Corrected and infeasible fits without an explicit start begin at the raw MLE.
  bool raw_warm_start = true;
};

// ---------------------------------------------------------------------------
// BFGS

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd g;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes f with an inverse-Hessian BFGS update and Armijo backtracking.
/// Evaluations that throw are treated as +inf during the line search.
template <class F, class G>
BfgsResult bfgs_minimize(F&& f, G&& grad, Eigen::VectorXd x, Eigen::MatrixXd hinv, int max_iter, double gtol,
                         double ftol) {
  BfgsResult res;
  double fx = f(x);
  Eigen::VectorXd g = grad(x);
  const auto n = x.size();
  auto safe_f = [&](const Eigen::VectorXd& y) {
    try {
      const double v = f(y);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  int it = 0;
  for (; it < max_iter; ++it) {
    if (n == 0 || g.cwiseAbs().maxCoeff() < gtol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd d = -hinv * g;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      hinv.setIdentity(n, n);
      d = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    Eigen::VectorXd x1;
    double f1 = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x1 = x + step * d;
      f1 = safe_f(x1);
      if (f1 <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    Eigen::VectorXd g1 = grad(x1);
    const Eigen::VectorXd s = x1 - x;
    const Eigen::VectorXd y = g1 - g;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      hinv = (eye - rho * s * y.transpose()) * hinv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    const double change = std::abs(f1 - fx) / std::max(1.0, std::abs(fx));
    x = std::move(x1);
    fx = f1;
    g = std::move(g1);
    if (step == 1.0 && change < ftol) {
      res.converged = true;
      ++it;
      break;
    }
  }
  res.x = std::move(x);
  res.f = fx;
  res.g = std::move(g);
  res.iterations = it;
  return res;
}

// ---------------------------------------------------------------------------
// Standard errors

/// sqrt of the diagonal of (-NT H)^-1; NaN entries when H is not negative definite.
inline Eigen::VectorXd standard_errors(const Eigen::MatrixXd& hessian, double nt, bool* ok = nullptr) {
  const auto p = hessian.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(-nt * hessian);
  if (llt.info() != Eigen::Success || !hessian.allFinite()) {
    if (ok) *ok = false;
    return Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  }
  if (ok) *ok = true;
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  return inv.diagonal().cwiseSqrt();
}

inline Eigen::VectorXd standard_errors(EstimateResult& res) {
  bool ok = false;
  res.se = standard_errors(res.hessian_theta, res.nt, &ok);
  if (!ok) res.flags.emplace_back("IndefiniteHessian: standard errors unavailable");
  return res.se;
}

// ---------------------------------------------------------------------------
// Maximization

namespace detail {

struct AffineParam {
  Eigen::VectorXd base;
  Eigen::MatrixXd z;
};

inline AffineParam null_space(const Constraint& k, int p) {
  if (k.c.cols() != p) throw Error(ErrorKind::ConfigError, "constraint matrix has wrong column count");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(k.c.transpose());
  if (qr.rank() < k.r)
    throw Error(ErrorKind::RankDeficientConstraint, "linear constraint has rank " + std::to_string(qr.rank()) +
                                                        " < " + std::to_string(k.r));
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
  AffineParam a;
  a.z = q.rightCols(p - k.r);
  a.base = k.c.completeOrthogonalDecomposition().solve(k.rhs);
  return a;
}

inline Eigen::MatrixXd initial_inverse(Objective& obj, const Eigen::VectorXd& theta, const Eigen::MatrixXd& z) {
  const auto q = z.cols();
  try {
    const Eigen::MatrixXd h = z.transpose() * obj.raw_hessian(theta) * z;
    Eigen::LLT<Eigen::MatrixXd> llt(-h);
    if (llt.info() == Eigen::Success) return llt.solve(Eigen::MatrixXd::Identity(q, q));
  } catch (const Error&) {
  }
  return Eigen::MatrixXd::Identity(q, q);
}

}  // namespace detail

inline EstimateResult maximize(Objective& obj, const std::optional<Constraint>& constraint = std::nullopt,
                               const MaximizeOptions& opts = {}) {
  const int p = obj.spec().theta_dim();
  EstimateResult res;
  res.objective_kind = obj.kind();
  res.nt = obj.nt();
  res.constrained_to = constraint;

  Eigen::VectorXd start = opts.start.value_or(Eigen::VectorXd::Zero(p));
  if (start.size() != p) throw Error(ErrorKind::ConfigError, "start value has wrong dimension");
  if (!opts.start && opts.raw_warm_start && obj.kind() != ObjectiveKind::raw) {
    Objective raw(obj.data(), obj.spec(), ObjectiveKind::raw, obj.options());
    MaximizeOptions ro = opts;
    ro.compute_hessian = false;
    const EstimateResult rf = maximize(raw, constraint, ro);
    if (rf.converged) start = rf.theta_hat;
  }
  if (constraint && constraint->r > p)
    throw Error(ErrorKind::ConfigError, "more restrictions than parameters");

  if (constraint && constraint->kind == Constraint::Kind::point) {
    if (constraint->point.size() != p) throw Error(ErrorKind::ConfigError, "point null has wrong dimension");
    if (!constraint->point.allFinite()) throw Error(ErrorKind::ConfigError, "point null is not finite");
    res.theta_hat = constraint->point;
    res.loglik = obj.value(res.theta_hat);
    res.converged = true;
  } else if (constraint && constraint->kind == Constraint::Kind::general) {
    // Augmented Lagrangian on R(theta) = 0.
    Eigen::VectorXd theta = start;
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(constraint->r);
    double mu = 10.0;
    double prev = std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
    for (int outer = 0; outer < 30; ++outer) {
      auto f = [&](const Eigen::VectorXd& x) {
        const Eigen::VectorXd rr = constraint->residual(x);
        return -obj.value(x) + lam.dot(rr) + 0.5 * mu * rr.squaredNorm();
      };
      auto g = [&](const Eigen::VectorXd& x) {
        const Eigen::VectorXd rr = constraint->residual(x);
        const Eigen::MatrixXd jac = constraint->jacobian(x);
        return Eigen::VectorXd(-obj.score(x) + jac.transpose() * (lam + mu * rr));
      };
      const BfgsResult b = bfgs_minimize(f, g, theta, eye, opts.max_iter, opts.gtol, opts.ftol);
      theta = b.x;
      res.iterations += b.iterations;
      const Eigen::VectorXd rr = constraint->residual(theta);
      const double viol = rr.cwiseAbs().maxCoeff();
      if (viol < 1e-8 && b.converged) {
        res.converged = true;
        break;
      }
      lam += mu * rr;
      if (viol > 0.25 * prev) mu *= 10.0;
      prev = viol;
    }
    res.theta_hat = theta;
    res.loglik = obj.value(theta);
  } else {
    detail::AffineParam ap;
    if (constraint) {
      ap = detail::null_space(*constraint, p);
    } else {
      ap.base = Eigen::VectorXd::Zero(p);
      ap.z = Eigen::MatrixXd::Identity(p, p);
    }
    auto to_theta = [&](const Eigen::VectorXd& psi) { return Eigen::VectorXd(ap.base + ap.z * psi); };
    const Eigen::VectorXd psi0 = ap.z.transpose() * (start - ap.base);
    auto f = [&](const Eigen::VectorXd& psi) { return -obj.value(to_theta(psi)); };
    auto g = [&](const Eigen::VectorXd& psi) { return Eigen::VectorXd(-ap.z.transpose() * obj.score(to_theta(psi))); };
    const Eigen::MatrixXd hinv = detail::initial_inverse(obj, to_theta(psi0), ap.z);
    const BfgsResult b = bfgs_minimize(f, g, psi0, hinv, opts.max_iter, opts.gtol, opts.ftol);
    res.theta_hat = to_theta(b.x);
    res.iterations = b.iterations;
    res.converged = b.converged;
    res.loglik = obj.value(res.theta_hat);
  }
  res.profile = obj.last_profile();
  res.score = obj.score(res.theta_hat);
  if (!res.converged) res.flags.emplace_back("NoConvergence: outer maximization did not converge");
  if (opts.compute_hessian) {
    res.hessian_theta = obj.hessian(res.theta_hat);
    standard_errors(res);
  }
  return res;
}

inline EstimateResult maximize(const PanelData& data, const ModelSpec& spec, ObjectiveKind kind,
                               const std::optional<Constraint>& constraint = std::nullopt,
                               const MaximizeOptions& opts = {}, const CorrectionOptions& copts = {},
                               const Truth* truth = nullptr) {
  Objective obj(data, spec, kind, copts, truth);
  return maximize(obj, constraint, opts);
}

// ---------------------------------------------------------------------------
// Test statistics

enum class TestKind { LR, LM, Wald };

inline std::string_view to_string(TestKind k) {
  switch (k) {
    case TestKind::LR: return "LR";
    case TestKind::LM: return "LM";
    case TestKind::Wald: return "Wald";
  }
  return "?";
}

inline TestKind parse_test_kind(std::string_view s) {
  std::string l(s);
  for (auto& ch : l) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (l == "lr") return TestKind::LR;
  if (l == "lm" || l == "score") return TestKind::LM;
  if (l == "wald") return TestKind::Wald;
  throw Error(ErrorKind::ConfigError, "unknown test kind '" + std::string(s) + "'");
}

struct TestResult {
  TestKind kind = TestKind::LR;
  ObjectiveKind objective_kind = ObjectiveKind::raw;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::string constraint;
  bool clipped = false;
};

inline TestResult make_test_result(TestKind kind, ObjectiveKind obj, double stat, int df, std::string desc) {
  TestResult t;
  t.kind = kind;
  t.objective_kind = obj;
  t.df = df;
  t.constraint = std::move(desc);
  if (!(stat >= 0.0)) {
    t.clipped = stat < -1e-8 || std::isnan(stat);
    stat = std::isnan(stat) ? stat : 0.0;
  }
  t.statistic = stat;
  t.p_value = std::isnan(stat) ? std::numeric_limits<double>::quiet_NaN() : dist::chi2_sf(stat, df);
  return t;
}

/// -2 NT [f(theta_R) - f(theta_U)].
inline double lr_statistic(double nt, double restricted, double unrestricted) {
  return -2.0 * nt * (restricted - unrestricted);
}

/// -NT g' H^-1 g at the restricted estimate.
inline double lm_statistic(double nt, const Eigen::VectorXd& score, const Eigen::MatrixXd& hessian) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(hessian);
  if (!lu.isInvertible()) throw Error(ErrorKind::DegenerateVariance, "Hessian is singular at the restricted estimate");
  return -nt * score.dot(lu.solve(score));
}

/// -NT R' (J H^-1 J')^-1 R at the unrestricted estimate.
inline double wald_statistic(double nt, const Eigen::VectorXd& r, const Eigen::MatrixXd& jac,
                             const Eigen::MatrixXd& hessian) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(hessian);
  if (!lu.isInvertible()) throw Error(ErrorKind::DegenerateVariance, "Hessian is singular at the estimate");
  const Eigen::MatrixXd v = jac * lu.solve(jac.transpose());
  Eigen::FullPivLU<Eigen::MatrixXd> lv(v);
  if (!lv.isInvertible()) throw Error(ErrorKind::DegenerateVariance, "J H^-1 J' is singular");
  return -nt * r.dot(lv.solve(r));
}

/// Runs the requested tests of one null on one objective, sharing the fits.
/// Fits not supplied are computed.
inline std::vector<TestResult> run_tests(Objective& obj, const Constraint& constraint,
                                         const std::vector<TestKind>& kinds, const MaximizeOptions& opts = {},
                                         const EstimateResult* unrestricted = nullptr,
                                         const EstimateResult* restricted = nullptr) {
  bool need_u = false, need_r = false;
  for (auto k : kinds) {
    need_u |= (k == TestKind::LR || k == TestKind::Wald);
    need_r |= (k == TestKind::LR || k == TestKind::LM);
  }
  std::optional<EstimateResult> fu, fr;
  if (need_u && !unrestricted) {
    fu = maximize(obj, std::nullopt, opts);
    unrestricted = &*fu;
  }
  if (need_r && !restricted) {
    MaximizeOptions ro = opts;
    ro.compute_hessian = false;
    if (!ro.start && unrestricted) ro.start = unrestricted->theta_hat;
    fr = maximize(obj, constraint, ro);
    restricted = &*fr;
  }
  const double nt = obj.nt();
  std::vector<TestResult> out;
  for (auto k : kinds) {
    double stat = 0.0;
    switch (k) {
      case TestKind::LR:
        stat = lr_statistic(nt, restricted->loglik, unrestricted->loglik);
        break;
      case TestKind::LM: {
        const Eigen::VectorXd g = obj.score(restricted->theta_hat);
        const Eigen::MatrixXd h = obj.hessian(restricted->theta_hat);
        stat = lm_statistic(nt, g, h);
        break;
      }
      case TestKind::Wald: {
        const Eigen::MatrixXd h = unrestricted->hessian_theta.size() > 0 ? unrestricted->hessian_theta
                                                                          : obj.hessian(unrestricted->theta_hat);
        stat = wald_statistic(nt, constraint.residual(unrestricted->theta_hat),
                              constraint.jacobian(unrestricted->theta_hat), h);
        break;
      }
    }
    out.push_back(make_test_result(k, obj.kind(), stat, constraint.r, constraint.description));
  }
  return out;
}

inline TestResult test(const PanelData& data, const ModelSpec& spec, const Constraint& constraint,
                       ObjectiveKind objective, TestKind kind, const CorrectionOptions& copts = {},
                       const MaximizeOptions& opts = {}, const Truth* truth = nullptr) {
  Objective obj(data, spec, objective, copts, truth);
  return run_tests(obj, constraint, {kind}, opts).front();
}

}  // namespace twfe
