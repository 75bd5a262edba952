#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "twfe/error.hpp"
#include "twfe/model.hpp"
#include "twfe/panel.hpp"

namespace twfe {

// ---------------------------------------------------------------------------
// Sanitize

struct SanitizeReport {
  std::vector<int> dropped_units;    // indices into the input panel
  std::vector<int> dropped_periods;  // indices into the input panel
  std::vector<std::string> reasons;  // one per drop, units first
  std::vector<int> kept_units;
  std::vector<int> kept_periods;

  bool empty() const { return dropped_units.empty() && dropped_periods.empty(); }
};

namespace detail {

/// d pi / d alpha_i and d pi / d gamma_t at every cell when they do not depend
/// on theta; a constant loading for forms where they do.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> effect_loadings(const PanelData& data, const ModelSpec& spec) {
  const auto n = data.n_units(), t = data.n_periods();
  switch (spec.index_form) {
    case IndexForm::covariate_loaded_fe:
      return {data.covariate(spec.u_column), data.covariate(spec.v_column)};
    case IndexForm::shared_slope_fe:
      return {data.covariate(spec.u_column), data.covariate(spec.u_column)};
    case IndexForm::slope_shift_fe: {
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, t);
      if (spec.lag_order > 0) s += data.y_lag;
      for (const auto& x : spec.x_columns) s += data.covariate(x);
      return {s, s};
    }
    default:
      return {Eigen::MatrixXd::Ones(n, t), Eigen::MatrixXd::Ones(n, t)};
  }
}

/// True when some direction of the effect raises every cell's likelihood,
/// i.e. the outcome is separated by the sign of the loading.
template <class Y, class L>
bool separated(Y&& y, L&& load, int len, const std::vector<char>& mask) {
  bool up = true, down = true;
  for (int k = 0; k < len; ++k) {
    if (!mask[k]) continue;
    const double l = load(k);
    if (y(k) == 1.0) {
      up &= l >= 0.0;
      down &= l <= 0.0;
    } else {
      up &= l <= 0.0;
      down &= l >= 0.0;
    }
  }
  return up || down;
}

}  // namespace detail

/// Removes units, then periods, whose effect would diverge, until nothing
/// changes. For additive effects this is a unit or period without outcome
/// variation; with covariate loadings it is an outcome separated by the sign
/// of the loading. Only binary families are affected.
inline std::pair<PanelData, SanitizeReport> sanitize_panel(const PanelData& data, const ModelSpec& spec) {
  const int n = data.n_units();
  const int t = data.n_periods();
  if (n < 1 || t < 1) throw Error(ErrorKind::EmptyPanel, "panel has no cells");
  SanitizeReport rep;
  std::vector<char> unit_ok(n, 1), period_ok(t, 1);
  if (spec.binary()) {
    const auto [la, lg] = detail::effect_loadings(data, spec);
    const bool constant_a = (la.array() == 1.0).all();
    const bool constant_g = (lg.array() == 1.0).all();
    std::vector<int> units, periods;
    bool changed = true;
    while (changed) {
      changed = false;
      for (int i = 0; i < n; ++i) {
        if (unit_ok[i] && detail::separated([&](int s) { return data.y(i, s); }, [&](int s) { return la(i, s); }, t,
                                            period_ok)) {
          unit_ok[i] = 0;
          units.push_back(i);
          changed = true;
        }
      }
      for (int s = 0; s < t; ++s) {
        if (period_ok[s] && detail::separated([&](int i) { return data.y(i, s); }, [&](int i) { return lg(i, s); },
                                              n, unit_ok)) {
          period_ok[s] = 0;
          periods.push_back(s);
          changed = true;
        }
      }
    }
    for (int i : units) {
      rep.dropped_units.push_back(i);
      rep.reasons.push_back("unit " + data.unit_labels[i] +
                            (constant_a ? ": no outcome variation" : ": outcome separated by the effect loading"));
    }
    for (int s : periods) {
      rep.dropped_periods.push_back(s);
      rep.reasons.push_back("period " + data.time_labels[s] +
                            (constant_g ? ": no outcome variation" : ": outcome separated by the effect loading"));
    }
  }
  for (int i = 0; i < n; ++i)
    if (unit_ok[i]) rep.kept_units.push_back(i);
  for (int s = 0; s < t; ++s)
    if (period_ok[s]) rep.kept_periods.push_back(s);
  if (rep.kept_units.size() < 2 || rep.kept_periods.size() < 2)
    throw Error(ErrorKind::EmptyPanel, "fewer than two units or periods survive sanitizing");
  if (rep.empty()) return {data, std::move(rep)};
  return {subset_panel(data, rep.kept_units, rep.kept_periods), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Identification constraints on phi = (alpha, gamma)

struct FeConstraints {
  Eigen::MatrixXd c_alpha;  // k x N
  Eigen::MatrixXd c_gamma;  // k x T
  Eigen::VectorXd rhs;      // k

  int rows() const { return static_cast<int>(rhs.size()); }

  Eigen::VectorXd residual(const Eigen::VectorXd& alpha, const Eigen::VectorXd& gamma) const {
    return rhs - c_alpha * alpha - c_gamma * gamma;
  }

  /// Moves (alpha, gamma) to the nearest feasible point in the Euclidean norm.
  void project(Eigen::VectorXd& alpha, Eigen::VectorXd& gamma) const {
    if (rows() == 0) return;
    const Eigen::MatrixXd cc = c_alpha * c_alpha.transpose() + c_gamma * c_gamma.transpose();
    const Eigen::VectorXd mult = cc.ldlt().solve(residual(alpha, gamma));
    alpha += c_alpha.transpose() * mult;
    gamma += c_gamma.transpose() * mult;
  }

  /// Removes the component of a gradient normal to the constraint set.
  void project_gradient(Eigen::VectorXd& ga, Eigen::VectorXd& gg) const {
    if (rows() == 0) return;
    const Eigen::MatrixXd cc = c_alpha * c_alpha.transpose() + c_gamma * c_gamma.transpose();
    const Eigen::VectorXd mult = cc.ldlt().solve(c_alpha * ga + c_gamma * gg);
    ga -= c_alpha.transpose() * mult;
    gg -= c_gamma.transpose() * mult;
  }
};

inline FeConstraints fe_constraints(const ModelSpec& spec, int n, int t) {
  FeConstraints c;
  const auto k = spec.constants();
  switch (spec.identification) {
    case Identification::sum_zero_both:
      c.c_alpha = Eigen::MatrixXd::Zero(2, n);
      c.c_gamma = Eigen::MatrixXd::Zero(2, t);
      c.c_alpha.row(0).setOnes();
      c.c_gamma.row(1).setOnes();
      c.rhs = Eigen::Vector2d(k[0], k[1]);
      break;
    case Identification::sum_equal:
      c.c_alpha = Eigen::MatrixXd::Ones(1, n);
      c.c_gamma = -Eigen::MatrixXd::Ones(1, t);
      c.rhs = Eigen::VectorXd::Zero(1);
      break;
    case Identification::mean_half:
      c.c_alpha = Eigen::MatrixXd::Zero(2, n);
      c.c_gamma = Eigen::MatrixXd::Zero(2, t);
      c.c_alpha.row(0).setConstant(1.0 / n);
      c.c_gamma.row(1).setConstant(1.0 / t);
      c.rhs = Eigen::Vector2d(k[0], k[1]);
      break;
    case Identification::none_needed:
      c.c_alpha.resize(0, n);
      c.c_gamma.resize(0, t);
      c.rhs.resize(0);
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Bordered Newton system

/// Solves [[H, C'], [C, 0]] [x; mu] = [r_phi; r_c] for the arrow-structured
/// fixed-effect Hessian H = [[diag(d_alpha), M], [M', diag(d_gamma)]].
/// The larger diagonal block is eliminated; the remaining dense system has
/// size min(N, T) + k.
class FeKkt {
 public:
  FeKkt(const Eigen::VectorXd& d_alpha, const Eigen::VectorXd& d_gamma, const Eigen::MatrixXd& m,
        const FeConstraints& c)
      : alpha_big_(d_alpha.size() >= d_gamma.size()) {
    const Eigen::VectorXd& db = alpha_big_ ? d_alpha : d_gamma;
    const Eigen::VectorXd& ds = alpha_big_ ? d_gamma : d_alpha;
    inv_db_ = db.cwiseInverse();
    m_bs_ = alpha_big_ ? m : Eigen::MatrixXd(m.transpose());
    c_b_ = alpha_big_ ? c.c_alpha : c.c_gamma;
    c_s_ = alpha_big_ ? c.c_gamma : c.c_alpha;
    const auto ns = ds.size();
    const auto k = c.rows();
    const Eigen::MatrixXd scaled = inv_db_.asDiagonal() * m_bs_;
    Eigen::MatrixXd kk(ns + k, ns + k);
    kk.topLeftCorner(ns, ns) = -m_bs_.transpose() * scaled;
    kk.topLeftCorner(ns, ns).diagonal() += ds;
    if (k > 0) {
      const Eigen::MatrixXd e = c_s_ - c_b_ * scaled;
      kk.bottomLeftCorner(k, ns) = e;
      kk.topRightCorner(ns, k) = e.transpose();
      kk.bottomRightCorner(k, k) = -(c_b_ * inv_db_.asDiagonal() * c_b_.transpose());
    }
    lu_.compute(kk);
  }

  void solve(const Eigen::MatrixXd& r_alpha, const Eigen::MatrixXd& r_gamma, const Eigen::MatrixXd& r_c,
             Eigen::MatrixXd& x_alpha, Eigen::MatrixXd& x_gamma) const {
    const Eigen::MatrixXd& rb = alpha_big_ ? r_alpha : r_gamma;
    const Eigen::MatrixXd& rs = alpha_big_ ? r_gamma : r_alpha;
    const auto ns = rs.rows();
    const auto k = c_b_.rows();
    const Eigen::MatrixXd y = inv_db_.asDiagonal() * rb;
    Eigen::MatrixXd rhs(ns + k, rb.cols());
    rhs.topRows(ns) = rs - m_bs_.transpose() * y;
    if (k > 0) rhs.bottomRows(k) = r_c - c_b_ * y;
    const Eigen::MatrixXd sol = lu_.solve(rhs);
    const Eigen::MatrixXd xs = sol.topRows(ns);
    Eigen::MatrixXd inner = rb - m_bs_ * xs;
    if (k > 0) inner -= c_b_.transpose() * sol.bottomRows(k);
    Eigen::MatrixXd xb = inv_db_.asDiagonal() * inner;
    if (!xb.allFinite() || !xs.allFinite())
      throw Error(ErrorKind::SingularHessian, "fixed-effect Newton system is singular");
    x_alpha = alpha_big_ ? std::move(xb) : xs;
    x_gamma = alpha_big_ ? xs : std::move(xb);
  }

 private:
  bool alpha_big_;
  Eigen::VectorXd inv_db_;
  Eigen::MatrixXd m_bs_;
  Eigen::MatrixXd c_b_;
  Eigen::MatrixXd c_s_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

// ---------------------------------------------------------------------------
// Fixed-effect likelihood pieces (sum scale)

/// One value of the predetermined lag with its probability and the matching
/// conditional mean of the outcome. A set of states integrates the lag out of
/// the expected likelihood, given exogenous covariates and initial conditions.
struct ExpectedState {
  Eigen::MatrixXd lag;       // N x T lag values (unused without a lag)
  Eigen::MatrixXd response;  // N x T conditional mean of Y_it in this state
  Eigen::MatrixXd weight;    // N x T probability of the state
};

struct ExpectedLikelihood {
  std::vector<ExpectedState> states;
};

/// The likelihood as a weighted sum of per-cell link evaluations: a single
/// unit-weight layer for the sample likelihood, one layer per lag state for
/// the expected likelihood.
class Layers {
 public:
  Layers(const PanelData& data, const ModelSpec& spec, const ExpectedLikelihood* expected = nullptr) {
    if (!expected) {
      designs_.emplace_back(data, spec);
      weights_.push_back(nullptr);
      return;
    }
    if (expected->states.empty()) throw Error(ErrorKind::ConfigError, "expected likelihood has no states");
    for (const auto& st : expected->states) {
      if (st.response.rows() != data.n_units() || st.response.cols() != data.n_periods())
        throw Error(ErrorKind::ConfigError, "expected likelihood does not match the panel shape");
      Design d(data, spec);
      d.set_response(&st.response);
      if (st.lag.size() > 0) d.set_lag(&st.lag);
      designs_.push_back(d);
      weights_.push_back(&st.weight);
    }
  }

  std::size_t size() const { return designs_.size(); }
  const Design& design(std::size_t k) const { return designs_[k]; }
  double weight(std::size_t k, int i, int t) const { return weights_[k] ? (*weights_[k])(i, t) : 1.0; }
  int n() const { return designs_.front().n(); }
  int t() const { return designs_.front().t(); }

 private:
  std::vector<Design> designs_;
  std::vector<const Eigen::MatrixXd*> weights_;
};

struct FeBlock {
  double value = 0.0;
  Eigen::VectorXd g_alpha, g_gamma;
  Eigen::VectorXd d_alpha, d_gamma;  // diagonal second derivatives
  Eigen::MatrixXd m;                 // d2 / dalpha_i dgamma_t
  int clamp_hits = 0;
};

inline double fe_value(const Layers& ly, const Eigen::VectorXd& theta, const Eigen::VectorXd& alpha,
                       const Eigen::VectorXd& gamma) {
  double v = 0.0;
  for (std::size_t k = 0; k < ly.size(); ++k) {
    const Design& d = ly.design(k);
    for (int i = 0; i < d.n(); ++i)
      for (int t = 0; t < d.t(); ++t)
        v += ly.weight(k, i, t) * d.link(i, t, d.index(i, t, theta, alpha[i], gamma[t]).pi).value;
  }
  return v;
}

inline double fe_value(const Design& d, const Eigen::VectorXd& theta, const Eigen::VectorXd& alpha,
                       const Eigen::VectorXd& gamma) {
  double v = 0.0;
  for (int i = 0; i < d.n(); ++i)
    for (int t = 0; t < d.t(); ++t) v += d.link(i, t, d.index(i, t, theta, alpha[i], gamma[t]).pi).value;
  return v;
}

inline FeBlock fe_block(const Layers& ly, const Eigen::VectorXd& theta, const Eigen::VectorXd& alpha,
                        const Eigen::VectorXd& gamma) {
  const int n = ly.n(), t = ly.t();
  FeBlock b;
  b.g_alpha = Eigen::VectorXd::Zero(n);
  b.g_gamma = Eigen::VectorXd::Zero(t);
  b.d_alpha = Eigen::VectorXd::Zero(n);
  b.d_gamma = Eigen::VectorXd::Zero(t);
  b.m = Eigen::MatrixXd::Zero(n, t);
  for (std::size_t k = 0; k < ly.size(); ++k) {
    const Design& d = ly.design(k);
    for (int i = 0; i < n; ++i) {
      for (int s = 0; s < t; ++s) {
        const double w = ly.weight(k, i, s);
        const FeIndex idx = d.index(i, s, theta, alpha[i], gamma[s]);
        bool hit = false;
        const LinkDerivs l = d.link(i, s, idx.pi, &hit);
        b.clamp_hits += hit && w > 0.0;
        b.value += w * l.value;
        b.g_alpha[i] += w * l.d1 * idx.d_alpha;
        b.g_gamma[s] += w * l.d1 * idx.d_gamma;
        b.d_alpha[i] += w * l.d2 * idx.d_alpha * idx.d_alpha;
        b.d_gamma[s] += w * l.d2 * idx.d_gamma * idx.d_gamma;
        b.m(i, s) += w * l.d2 * idx.d_alpha * idx.d_gamma;
      }
    }
  }
  return b;
}

/// With expected_curvature the second derivatives are averaged over the
/// outcome given the index; gradients stay realized.
inline FeBlock fe_block(const Design& d, const Eigen::VectorXd& theta, const Eigen::VectorXd& alpha,
                        const Eigen::VectorXd& gamma, bool expected_curvature = false) {
  const int n = d.n(), t = d.t();
  FeBlock b;
  b.g_alpha = Eigen::VectorXd::Zero(n);
  b.g_gamma = Eigen::VectorXd::Zero(t);
  b.d_alpha = Eigen::VectorXd::Zero(n);
  b.d_gamma = Eigen::VectorXd::Zero(t);
  b.m.resize(n, t);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < t; ++s) {
      const FeIndex idx = d.index(i, s, theta, alpha[i], gamma[s]);
      bool hit = false;
      const LinkDerivs l = d.link(i, s, idx.pi, &hit);
      b.clamp_hits += hit;
      b.value += l.value;
      b.g_alpha[i] += l.d1 * idx.d_alpha;
      b.g_gamma[s] += l.d1 * idx.d_gamma;
      const double c = expected_curvature ? d.expected_curvature(idx.pi) : l.d2;
      b.d_alpha[i] += c * idx.d_alpha * idx.d_alpha;
      b.d_gamma[s] += c * idx.d_gamma * idx.d_gamma;
      b.m(i, s) = c * idx.d_alpha * idx.d_gamma;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Profiler

struct ProfileOptions {
  double tol = 1e-10;  // on the average-scale projected gradient
  int max_iter = 200;
  /// Starting point (alpha then gamma); projected onto the constraints.
  std::optional<Eigen::VectorXd> warm_start;
  /// Profiles the expected instead of the sample likelihood. Must outlive the call.
  const ExpectedLikelihood* expected = nullptr;
};

struct ProfileResult {
  Eigen::VectorXd alpha_hat;
  Eigen::VectorXd gamma_hat;
  double loglik_hat = 0.0;  // average over the NT cells
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  int clamp_hits = 0;
  std::vector<std::string> flags;

  Eigen::VectorXd phi() const {
    Eigen::VectorXd p(alpha_hat.size() + gamma_hat.size());
    p << alpha_hat, gamma_hat;
    return p;
  }
};

namespace detail {

inline double projected_norm(const FeBlock& b, const FeConstraints& c, double scale) {
  Eigen::VectorXd ga = b.g_alpha, gg = b.g_gamma;
  c.project_gradient(ga, gg);
  return std::max(ga.size() ? ga.cwiseAbs().maxCoeff() : 0.0, gg.size() ? gg.cwiseAbs().maxCoeff() : 0.0) /
         scale;
}

inline void check_diagonal(const FeBlock& b) {
  if ((b.d_alpha.array() >= -1e-12).any() || (b.d_gamma.array() >= -1e-12).any())
    throw Error(ErrorKind::SingularHessian, "fixed-effect Hessian has a flat direction");
}

}  // namespace detail

/// Maximizes (1/NT) sum l_it(theta, phi) over phi subject to the identification
/// constraints by damped Newton steps on the bordered system.
inline ProfileResult profile_fixed_effects(const PanelData& data, const ModelSpec& spec,
                                           const Eigen::VectorXd& theta, const ProfileOptions& opts = {}) {
  if (theta.size() != spec.theta_dim()) throw Error(ErrorKind::ConfigError, "theta has wrong dimension");
  if (!theta.allFinite()) throw Error(ErrorKind::NonFiniteIndex, "theta is not finite");
  const Layers design(data, spec, opts.expected);
  const int n = design.n(), t = design.t();
  const double scale = static_cast<double>(n) * t;
  const FeConstraints cons = fe_constraints(spec, n, t);

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n), gamma = Eigen::VectorXd::Zero(t);
  if (opts.warm_start && opts.warm_start->size() == n + t) {
    alpha = opts.warm_start->head(n);
    gamma = opts.warm_start->tail(t);
  }
  cons.project(alpha, gamma);

  FeBlock blk = fe_block(design, theta, alpha, gamma);
  double gnorm = detail::projected_norm(blk, cons, scale);
  double lambda = 1e-6;
  ProfileResult res;

  auto newton_step = [&](double lam, Eigen::VectorXd& da, Eigen::VectorXd& dg) {
    const double shift = lam * std::max(blk.d_alpha.cwiseAbs().maxCoeff(), blk.d_gamma.cwiseAbs().maxCoeff());
    const FeKkt kkt((blk.d_alpha.array() - shift).matrix(), (blk.d_gamma.array() - shift).matrix(), blk.m, cons);
    Eigen::MatrixXd xa, xg;
    kkt.solve(-blk.g_alpha, -blk.g_gamma, cons.residual(alpha, gamma), xa, xg);
    da = xa.col(0);
    dg = xg.col(0);
  };
  auto try_value = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& g) {
    try {
      return fe_value(design, theta, a, g);
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    detail::check_diagonal(blk);
    if (gnorm < opts.tol) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Eigen::VectorXd da, dg;
      newton_step(lambda, da, dg);
      const Eigen::VectorXd a1 = alpha + da, g1 = gamma + dg;
      const double v1 = try_value(a1, g1);
      if (v1 >= blk.value - 1e-13 * std::max(1.0, std::abs(blk.value))) {
        alpha = a1;
        gamma = g1;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
    blk = fe_block(design, theta, alpha, gamma);
    gnorm = detail::projected_norm(blk, cons, scale);
  }

  if (res.converged) {
    // One undamped polish step, kept only if it does not worsen the gradient.
    Eigen::VectorXd da, dg;
    newton_step(0.0, da, dg);
    const Eigen::VectorXd a1 = alpha + da, g1 = gamma + dg;
    try {
      FeBlock b1 = fe_block(design, theta, a1, g1);
      const double n1 = detail::projected_norm(b1, cons, scale);
      if (n1 <= gnorm && b1.value >= blk.value - 1e-13 * std::max(1.0, std::abs(blk.value))) {
        alpha = a1;
        gamma = g1;
        blk = std::move(b1);
        gnorm = n1;
      }
    } catch (const Error&) {
    }
  } else {
    res.flags.push_back("fixed-effect profiling did not converge");
  }

  res.alpha_hat = std::move(alpha);
  res.gamma_hat = std::move(gamma);
  res.loglik_hat = blk.value / scale;
  res.grad_norm = gnorm;
  res.iterations = iter;
  res.clamp_hits = blk.clamp_hits;
  if (blk.clamp_hits > 0) res.flags.push_back(std::to_string(blk.clamp_hits) + " linear index values clamped");
  return res;
}

/// Profiled value and its theta gradient. At the inner optimum the total
/// derivative equals the partial one, so no derivative of phi-hat is needed.
struct ProfiledValue {
  double value = 0.0;
  Eigen::VectorXd score;
  ProfileResult profile;
};

inline Eigen::VectorXd theta_score_at(const Design& d, const Eigen::VectorXd& theta, const Eigen::VectorXd& alpha,
                                      const Eigen::VectorXd& gamma) {
  const int p = d.theta_dim();
  Eigen::VectorXd score = Eigen::VectorXd::Zero(p), dpi(p), ca(p), cg(p);
  for (int i = 0; i < d.n(); ++i) {
    for (int t = 0; t < d.t(); ++t) {
      const FeIndex idx = d.index(i, t, theta, alpha[i], gamma[t]);
      const LinkDerivs l = d.link(i, t, idx.pi);
      d.index_theta(i, t, theta, alpha[i], gamma[t], dpi, ca, cg);
      score += l.d1 * dpi;
    }
  }
  return score / (static_cast<double>(d.n()) * d.t());
}

inline ProfiledValue profiled_value_and_score(const PanelData& data, const ModelSpec& spec,
                                              const Eigen::VectorXd& theta, ProfileOptions opts = {}) {
  ProfiledValue out;
  opts.expected = nullptr;
  out.profile = profile_fixed_effects(data, spec, theta, opts);
  out.value = out.profile.loglik_hat;
  const Design design(data, spec);
  out.score = theta_score_at(design, theta, out.profile.alpha_hat, out.profile.gamma_hat);
  return out;
}

/// Analytic theta Hessian of the profiled likelihood (average scale):
/// H_tt + H_tphi dphi/dtheta, with dphi/dtheta from the bordered system.
inline Eigen::MatrixXd profiled_hessian(const PanelData& data, const ModelSpec& spec, const Eigen::VectorXd& theta,
                                        const ProfileResult& prof) {
  const Design d(data, spec);
  const int n = d.n(), t = d.t(), p = d.theta_dim();
  const Eigen::VectorXd& alpha = prof.alpha_hat;
  const Eigen::VectorXd& gamma = prof.gamma_hat;
  const FeBlock blk = fe_block(d, theta, alpha, gamma);
  detail::check_diagonal(blk);
  Eigen::MatrixXd htt = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd hta = Eigen::MatrixXd::Zero(n, p), htg = Eigen::MatrixXd::Zero(t, p);
  Eigen::VectorXd dpi(p), ca(p), cg(p);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < t; ++s) {
      const FeIndex idx = d.index(i, s, theta, alpha[i], gamma[s]);
      const LinkDerivs l = d.link(i, s, idx.pi);
      d.index_theta(i, s, theta, alpha[i], gamma[s], dpi, ca, cg);
      htt.noalias() += l.d2 * dpi * dpi.transpose();
      hta.row(i) += (l.d2 * idx.d_alpha * dpi + l.d1 * ca).transpose();
      htg.row(s) += (l.d2 * idx.d_gamma * dpi + l.d1 * cg).transpose();
    }
  }
  const FeConstraints cons = fe_constraints(spec, n, t);
  const FeKkt kkt(blk.d_alpha, blk.d_gamma, blk.m, cons);
  Eigen::MatrixXd xa, xg;
  kkt.solve(-hta, -htg, Eigen::MatrixXd::Zero(cons.rows(), p), xa, xg);
  Eigen::MatrixXd h = htt + hta.transpose() * xa + htg.transpose() * xg;
  h = 0.5 * (h + h.transpose());
  return h / (static_cast<double>(n) * t);
}

}  // namespace twfe
