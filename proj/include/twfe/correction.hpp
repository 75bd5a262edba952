#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "twfe/error.hpp"
#include "twfe/model.hpp"
#include "twfe/numdiff.hpp"
#include "twfe/panel.hpp"
#include "twfe/profiler.hpp"

namespace twfe {

/// Expected fixed-effect scores E d_alpha l_it and E d_gamma l_it at
/// (theta, alpha, gamma), as two N x T matrices.
using CenterProvider = std::function<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>(
    const Design&, const Eigen::VectorXd& theta, const Eigen::VectorXd& alpha, const Eigen::VectorXd& gamma)>;

/// Center provider from a known expected likelihood: the expected score of
/// each cell is the state-weighted score with the state's conditional mean in
/// place of the outcome (the link scores are linear in y).
inline CenterProvider expected_score_center(ExpectedLikelihood expected) {
  auto e = std::make_shared<const ExpectedLikelihood>(std::move(expected));
  return [e](const Design& d, const Eigen::VectorXd& theta, const Eigen::VectorXd& alpha,
             const Eigen::VectorXd& gamma) {
    const Layers ly(d.data(), d.spec(), e.get());
    Eigen::MatrixXd ea = Eigen::MatrixXd::Zero(d.n(), d.t()), eg = Eigen::MatrixXd::Zero(d.n(), d.t());
    for (std::size_t k = 0; k < ly.size(); ++k) {
      const Design& dk = ly.design(k);
      for (int i = 0; i < d.n(); ++i) {
        for (int t = 0; t < d.t(); ++t) {
          const FeIndex idx = dk.index(i, t, theta, alpha[i], gamma[t]);
          const double d1 = ly.weight(k, i, t) * dk.link(i, t, idx.pi).d1;
          ea(i, t) += d1 * idx.d_alpha;
          eg(i, t) += d1 * idx.d_gamma;
        }
      }
    }
    return std::make_pair(std::move(ea), std::move(eg));
  };
}

struct CorrectionTerms {
  double b_hat = 0.0;
  double d_hat = 0.0;
  Eigen::MatrixXd s_alpha;  // N x T, row i is the unit-i score series
  Eigen::MatrixXd s_gamma;  // N x T, column t is the period-t score cross-section
  Eigen::VectorXd h_alpha;  // N
  Eigen::VectorXd h_gamma;  // T
  int tau_used = 0;
  bool expectations_dropped = true;

  /// b/T + d/N, the amount added to the profiled likelihood.
  double adjustment() const {
    return b_hat / static_cast<double>(s_alpha.cols()) + d_hat / static_cast<double>(s_alpha.rows());
  }
};

enum class TraceMode { full, diagonal };

struct CorrectionOptions {
  ProfileOptions profile;
  /// Overrides the spec's truncation lag when set.
  std::optional<int> tau;
  CenterProvider center;
  TraceMode trace_mode = TraceMode::full;
  int trace_cap = 4096;  // max N + T for the dense trace form
  /// Use the analytic Hessian of the profiled likelihood in place of the
  /// finite-difference Hessian of the corrected one.
  bool raw_hessian = false;
  double score_step = 1e-5;
  double hessian_step = 1e-4;
};

/// Sum over t of x_t x_s for |t - s| <= tau, i.e. x' W_tau x.
inline double windowed_quadratic(const Eigen::Ref<const Eigen::VectorXd>& x, int tau) {
  const auto t = x.size();
  double q = x.squaredNorm();
  for (int lag = 1; lag <= tau && lag < t; ++lag) q += 2.0 * x.head(t - lag).dot(x.tail(t - lag));
  return q;
}

inline CorrectionTerms correction_terms(const PanelData& data, const ModelSpec& spec, const Eigen::VectorXd& theta,
                                        const ProfileResult& profile, const CenterProvider& center = {},
                                        std::optional<int> tau_override = std::nullopt) {
  const Design d(data, spec);
  const int n = d.n(), t = d.t();
  const int tau = spec.strictly_exogenous ? 0 : tau_override.value_or(spec.tau);
  if (tau < 0) throw Error(ErrorKind::ConfigError, "tau must be non-negative");
  if (tau >= t)
    throw Error(ErrorKind::TauTooLarge, "tau = " + std::to_string(tau) + " requires more than " +
                                            std::to_string(t) + " periods");
  const Eigen::VectorXd& alpha = profile.alpha_hat;
  const Eigen::VectorXd& gamma = profile.gamma_hat;

  CorrectionTerms ct;
  ct.tau_used = tau;
  ct.expectations_dropped = !center;
  ct.s_alpha.resize(n, t);
  ct.s_gamma.resize(n, t);
  ct.h_alpha = Eigen::VectorXd::Zero(n);
  ct.h_gamma = Eigen::VectorXd::Zero(t);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < t; ++s) {
      const FeIndex idx = d.index(i, s, theta, alpha[i], gamma[s]);
      const LinkDerivs l = d.link(i, s, idx.pi);
      ct.s_alpha(i, s) = l.d1 * idx.d_alpha;
      ct.s_gamma(i, s) = l.d1 * idx.d_gamma;
      const double c = d.expected_curvature(idx.pi);
      ct.h_alpha[i] += c * idx.d_alpha * idx.d_alpha;
      ct.h_gamma[s] += c * idx.d_gamma * idx.d_gamma;
    }
  }
  ct.h_alpha /= t;
  ct.h_gamma /= n;
  if ((ct.h_alpha.array() >= 0.0).any() || (ct.h_gamma.array() >= 0.0).any())
    throw Error(ErrorKind::NonNegativeHessian, "average fixed-effect Hessian is not negative");
  if (center) {
    const auto [ea, eg] = center(d, theta, alpha, gamma);
    ct.s_alpha -= ea;
    ct.s_gamma -= eg;
  }

  double b = 0.0;
  for (int i = 0; i < n; ++i) b += windowed_quadratic(ct.s_alpha.row(i).transpose(), tau) / t / ct.h_alpha[i];
  ct.b_hat = 0.5 * b / n;
  double dd = 0.0;
  for (int s = 0; s < t; ++s) dd += ct.s_gamma.col(s).squaredNorm() / n / ct.h_gamma[s];
  ct.d_hat = 0.5 * dd / t;
  if (!std::isfinite(ct.b_hat) || !std::isfinite(ct.d_hat))
    throw Error(ErrorKind::NonNegativeHessian, "correction terms are not finite");
  return ct;
}

/// Everything computed on the way to the corrected likelihood at one theta.
struct CorrectedValue {
  double raw = 0.0;        // profiled likelihood
  double corrected = 0.0;  // raw + b/T + d/N
  ProfileResult profile;
  CorrectionTerms terms;
};

inline CorrectedValue corrected_evaluate(const PanelData& data, const ModelSpec& spec, const Eigen::VectorXd& theta,
                                         const CorrectionOptions& opts = {}) {
  CorrectedValue out;
  out.profile = profile_fixed_effects(data, spec, theta, opts.profile);
  out.raw = out.profile.loglik_hat;
  out.terms = correction_terms(data, spec, theta, out.profile, opts.center, opts.tau);
  out.corrected = out.raw + out.terms.adjustment();
  return out;
}

inline double corrected_loglik(const PanelData& data, const ModelSpec& spec, const Eigen::VectorXd& theta,
                               const CorrectionOptions& opts = {}) {
  return corrected_evaluate(data, spec, theta, opts).corrected;
}

/// Score outer-product matrix of the trace-form correction, (N+T) x (N+T),
/// in the scale of the average likelihood.
inline Eigen::MatrixXd trace_g_matrix(const CorrectionTerms& ct) {
  const auto n = ct.s_alpha.rows(), t = ct.s_alpha.cols();
  const double scale = 1.0 / (static_cast<double>(n) * n * t * t);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n + t, n + t);
  for (Eigen::Index i = 0; i < n; ++i)
    g(i, i) = windowed_quadratic(ct.s_alpha.row(i).transpose(), ct.tau_used) * scale;
  g.bottomRightCorner(t, t) = ct.s_gamma.transpose() * ct.s_gamma * scale;
  const Eigen::VectorXd row_sums = ct.s_alpha.rowwise().sum();
  const Eigen::MatrixXd cross = row_sums.asDiagonal() * ct.s_gamma * scale;
  g.topRightCorner(n, t) = cross;
  g.bottomLeftCorner(t, n) = cross.transpose();
  return g;
}

/// l-hat + tr(H^-1 G) / 2. Under identification constraints H^-1 is the
/// inverse on the constraint null space, i.e. the phi block of the inverse
/// bordered matrix. TraceMode::diagonal keeps only the diagonal of H.
inline double corrected_loglik_trace(const PanelData& data, const ModelSpec& spec, const Eigen::VectorXd& theta,
                                     const CorrectionOptions& opts = {}) {
  const int n = data.n_units(), t = data.n_periods();
  if (n + t > opts.trace_cap)
    throw Error(ErrorKind::ConfigError, "N + T exceeds the dense trace-form cap");
  const ProfileResult prof = profile_fixed_effects(data, spec, theta, opts.profile);
  const CorrectionTerms ct = correction_terms(data, spec, theta, prof, opts.center, opts.tau);
  const Design d(data, spec);
  const FeBlock blk = fe_block(d, theta, prof.alpha_hat, prof.gamma_hat, true);
  const double nt = static_cast<double>(n) * t;
  const Eigen::MatrixXd g = trace_g_matrix(ct);

  if (opts.trace_mode == TraceMode::diagonal) {
    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += g(i, i) / (blk.d_alpha[i] / nt);
    for (int s = 0; s < t; ++s) tr += g(n + s, n + s) / (blk.d_gamma[s] / nt);
    return prof.loglik_hat + 0.5 * tr;
  }

  detail::check_diagonal(blk);
  const FeConstraints cons = fe_constraints(spec, n, t);
  const FeKkt kkt(blk.d_alpha, blk.d_gamma, blk.m, cons);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n + t, n + t);
  Eigen::MatrixXd xa, xg;
  kkt.solve(eye.topRows(n), eye.bottomRows(t), Eigen::MatrixXd::Zero(cons.rows(), n + t), xa, xg);
  Eigen::MatrixXd hinv(n + t, n + t);
  hinv << xa, xg;
  hinv *= nt;  // inverse of the average-scale Hessian
  const double tr = (hinv.array() * g.transpose().array()).sum();
  return prof.loglik_hat + 0.5 * tr;
}

struct ScoreHessian {
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;
};

/// Finite-difference score of the corrected likelihood; the Hessian is the
/// symmetrized difference of that score, or the analytic profiled Hessian.
inline ScoreHessian corrected_score_and_hessian(const PanelData& data, const ModelSpec& spec,
                                                const Eigen::VectorXd& theta, const CorrectionOptions& opts = {}) {
  CorrectionOptions local = opts;
  const CorrectedValue centre = corrected_evaluate(data, spec, theta, opts);
  local.profile.warm_start = centre.profile.phi();
  auto f = [&](const Eigen::VectorXd& x) { return corrected_loglik(data, spec, x, local); };
  auto score = [&](const Eigen::VectorXd& x) { return numdiff::gradient(f, x, opts.score_step); };
  ScoreHessian out;
  out.score = score(theta);
  if (opts.raw_hessian)
    out.hessian = profiled_hessian(data, spec, theta, centre.profile);
  else
    out.hessian = numdiff::hessian_from_gradient(score, theta, opts.hessian_step);
  return out;
}

}  // namespace twfe
