#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "twfe/distributions.hpp"
#include "twfe/error.hpp"
#include "twfe/panel.hpp"

namespace twfe {

/// Log-likelihood of one observation as a function of the linear index,
/// with its first two derivatives in pi.
struct LinkDerivs {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Evaluates the link at index pi for response y. For the binary families the
/// formulas are linear in y, so a success probability in (0,1) gives the
/// expected log-likelihood; for the gaussian family y may be the conditional mean.
inline LinkDerivs link_derivs(Family family, double pi, double y) {
  LinkDerivs out;
  switch (family) {
    case Family::logit: {
      const double p = dist::sigmoid(pi);
      const double q = dist::sigmoid(-pi);
      if (y == 1.0) {
        out.value = dist::log_sigmoid(pi);
      } else if (y == 0.0) {
        out.value = dist::log_sigmoid(-pi);
      } else {
        out.value = y * dist::log_sigmoid(pi) + (1.0 - y) * dist::log_sigmoid(-pi);
      }
      out.d1 = y - p;
      out.d2 = -p * q;
      break;
    }
    case Family::probit: {
      if (y == 1.0) {
        const double lam = dist::inv_mills(pi);
        out.value = dist::log_normal_cdf(pi);
        out.d1 = lam;
        out.d2 = -lam * (pi + lam);
      } else if (y == 0.0) {
        const double lam = dist::inv_mills(-pi);
        out.value = dist::log_normal_cdf(-pi);
        out.d1 = -lam;
        out.d2 = -lam * (lam - pi);
      } else {
        const double lp = dist::inv_mills(pi);
        const double lm = dist::inv_mills(-pi);
        out.value = y * dist::log_normal_cdf(pi) + (1.0 - y) * dist::log_normal_cdf(-pi);
        out.d1 = y * lp - (1.0 - y) * lm;
        out.d2 = -y * lp * (pi + lp) - (1.0 - y) * lm * (lm - pi);
      }
      break;
    }
    case Family::gaussian: {
      const double e = y - pi;
      out.value = -dist::kLogSqrt2Pi - 0.5 * e * e;
      out.d1 = e;
      out.d2 = -1.0;
      break;
    }
  }
  return out;
}

/// Success probability F(pi) of the binary link; the mean for the gaussian family.
inline double link_mean(Family family, double pi) {
  switch (family) {
    case Family::logit: return dist::sigmoid(pi);
    case Family::probit: return dist::normal_cdf(pi);
    case Family::gaussian: return pi;
  }
  return pi;
}

/// Index value with its derivatives in the two effects of the cell.
struct FeIndex {
  double pi = 0.0;
  double d_alpha = 0.0;
  double d_gamma = 0.0;
};

/// Resolves a ModelSpec against a panel: column lookups happen once, the
/// per-cell evaluations are allocation free.
class Design {
 public:
  Design(const PanelData& data, const ModelSpec& spec) : data_(&data), spec_(&spec) {
    if (spec.lag_order > 0) {
      if (!data.has_lag())
        throw Error(ErrorKind::ConfigError, "lagged outcome requested but panel has no initial conditions");
      w_.push_back(&data.y_lag);
    }
    for (const auto& x : spec.x_columns) w_.push_back(&data.covariate(x));
    if (uses_u(spec.index_form)) u_ = &data.covariate(spec.u_column);
    if (uses_v(spec.index_form)) v_ = &data.covariate(spec.v_column);
    response_ = &data.y;
  }

  const PanelData& data() const { return *data_; }
  const ModelSpec& spec() const { return *spec_; }
  int n() const { return data_->n_units(); }
  int t() const { return data_->n_periods(); }
  int theta_dim() const { return spec_->theta_dim(); }
  int covariate_dim() const { return static_cast<int>(w_.size()); }

  /// Replaces the outcome used by the link (e.g. success probabilities for
  /// expected-likelihood evaluation). The matrix must outlive the design.
  void set_response(const Eigen::MatrixXd* response) { response_ = response ? response : &data_->y; }

  /// Replaces the lagged outcome entering the index (no effect without a lag).
  void set_lag(const Eigen::MatrixXd* lag) {
    if (spec_->lag_order > 0) w_[0] = lag ? lag : &data_->y_lag;
  }
  double response(int i, int t) const { return (*response_)(i, t); }

  double w(int k, int i, int t) const { return (*w_[k])(i, t); }

  FeIndex index(int i, int t, const Eigen::VectorXd& theta, double a, double g) const {
    double base = 0.0;
    for (std::size_t k = 0; k < w_.size(); ++k) base += theta[static_cast<Eigen::Index>(k)] * (*w_[k])(i, t);
    FeIndex out;
    switch (spec_->index_form) {
      case IndexForm::additive_fe:
        out = {base + a + g, 1.0, 1.0};
        break;
      case IndexForm::slope_shift_fe: {
        double s = 0.0;
        for (const auto* m : w_) s += (*m)(i, t);
        out = {base + (a + g) * s, s, s};
        break;
      }
      case IndexForm::slope_scale_fe:
        out = {base * (a + g), base, base};
        break;
      case IndexForm::covariate_loaded_fe: {
        const double u = (*u_)(i, t);
        const double v = (*v_)(i, t);
        out = {base + a * u + g * v, u, v};
        break;
      }
      case IndexForm::shared_slope_fe: {
        const double u = (*u_)(i, t);
        const double lambda = theta[theta.size() - 1];
        out = {base + (lambda + a + g) * u, u, u};
        break;
      }
    }
    if (!std::isfinite(out.pi))
      throw Error(ErrorKind::NonFiniteIndex, "non-finite linear index at unit " + std::to_string(i) +
                                                 ", period " + std::to_string(t));
    return out;
  }

  /// Derivative of pi in theta, and the cross derivatives d2 pi / dtheta d(alpha|gamma).
  void index_theta(int i, int t, [[maybe_unused]] const Eigen::VectorXd& theta, double a, double g, Eigen::VectorXd& dpi,
                   Eigen::VectorXd& cross_alpha, Eigen::VectorXd& cross_gamma) const {
    const int p = theta_dim();
    dpi.setZero(p);
    cross_alpha.setZero(p);
    cross_gamma.setZero(p);
    const int pw = covariate_dim();
    for (int k = 0; k < pw; ++k) dpi[k] = (*w_[k])(i, t);
    switch (spec_->index_form) {
      case IndexForm::slope_scale_fe:
        for (int k = 0; k < pw; ++k) {
          cross_alpha[k] = dpi[k];
          cross_gamma[k] = dpi[k];
          dpi[k] *= (a + g);
        }
        break;
      case IndexForm::shared_slope_fe:
        dpi[p - 1] = (*u_)(i, t);
        break;
      default:
        break;
    }
  }

  /// Clamps binary-family indices; returns true when the bound was hit.
  bool clamp(double& pi) const {
    if (!spec_->binary()) return false;
    const double b = spec_->index_bound;
    if (pi > b) {
      pi = b;
      return true;
    }
    if (pi < -b) {
      pi = -b;
      return true;
    }
    return false;
  }

  LinkDerivs link(int i, int t, double pi, bool* clamped = nullptr) const {
    const bool hit = clamp(pi);
    if (clamped) *clamped = hit;
    return link_derivs(spec_->family, pi, response(i, t));
  }

  /// Second derivative in pi averaged over the outcome given the index.
  /// Equals the observed one for logit and gaussian.
  double expected_curvature(double pi) const {
    clamp(pi);
    return link_derivs(spec_->family, pi, link_mean(spec_->family, pi)).d2;
  }

 private:
  const PanelData* data_;
  const ModelSpec* spec_;
  std::vector<const Eigen::MatrixXd*> w_;
  const Eigen::MatrixXd* u_ = nullptr;
  const Eigen::MatrixXd* v_ = nullptr;
  const Eigen::MatrixXd* response_ = nullptr;
};

/// Observation-level derivatives in (theta, alpha_i, gamma_t). Derivatives in
/// other units' or periods' effects are structurally zero and not stored.
struct DerivBundle {
  double value = 0.0;
  Eigen::VectorXd grad_theta;
  double grad_alpha = 0.0;
  double grad_gamma = 0.0;
  double h_alpha_alpha = 0.0;
  double h_gamma_gamma = 0.0;
  double h_alpha_gamma = 0.0;
  Eigen::VectorXd h_theta_alpha;
  Eigen::VectorXd h_theta_gamma;
  Eigen::MatrixXd h_theta_theta;
  bool clamped = false;
};

namespace detail {

inline void check_cell(const PanelData& data, int i, int t) {
  if (i < 0 || i >= data.n_units() || t < 0 || t >= data.n_periods())
    throw Error(ErrorKind::ConfigError, "cell outside panel");
}

inline void check_outcome(const ModelSpec& spec, double y) {
  if (spec.binary() && y != 0.0 && y != 1.0)
    throw Error(ErrorKind::BadFamilyData, "binary family requires y in {0,1}");
}

}  // namespace detail

/// log f(Y_it; theta, alpha_i, gamma_t).
inline double obs_loglik(const ModelSpec& spec, const PanelData& data, int i, int t,
                         const Eigen::VectorXd& theta, double alpha, double gamma) {
  detail::check_cell(data, i, t);
  detail::check_outcome(spec, data.y(i, t));
  const Design design(data, spec);
  const FeIndex idx = design.index(i, t, theta, alpha, gamma);
  return design.link(i, t, idx.pi).value;
}

inline DerivBundle obs_derivs(const ModelSpec& spec, const PanelData& data, int i, int t,
                              const Eigen::VectorXd& theta, double alpha, double gamma, int order = 2) {
  detail::check_cell(data, i, t);
  detail::check_outcome(spec, data.y(i, t));
  const Design design(data, spec);
  const FeIndex idx = design.index(i, t, theta, alpha, gamma);
  DerivBundle b;
  const LinkDerivs l = design.link(i, t, idx.pi, &b.clamped);
  Eigen::VectorXd dpi, ca, cg;
  design.index_theta(i, t, theta, alpha, gamma, dpi, ca, cg);
  b.value = l.value;
  b.grad_theta = l.d1 * dpi;
  b.grad_alpha = l.d1 * idx.d_alpha;
  b.grad_gamma = l.d1 * idx.d_gamma;
  if (order >= 2) {
    b.h_alpha_alpha = l.d2 * idx.d_alpha * idx.d_alpha;
    b.h_gamma_gamma = l.d2 * idx.d_gamma * idx.d_gamma;
    b.h_alpha_gamma = l.d2 * idx.d_alpha * idx.d_gamma;
    b.h_theta_alpha = l.d2 * idx.d_alpha * dpi + l.d1 * ca;
    b.h_theta_gamma = l.d2 * idx.d_gamma * dpi + l.d1 * cg;
    b.h_theta_theta = l.d2 * dpi * dpi.transpose();
  }
  return b;
}

}  // namespace twfe
