#pragma once

#include <optional>
#include <string_view>

#include <Eigen/Dense>

#include "twfe/correction.hpp"
#include "twfe/error.hpp"
#include "twfe/infeasible.hpp"
#include "twfe/numdiff.hpp"
#include "twfe/profiler.hpp"

namespace twfe {

enum class ObjectiveKind { raw, corrected, infeasible };

inline std::string_view to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::raw: return "raw";
    case ObjectiveKind::corrected: return "corrected";
    case ObjectiveKind::infeasible: return "infeasible";
  }
  return "?";
}

inline ObjectiveKind parse_objective(std::string_view s) {
  if (s == "raw") return ObjectiveKind::raw;
  if (s == "corrected") return ObjectiveKind::corrected;
  if (s == "infeasible") return ObjectiveKind::infeasible;
  throw Error(ErrorKind::ConfigError, "unknown objective '" + std::string(s) + "'");
}

/// One of the three likelihoods as a function of theta. Keeps the last
/// profiled effects as the warm start for the next call, so an instance is
/// not safe to share between threads.
class Objective {
 public:
  Objective(const PanelData& data, const ModelSpec& spec, ObjectiveKind kind, CorrectionOptions opts = {},
            const Truth* truth = nullptr)
      : data_(&data), spec_(&spec), kind_(kind), opts_(std::move(opts)), truth_(truth) {
    if (kind == ObjectiveKind::infeasible && !truth)
      throw Error(ErrorKind::ConfigError, "infeasible objective requires the simulation truth");
  }

  ObjectiveKind kind() const { return kind_; }
  const PanelData& data() const { return *data_; }
  const ModelSpec& spec() const { return *spec_; }
  const CorrectionOptions& options() const { return opts_; }
  double nt() const { return static_cast<double>(data_->n_units()) * data_->n_periods(); }
  const ProfileResult& last_profile() const { return last_; }

  double value(const Eigen::VectorXd& theta) {
    ProfileOptions po = opts_.profile;
    if (warm_) po.warm_start = warm_;
    double v = 0.0;
    switch (kind_) {
      case ObjectiveKind::raw:
        last_ = profile_fixed_effects(*data_, *spec_, theta, po);
        v = last_.loglik_hat;
        break;
      case ObjectiveKind::corrected: {
        CorrectionOptions co = opts_;
        co.profile = po;
        CorrectedValue cv = corrected_evaluate(*data_, *spec_, theta, co);
        last_ = std::move(cv.profile);
        v = cv.corrected;
        break;
      }
      case ObjectiveKind::infeasible: {
        InfeasibleValue iv = infeasible_loglik(*truth_, *data_, *spec_, theta, po);
        last_ = std::move(iv.profile);
        v = iv.value;
        break;
      }
    }
    if (!last_.converged)
      throw Error(ErrorKind::NoConvergence, "fixed-effect profiling did not converge");
    warm_ = last_.phi();
    return v;
  }

  Eigen::VectorXd score(const Eigen::VectorXd& theta) {
    if (kind_ == ObjectiveKind::raw) {
      value(theta);
      const Design d(*data_, *spec_);
      return theta_score_at(d, theta, last_.alpha_hat, last_.gamma_hat);
    }
    return numdiff::gradient([this](const Eigen::VectorXd& x) { return value(x); }, theta, opts_.score_step);
  }

  /// Analytic Hessian of the profiled likelihood.
  Eigen::MatrixXd raw_hessian(const Eigen::VectorXd& theta) {
    ProfileOptions po = opts_.profile;
    if (warm_) po.warm_start = warm_;
    const ProfileResult prof = profile_fixed_effects(*data_, *spec_, theta, po);
    if (!prof.converged) throw Error(ErrorKind::NoConvergence, "fixed-effect profiling did not converge");
    warm_ = prof.phi();
    return profiled_hessian(*data_, *spec_, theta, prof);
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) {
    if (kind_ == ObjectiveKind::raw || (kind_ == ObjectiveKind::corrected && opts_.raw_hessian))
      return raw_hessian(theta);
    return numdiff::hessian_from_gradient([this](const Eigen::VectorXd& x) { return score(x); }, theta,
                                          opts_.hessian_step);
  }

 private:
  const PanelData* data_;
  const ModelSpec* spec_;
  ObjectiveKind kind_;
  CorrectionOptions opts_;
  const Truth* truth_;
  std::optional<Eigen::VectorXd> warm_;
  ProfileResult last_;
};

}  // namespace twfe
