#pragma once

#include <vector>

#include <Eigen/Dense>

#include "twfe/error.hpp"
#include "twfe/model.hpp"
#include "twfe/panel.hpp"
#include "twfe/profiler.hpp"

namespace twfe {

/// Data-generating truth kept by the simulator.
struct Truth {
  Eigen::VectorXd theta0;
  Eigen::VectorXd alpha0;  // N
  Eigen::VectorXd gamma0;  // T
  /// Conditional mean of Y_it given the realized past: F(pi_it) for binary
  /// families, pi_it for the gaussian family.
  Eigen::MatrixXd mean;
  Eigen::MatrixXd innovations;  // uniforms for binary families, errors for gaussian
  /// Expected likelihood given exogenous covariates and initial conditions.
  ExpectedLikelihood expected;
};

inline Truth subset_truth(const Truth& tr, const std::vector<int>& units, const std::vector<int>& periods) {
  Truth out;
  out.theta0 = tr.theta0;
  out.alpha0.resize(units.size());
  out.gamma0.resize(periods.size());
  for (std::size_t a = 0; a < units.size(); ++a) out.alpha0[a] = tr.alpha0[units[a]];
  for (std::size_t b = 0; b < periods.size(); ++b) out.gamma0[b] = tr.gamma0[periods[b]];
  auto take = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd o(units.size(), periods.size());
    for (std::size_t a = 0; a < units.size(); ++a)
      for (std::size_t b = 0; b < periods.size(); ++b) o(a, b) = m(units[a], periods[b]);
    return o;
  };
  out.mean = take(tr.mean);
  out.innovations = take(tr.innovations);
  for (const auto& st : tr.expected.states)
    out.expected.states.push_back({st.lag.size() > 0 ? take(st.lag) : Eigen::MatrixXd(), take(st.response),
                                   take(st.weight)});
  return out;
}

struct InfeasibleValue {
  double value = 0.0;     // realized-data likelihood at phi(theta)
  double expected = 0.0;  // expected likelihood at phi(theta)
  ProfileResult profile;  // phi(theta)
};

/// Profiles the pseudo-true effects phi(theta) from the expected likelihood,
/// then evaluates the realized-data likelihood there.
inline InfeasibleValue infeasible_loglik(const Truth& truth, const PanelData& data, const ModelSpec& spec,
                                         const Eigen::VectorXd& theta, ProfileOptions opts = {}) {
  if (truth.mean.rows() != data.n_units() || truth.mean.cols() != data.n_periods())
    throw Error(ErrorKind::ConfigError, "truth does not match the panel shape");
  opts.expected = &truth.expected;
  InfeasibleValue out;
  out.profile = profile_fixed_effects(data, spec, theta, opts);
  out.expected = out.profile.loglik_hat;
  const Design d(data, spec);
  out.value = fe_value(d, theta, out.profile.alpha_hat, out.profile.gamma_hat) /
              (static_cast<double>(data.n_units()) * data.n_periods());
  return out;
}

}  // namespace twfe
