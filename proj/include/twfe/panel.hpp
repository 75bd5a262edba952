#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "twfe/error.hpp"

namespace twfe {

enum class Family { probit, logit, gaussian };

/// How the unit and period effects enter the linear index.
///   additive_fe          pi = w'theta + a_i + g_t
///   slope_shift_fe       pi = w'(theta + a_i + g_t)
///   slope_scale_fe       pi = w'theta (a_i + g_t)
///   covariate_loaded_fe  pi = w'theta + a_i U + g_t V
///   shared_slope_fe      pi = w'theta + (lambda + a_i + g_t) U
/// where w is the lagged outcome (if any) followed by the X columns.
enum class IndexForm { additive_fe, slope_shift_fe, slope_scale_fe, covariate_loaded_fe, shared_slope_fe };

enum class Identification { sum_zero_both, sum_equal, mean_half, none_needed };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::probit: return "probit";
    case Family::logit: return "logit";
    case Family::gaussian: return "gaussian";
  }
  return "?";
}

inline std::string_view to_string(IndexForm f) {
  switch (f) {
    case IndexForm::additive_fe: return "additive_fe";
    case IndexForm::slope_shift_fe: return "slope_shift_fe";
    case IndexForm::slope_scale_fe: return "slope_scale_fe";
    case IndexForm::covariate_loaded_fe: return "covariate_loaded_fe";
    case IndexForm::shared_slope_fe: return "shared_slope_fe";
  }
  return "?";
}

inline std::string_view to_string(Identification f) {
  switch (f) {
    case Identification::sum_zero_both: return "sum_zero_both";
    case Identification::sum_equal: return "sum_equal";
    case Identification::mean_half: return "mean_half";
    case Identification::none_needed: return "none_needed";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "probit") return Family::probit;
  if (s == "logit") return Family::logit;
  if (s == "gaussian" || s == "gaussian-known-variance") return Family::gaussian;
  throw Error(ErrorKind::ConfigError, "unknown family '" + std::string(s) + "'");
}

inline IndexForm parse_index_form(std::string_view s) {
  for (auto f : {IndexForm::additive_fe, IndexForm::slope_shift_fe, IndexForm::slope_scale_fe,
                 IndexForm::covariate_loaded_fe, IndexForm::shared_slope_fe})
    if (s == to_string(f)) return f;
  throw Error(ErrorKind::ConfigError, "unknown index form '" + std::string(s) + "'");
}

inline Identification parse_identification(std::string_view s) {
  for (auto f : {Identification::sum_zero_both, Identification::sum_equal, Identification::mean_half,
                 Identification::none_needed})
    if (s == to_string(f)) return f;
  throw Error(ErrorKind::ConfigError, "unknown identification '" + std::string(s) + "'");
}

struct ModelSpec {
  Family family = Family::logit;
  IndexForm index_form = IndexForm::additive_fe;
  int lag_order = 0;
  Identification identification = Identification::sum_equal;
  /// Right-hand sides of the identification constraints. Unset means the
  /// conventional values: sums zero, or means one half for mean_half.
  std::optional<std::array<double, 2>> identification_constants;
  int tau = 1;
  /// Strictly exogenous regressors: the truncation window collapses to tau = 0.
  bool strictly_exogenous = false;
  std::vector<std::string> x_columns;
  std::string u_column;
  std::string v_column;
  /// Binary-family linear indices are clamped to [-index_bound, index_bound].
  double index_bound = 35.0;

  int covariate_dim() const { return lag_order + static_cast<int>(x_columns.size()); }

  int theta_dim() const {
    return covariate_dim() + (index_form == IndexForm::shared_slope_fe ? 1 : 0);
  }

  bool binary() const { return family != Family::gaussian; }

  int effective_tau() const { return strictly_exogenous ? 0 : tau; }

  std::array<double, 2> constants() const {
    if (identification_constants) return *identification_constants;
    if (identification == Identification::mean_half) return {0.5, 0.5};
    return {0.0, 0.0};
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    if (lag_order > 0) names.emplace_back("rho");
    for (const auto& x : x_columns) names.push_back(x);
    if (index_form == IndexForm::shared_slope_fe) names.emplace_back("lambda");
    return names;
  }
};

/// Balanced N x T panel. y_lag holds the lagged outcome of every cell, so
/// dropping periods keeps the correct lag for the periods that remain.
struct PanelData {
  Eigen::MatrixXd y;
  Eigen::VectorXd y_init;
  Eigen::MatrixXd y_lag;
  std::map<std::string, Eigen::MatrixXd> covariates;
  std::vector<std::string> unit_labels;
  std::vector<std::string> time_labels;

  int n_units() const { return static_cast<int>(y.rows()); }
  int n_periods() const { return static_cast<int>(y.cols()); }
  bool has_lag() const { return y_lag.size() > 0; }

  const Eigen::MatrixXd& covariate(const std::string& name) const {
    auto it = covariates.find(name);
    if (it == covariates.end())
      throw Error(ErrorKind::ConfigError, "covariate '" + name + "' not present in panel");
    return it->second;
  }
};

/// Builds a panel; when y_init is non-empty the lag matrix is [y_init, y(:, 0..T-2)].
inline PanelData make_panel(Eigen::MatrixXd y, Eigen::VectorXd y_init = {},
                            std::map<std::string, Eigen::MatrixXd> covariates = {}) {
  PanelData d;
  const auto n = y.rows();
  const auto t = y.cols();
  if (y_init.size() > 0) {
    if (y_init.size() != n)
      throw Error(ErrorKind::ConfigError, "initial conditions length does not match unit count");
    d.y_lag.resize(n, t);
    d.y_lag.col(0) = y_init;
    if (t > 1) d.y_lag.rightCols(t - 1) = y.leftCols(t - 1);
  }
  d.y = std::move(y);
  d.y_init = std::move(y_init);
  d.covariates = std::move(covariates);
  for (Eigen::Index i = 0; i < n; ++i) d.unit_labels.push_back(std::to_string(i + 1));
  for (Eigen::Index s = 0; s < t; ++s) d.time_labels.push_back(std::to_string(s + 1));
  return d;
}

inline PanelData subset_panel(const PanelData& d, const std::vector<int>& units,
                              const std::vector<int>& periods) {
  auto take = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(units.size(), periods.size());
    for (std::size_t a = 0; a < units.size(); ++a)
      for (std::size_t b = 0; b < periods.size(); ++b) out(a, b) = m(units[a], periods[b]);
    return out;
  };
  PanelData out;
  out.y = take(d.y);
  if (d.has_lag()) out.y_lag = take(d.y_lag);
  if (d.y_init.size() > 0) {
    out.y_init.resize(units.size());
    for (std::size_t a = 0; a < units.size(); ++a) out.y_init(a) = d.y_init(units[a]);
  }
  for (const auto& [name, m] : d.covariates) out.covariates[name] = take(m);
  for (int u : units) out.unit_labels.push_back(d.unit_labels[u]);
  for (int p : periods) out.time_labels.push_back(d.time_labels[p]);
  return out;
}

inline bool uses_u(IndexForm f) {
  return f == IndexForm::covariate_loaded_fe || f == IndexForm::shared_slope_fe;
}
inline bool uses_v(IndexForm f) { return f == IndexForm::covariate_loaded_fe; }

/// Checks the spec against itself and against the data; throws on violation.
inline void validate(const PanelData& data, const ModelSpec& spec) {
  if (spec.lag_order < 0 || spec.lag_order > 1)
    throw Error(ErrorKind::ConfigError, "lag_order must be 0 or 1");
  if (spec.tau < 0) throw Error(ErrorKind::ConfigError, "tau must be non-negative");
  if (spec.theta_dim() < 1) throw Error(ErrorKind::ConfigError, "theta must have at least one component");
  if ((spec.identification == Identification::none_needed) !=
      (spec.index_form == IndexForm::covariate_loaded_fe))
    throw Error(ErrorKind::ConfigError,
                "identification none_needed is required for, and only valid with, covariate_loaded_fe");
  if (uses_u(spec.index_form) && spec.u_column.empty())
    throw Error(ErrorKind::ConfigError, "index form requires a U column");
  if (uses_v(spec.index_form)) {
    if (spec.v_column.empty()) throw Error(ErrorKind::ConfigError, "covariate_loaded_fe requires a V column");
    if (spec.v_column == spec.u_column)
      throw Error(ErrorKind::ConfigError, "covariate_loaded_fe requires distinct U and V columns");
  }
  const int n = data.n_units();
  const int t = data.n_periods();
  if (n < 1 || t < 1) throw Error(ErrorKind::EmptyPanel, "panel has no cells");
  if (spec.lag_order > 0 && !data.has_lag())
    throw Error(ErrorKind::ConfigError, "lagged outcome requested but panel has no initial conditions");
  auto check_shape = [&](const Eigen::MatrixXd& m, const std::string& what) {
    if (m.rows() != n || m.cols() != t)
      throw Error(ErrorKind::ConfigError, what + " is not N x T");
    if (!m.allFinite()) throw Error(ErrorKind::NonNumericField, what + " has non-finite cells");
  };
  check_shape(data.y, "outcome");
  if (data.has_lag()) check_shape(data.y_lag, "lagged outcome");
  for (const auto& x : spec.x_columns) check_shape(data.covariate(x), "covariate '" + x + "'");
  if (uses_u(spec.index_form)) check_shape(data.covariate(spec.u_column), "U column");
  if (uses_v(spec.index_form)) check_shape(data.covariate(spec.v_column), "V column");
  if (spec.binary()) {
    auto binary = [](const Eigen::MatrixXd& m) {
      return ((m.array() == 0.0) || (m.array() == 1.0)).all();
    };
    if (!binary(data.y)) throw Error(ErrorKind::BadFamilyData, "binary family requires y in {0,1}");
    if (data.has_lag() && spec.lag_order > 0 && !binary(data.y_lag))
      throw Error(ErrorKind::BadFamilyData, "binary family requires lagged y in {0,1}");
  }
}

}  // namespace twfe
