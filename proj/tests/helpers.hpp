#pragma once

#include <cmath>
#include <random>
#include <string>

#include "twfe/twfe.hpp"

namespace twfe::testing {

inline std::string fixture(const std::string& name) { return std::string(TWFE_DATA_DIR) + "/" + name; }

inline Eigen::MatrixXd normal_matrix(std::mt19937_64& rng, int n, int t, double sd = 1.0) {
  std::normal_distribution<double> z(0.0, sd);
  Eigen::MatrixXd m(n, t);
  for (int i = 0; i < n; ++i)
    for (int s = 0; s < t; ++s) m(i, s) = z(rng);
  return m;
}

/// Panel with covariates x, u, v and, when lag is set, binary or gaussian
/// initial conditions. Binary outcomes are drawn at probability one half.
inline PanelData random_panel(std::mt19937_64& rng, int n, int t, Family fam, bool lag) {
  std::map<std::string, Eigen::MatrixXd> cov;
  cov["x"] = normal_matrix(rng, n, t);
  cov["u"] = normal_matrix(rng, n, t, 0.7);
  cov["v"] = normal_matrix(rng, n, t, 0.7);
  cov["u"].array() += 1.0;
  cov["v"].array() += 1.0;
  std::bernoulli_distribution coin(0.5);
  Eigen::MatrixXd y(n, t);
  Eigen::VectorXd y0;
  if (lag) y0.resize(n);
  if (fam == Family::gaussian) {
    y = normal_matrix(rng, n, t);
    if (lag) y0 = normal_matrix(rng, n, 1).col(0);
  } else {
    for (int i = 0; i < n; ++i)
      for (int s = 0; s < t; ++s) y(i, s) = coin(rng) ? 1.0 : 0.0;
    if (lag)
      for (int i = 0; i < n; ++i) y0[i] = coin(rng) ? 1.0 : 0.0;
  }
  return make_panel(std::move(y), std::move(y0), std::move(cov));
}

inline ModelSpec make_spec(Family fam, IndexForm form, bool lag) {
  ModelSpec s;
  s.family = fam;
  s.index_form = form;
  s.lag_order = lag ? 1 : 0;
  s.x_columns = {"x"};
  switch (form) {
    case IndexForm::covariate_loaded_fe:
      s.identification = Identification::none_needed;
      s.u_column = "u";
      s.v_column = "v";
      break;
    case IndexForm::shared_slope_fe:
      s.identification = Identification::sum_zero_both;
      s.u_column = "u";
      break;
    case IndexForm::slope_scale_fe:
      s.identification = Identification::mean_half;
      break;
    default:
      s.identification = Identification::sum_zero_both;
      break;
  }
  return s;
}

/// Gaussian panel AR(1) with two-way effects, no covariates.
inline std::pair<PanelData, ModelSpec> gaussian_ar1_panel(std::mt19937_64& rng, int n, int t, double rho = 0.5) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd a(n), g(t), y0(n);
  for (auto& v : a) v = 0.5 * z(rng);
  for (auto& v : g) v = 0.5 * z(rng);
  for (auto& v : y0) v = z(rng);
  Eigen::MatrixXd y(n, t);
  for (int i = 0; i < n; ++i) {
    double prev = y0[i];
    for (int s = 0; s < t; ++s) {
      y(i, s) = rho * prev + a[i] + g[s] + z(rng);
      prev = y(i, s);
    }
  }
  ModelSpec spec;
  spec.family = Family::gaussian;
  spec.index_form = IndexForm::additive_fe;
  spec.lag_order = 1;
  spec.identification = Identification::sum_zero_both;
  return {make_panel(std::move(y), std::move(y0)), spec};
}

/// Closed-form profile of the gaussian AR(1) with sum-zero effects and no
/// intercept: alpha_i = mean_t e_it - mean e, gamma_t = mean_i e_it - mean e,
/// with e = y - rho y_lag.
struct Ar1Profile {
  Eigen::VectorXd alpha, gamma;
  double loglik = 0.0;
  double score = 0.0;
};

inline Ar1Profile ar1_closed_form(const PanelData& d, double rho) {
  const Eigen::MatrixXd e = d.y - rho * d.y_lag;
  const double grand = e.mean();
  Ar1Profile out;
  out.alpha = e.rowwise().mean().array() - grand;
  out.gamma = e.colwise().mean().transpose().array() - grand;
  Eigen::MatrixXd r = e;
  r.colwise() -= out.alpha;
  r.rowwise() -= out.gamma.transpose();
  const double nt = static_cast<double>(e.size());
  out.loglik = -0.5 * std::log(2.0 * M_PI) - 0.5 * r.squaredNorm() / nt;
  out.score = (r.array() * d.y_lag.array()).sum() / nt;
  return out;
}

/// Maximizer of the closed-form profile. The residual is linear in rho.
inline double ar1_rho_hat(const PanelData& d) {
  const auto transform = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m;
    out.colwise() -= m.rowwise().mean();
    out.rowwise() -= m.colwise().mean();
    out.array() += 2.0 * m.mean();
    return out;
  };
  const Eigen::MatrixXd ty = transform(d.y), tl = transform(d.y_lag);
  return (ty.array() * tl.array()).sum() / tl.squaredNorm();
}

/// One simulated panel after sanitizing, with the truth restricted to match.
struct Draw {
  PanelData data;
  Truth truth;
  ModelSpec spec;
};

inline Draw sanitized_draw(const DgpDesign& design, std::uint64_t seed, int tau = 1) {
  auto [raw, truth] = generate(design, seed);
  Draw out;
  out.spec = design.model_spec(tau);
  auto [data, rep] = sanitize_panel(raw, out.spec);
  out.truth = rep.empty() ? std::move(truth) : subset_truth(truth, rep.kept_units, rep.kept_periods);
  out.data = std::move(data);
  return out;
}

/// Bundled fixtures with the model each one was simulated from.
struct Fixture {
  std::string file;
  ModelSpec spec;
};

inline std::vector<Fixture> fixtures() {
  std::vector<Fixture> out;
  {
    ModelSpec s;
    s.family = Family::probit;
    s.index_form = IndexForm::additive_fe;
    s.identification = Identification::sum_equal;
    s.lag_order = 1;
    s.x_columns = {"x"};
    out.push_back({"probit_dynamic.csv", s});
  }
  {
    ModelSpec s;
    s.family = Family::logit;
    s.index_form = IndexForm::covariate_loaded_fe;
    s.identification = Identification::none_needed;
    s.lag_order = 1;
    s.x_columns = {"x"};
    s.u_column = "u";
    s.v_column = "v";
    out.push_back({"logit_loaded.csv", s});
  }
  {
    ModelSpec s;
    s.family = Family::logit;
    s.index_form = IndexForm::additive_fe;
    s.identification = Identification::sum_equal;
    s.x_columns = {"x"};
    s.strictly_exogenous = true;
    out.push_back({"logit_static.csv", s});
  }
  {
    ModelSpec s;
    s.family = Family::gaussian;
    s.index_form = IndexForm::additive_fe;
    s.identification = Identification::sum_zero_both;
    s.lag_order = 1;
    out.push_back({"gaussian_ar1.csv", s});
  }
  {
    ModelSpec s;
    s.family = Family::probit;
    s.index_form = IndexForm::shared_slope_fe;
    s.identification = Identification::sum_zero_both;
    s.lag_order = 1;
    s.x_columns = {"x"};
    s.u_column = "u";
    out.push_back({"probit_shared.csv", s});
  }
  return out;
}

inline PanelData load_fixture(const Fixture& f) {
  ColumnRoles roles;
  roles.x = f.spec.x_columns;
  roles.u = f.spec.u_column;
  roles.v = f.spec.v_column;
  auto data = ingest(fixture(f.file), roles, f.spec.lag_order);
  return sanitize_panel(data, f.spec).first;
}

}  // namespace twfe::testing
