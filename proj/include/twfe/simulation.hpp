#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "twfe/error.hpp"
#include "twfe/infeasible.hpp"
#include "twfe/inference.hpp"
#include "twfe/model.hpp"
#include "twfe/objective.hpp"
#include "twfe/panel.hpp"
#include "twfe/profiler.hpp"

namespace twfe {

// ---------------------------------------------------------------------------
// Designs

enum class EffectLaw { normal, zeros };
enum class CovariateLaw { ar1, iid };

struct DgpDesign {
  std::string name;
  Family family = Family::logit;
  IndexForm index_form = IndexForm::additive_fe;
  bool dynamic = true;
  bool has_x = true;
  int n = 56;
  int t = 14;
  EffectLaw effect_law = EffectLaw::normal;
  CovariateLaw covariate_law = CovariateLaw::ar1;
  Identification identification = Identification::sum_equal;
  /// Recentre the drawn effects so they satisfy the identification exactly.
  bool center_effects = false;
  Eigen::VectorXd theta0;

  ModelSpec model_spec(int tau = 1) const {
    ModelSpec s;
    s.family = family;
    s.index_form = index_form;
    s.lag_order = dynamic ? 1 : 0;
    s.identification = identification;
    s.tau = tau;
    s.strictly_exogenous = !dynamic;
    if (has_x) s.x_columns = {"x"};
    if (uses_u(index_form)) s.u_column = "u";
    if (uses_v(index_form)) s.v_column = "v";
    return s;
  }
};

inline std::vector<std::string> design_names() {
  return {"logit-ds-dynamic",  "logit-ds-static",  "probit-ds-dynamic", "probit-ds-static",
          "logit-ae-dynamic",  "logit-ae-static",  "probit-ae-dynamic", "probit-ae-static",
          "logit-hs-dynamic",  "logit-hs-static",  "probit-hs-dynamic", "probit-hs-static",
          "gaussian-ar1"};
}

/// Named designs. "ds": pi = rho Y_{t-1} + beta X + alpha_i U + gamma_t V;
/// "ae": additive effects; "hs": (lambda + alpha_i + gamma_t) U with zero
/// true effects and iid covariates; "gaussian-ar1": Y = rho Y_{t-1} + alpha_i + gamma_t + e.
inline DgpDesign design_from_name(std::string_view name, int n, int t) {
  DgpDesign d;
  d.name = std::string(name);
  d.n = n;
  d.t = t;
  if (name == "gaussian-ar1") {
    d.family = Family::gaussian;
    d.index_form = IndexForm::additive_fe;
    d.dynamic = true;
    d.has_x = false;
    d.identification = Identification::sum_zero_both;
    d.center_effects = true;
    d.theta0 = Eigen::VectorXd::Constant(1, 0.5);
    return d;
  }
  auto parts = [&] {
    std::vector<std::string> out;
    std::string cur;
    for (char c : name) {
      if (c == '-') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    out.push_back(cur);
    return out;
  }();
  if (parts.size() != 3) throw Error(ErrorKind::ConfigError, "unknown design '" + std::string(name) + "'");
  if (parts[0] == "logit") d.family = Family::logit;
  else if (parts[0] == "probit") d.family = Family::probit;
  else throw Error(ErrorKind::ConfigError, "unknown design family '" + parts[0] + "'");
  if (parts[2] == "dynamic") d.dynamic = true;
  else if (parts[2] == "static") d.dynamic = false;
  else throw Error(ErrorKind::ConfigError, "unknown design dynamics '" + parts[2] + "'");
  if (parts[1] == "ds") {
    d.index_form = IndexForm::covariate_loaded_fe;
    d.identification = Identification::none_needed;
  } else if (parts[1] == "ae") {
    d.index_form = IndexForm::additive_fe;
    d.identification = Identification::sum_equal;
  } else if (parts[1] == "hs") {
    d.index_form = IndexForm::shared_slope_fe;
    d.identification = Identification::sum_zero_both;
    d.effect_law = EffectLaw::zeros;
    d.covariate_law = CovariateLaw::iid;
  } else {
    throw Error(ErrorKind::ConfigError, "unknown design '" + std::string(name) + "'");
  }
  std::vector<double> th;
  if (d.dynamic) th.push_back(0.5);
  th.push_back(1.0);
  if (d.index_form == IndexForm::shared_slope_fe) th.push_back(1.0);
  d.theta0 = Eigen::Map<Eigen::VectorXd>(th.data(), static_cast<Eigen::Index>(th.size()));
  return d;
}

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of stream k under a master seed; independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k) {
  return splitmix64(splitmix64(master) ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
}

// ---------------------------------------------------------------------------
// Generation

inline std::pair<PanelData, Truth> generate(const DgpDesign& design, std::uint64_t seed) {
  const int n = design.n, t = design.t;
  if (n < 1 || t < 1) throw Error(ErrorKind::ConfigError, "design needs N, T >= 1");
  const ModelSpec spec = design.model_spec();
  if (design.theta0.size() != spec.theta_dim())
    throw Error(ErrorKind::ConfigError, "theta0 does not match the design");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double effect_mean = design.index_form == IndexForm::slope_scale_fe ? 0.5 : 0.0;
  Eigen::VectorXd alpha0(n), gamma0(t);
  double gamma00 = effect_mean;
  if (design.effect_law == EffectLaw::normal) {
    for (int i = 0; i < n; ++i) alpha0[i] = effect_mean + 0.25 * std_normal(rng);
    for (int s = 0; s < t; ++s) gamma0[s] = effect_mean + 0.25 * std_normal(rng);
    gamma00 = effect_mean + 0.25 * std_normal(rng);
  } else {
    alpha0.setConstant(effect_mean);
    gamma0.setConstant(effect_mean);
  }
  if (design.center_effects) {
    alpha0.array() -= alpha0.mean();
    gamma0.array() -= gamma0.mean();
    gamma00 = 0.0;
  }

  // Covariates over periods 0..T; column 0 is the pre-sample period.
  auto covariate = [&]() {
    Eigen::MatrixXd z(n, t + 1);
    const double sd_half = std::sqrt(0.5);
    if (design.covariate_law == CovariateLaw::iid) {
      for (int i = 0; i < n; ++i)
        for (int s = 0; s <= t; ++s) z(i, s) = sd_half * std_normal(rng);
      return z;
    }
    for (int i = 0; i < n; ++i) z(i, 0) = std_normal(rng);
    for (int s = 1; s <= t; ++s)
      for (int i = 0; i < n; ++i) z(i, s) = 0.5 * z(i, s - 1) + alpha0[i] + gamma0[s - 1] + sd_half * std_normal(rng);
    return z;
  };
  std::map<std::string, Eigen::MatrixXd> full;
  if (design.has_x) full["x"] = covariate();
  if (uses_u(design.index_form)) full["u"] = covariate();
  if (uses_v(design.index_form)) full["v"] = covariate();

  // Initial period: same index without the lag term and with gamma_00.
  Eigen::VectorXd y_init = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd innov(n, t);
  const bool binary = design.family != Family::gaussian;
  if (design.dynamic) {
    ModelSpec s0 = spec;
    s0.lag_order = 0;
    std::map<std::string, Eigen::MatrixXd> c0;
    for (const auto& [k, m] : full) c0[k] = m.col(0);
    const PanelData p0 = make_panel(Eigen::MatrixXd::Zero(n, 1), {}, c0);
    const Design d0(p0, s0);
    const Eigen::VectorXd th0 = design.theta0.tail(design.theta0.size() - 1);
    for (int i = 0; i < n; ++i) {
      if (binary) {
        const double pi = d0.index(i, 0, th0, alpha0[i], gamma00).pi;
        y_init[i] = unif(rng) < link_mean(design.family, pi) ? 1.0 : 0.0;
      } else {
        y_init[i] = 0.0;
      }
    }
  }

  std::map<std::string, Eigen::MatrixXd> cov;
  for (const auto& [k, m] : full) cov[k] = m.rightCols(t);
  PanelData data = make_panel(Eigen::MatrixXd::Zero(n, t), design.dynamic ? y_init : Eigen::VectorXd{}, cov);
  Truth truth;
  truth.theta0 = design.theta0;
  truth.alpha0 = alpha0;
  truth.gamma0 = gamma0;
  truth.mean.resize(n, t);
  const Design d(data, spec);
  for (int s = 0; s < t; ++s) {
    if (design.dynamic && s > 0) data.y_lag.col(s) = data.y.col(s - 1);
    for (int i = 0; i < n; ++i) {
      const double pi = d.index(i, s, design.theta0, alpha0[i], gamma0[s]).pi;
      const double m = link_mean(design.family, pi);
      truth.mean(i, s) = m;
      if (binary) {
        const double u = unif(rng);
        innov(i, s) = u;
        data.y(i, s) = u < m ? 1.0 : 0.0;
      } else {
        const double e = std_normal(rng);
        innov(i, s) = e;
        data.y(i, s) = m + e;
      }
    }
  }
  truth.innovations = std::move(innov);

  // Expected likelihood: integrate the lagged outcome out given the
  // exogenous covariate paths and the initial condition.
  if (!design.dynamic) {
    truth.expected.states.push_back({Eigen::MatrixXd(), truth.mean, Eigen::MatrixXd::Ones(n, t)});
  } else if (binary) {
    ExpectedState one{Eigen::MatrixXd::Ones(n, t), Eigen::MatrixXd(n, t), Eigen::MatrixXd(n, t)};
    ExpectedState zero{Eigen::MatrixXd::Zero(n, t), Eigen::MatrixXd(n, t), Eigen::MatrixXd(n, t)};
    Design d1(data, spec), d0(data, spec);
    d1.set_lag(&one.lag);
    d0.set_lag(&zero.lag);
    Eigen::VectorXd q = y_init;  // P(Y_{i,t-1} = 1)
    for (int s = 0; s < t; ++s) {
      for (int i = 0; i < n; ++i) {
        const double p1 = link_mean(design.family, d1.index(i, s, design.theta0, alpha0[i], gamma0[s]).pi);
        const double p0 = link_mean(design.family, d0.index(i, s, design.theta0, alpha0[i], gamma0[s]).pi);
        one.response(i, s) = p1;
        zero.response(i, s) = p0;
        one.weight(i, s) = q[i];
        zero.weight(i, s) = 1.0 - q[i];
        q[i] = q[i] * p1 + (1.0 - q[i]) * p0;
      }
    }
    truth.expected.states.push_back(std::move(one));
    truth.expected.states.push_back(std::move(zero));
  } else {
    // The gaussian log-likelihood is quadratic, so its fixed-effect
    // derivatives only see the mean of the lag.
    ExpectedState st{Eigen::MatrixXd(n, t), Eigen::MatrixXd(n, t), Eigen::MatrixXd::Ones(n, t)};
    Design dm(data, spec);
    dm.set_lag(&st.lag);
    Eigen::VectorXd m = y_init;
    for (int s = 0; s < t; ++s) {
      st.lag.col(s) = m;
      for (int i = 0; i < n; ++i) m[i] = dm.index(i, s, design.theta0, alpha0[i], gamma0[s]).pi;
      st.response.col(s) = m;
    }
    truth.expected.states.push_back(std::move(st));
  }
  return {std::move(data), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Monte Carlo

inline std::vector<double> default_delta_grid() {
  std::vector<double> g;
  for (int k = -15; k <= 15; ++k) g.push_back(k * 0.02);
  return g;
}

struct MCConfig {
  DgpDesign design;
  int replications = 1000;
  std::vector<double> delta_grid = default_delta_grid();
  int tau = 1;
  std::vector<TestKind> kinds{TestKind::LR};
  std::vector<ObjectiveKind> objectives{ObjectiveKind::infeasible, ObjectiveKind::raw, ObjectiveKind::corrected};
  std::uint64_t master_seed = 1;
  double level = 0.05;
  int threads = 1;
  double max_shrink = 0.2;  // largest tolerated share of cells removed by sanitizing
};

struct RejectionRow {
  ObjectiveKind objective = ObjectiveKind::raw;
  TestKind kind = TestKind::LR;
  double delta = 0.0;
  int replications = 0;
  int rejections = 0;
  double rate = 0.0;
  double mc_se = 0.0;
};

struct EstimatorRow {
  ObjectiveKind objective = ObjectiveKind::raw;
  std::string parameter;
  double truth = 0.0;
  int replications = 0;
  double mean = 0.0;
  double pct_bias = 0.0;
  double rmse = 0.0;
};

struct ReplicationRecord {
  int index = 0;
  std::uint64_t seed = 0;
  bool included = false;
  std::string reason;
  int dropped_units = 0;
  int dropped_periods = 0;
  /// Estimates per objective, in config order (empty when excluded).
  std::vector<Eigen::VectorXd> estimates;
  /// Statistics indexed [objective][kind][delta], flattened.
  std::vector<double> statistics;
};

struct MCReport {
  MCConfig config;
  std::vector<RejectionRow> rejections;
  std::vector<EstimatorRow> estimators;
  std::vector<ReplicationRecord> replications;
  int excluded = 0;

  std::size_t stat_index(std::size_t obj, std::size_t kind, std::size_t delta) const {
    return (obj * config.kinds.size() + kind) * config.delta_grid.size() + delta;
  }

  /// Statistics of the included replications for one cell of the grid.
  std::vector<double> statistics(std::size_t obj, std::size_t kind, std::size_t delta) const {
    std::vector<double> out;
    for (const auto& r : replications)
      if (r.included) out.push_back(r.statistics[stat_index(obj, kind, delta)]);
    return out;
  }
};

inline ReplicationRecord run_replication(const MCConfig& cfg, int rep) {
  ReplicationRecord rec;
  rec.index = rep;
  rec.seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(rep));
  try {
    auto [raw_data, raw_truth] = generate(cfg.design, rec.seed);
    const ModelSpec spec = cfg.design.model_spec(cfg.tau);
    auto [data, report] = sanitize_panel(raw_data, spec);
    rec.dropped_units = static_cast<int>(report.dropped_units.size());
    rec.dropped_periods = static_cast<int>(report.dropped_periods.size());
    const double kept = static_cast<double>(data.n_units()) * data.n_periods();
    if (1.0 - kept / (static_cast<double>(raw_data.n_units()) * raw_data.n_periods()) > cfg.max_shrink) {
      rec.reason = "sanitize removed more than the allowed share of cells";
      return rec;
    }
    const Truth truth = report.empty() ? raw_truth : subset_truth(raw_truth, report.kept_units, report.kept_periods);
    CorrectionOptions copts;
    copts.tau = cfg.tau;
    bool need_h = false;
    for (auto k : cfg.kinds) need_h |= k == TestKind::Wald;
    const Eigen::VectorXd& theta0 = cfg.design.theta0;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(theta0.size());
    std::optional<Eigen::VectorXd> raw_fit;
    rec.statistics.assign(cfg.objectives.size() * cfg.kinds.size() * cfg.delta_grid.size(), 0.0);
    for (std::size_t o = 0; o < cfg.objectives.size(); ++o) {
      Objective obj(data, spec, cfg.objectives[o], copts, &truth);
      MaximizeOptions mo;
      mo.compute_hessian = need_h;
      if (raw_fit) mo.start = raw_fit;
      const EstimateResult fit = maximize(obj, std::nullopt, mo);
      if (!fit.converged) {
        rec.reason = std::string(to_string(cfg.objectives[o])) + " estimate did not converge";
        rec.estimates.clear();
        return rec;
      }
      if (cfg.objectives[o] == ObjectiveKind::raw) raw_fit = fit.theta_hat;
      rec.estimates.push_back(fit.theta_hat);
      for (std::size_t dk = 0; dk < cfg.delta_grid.size(); ++dk) {
        const Eigen::VectorXd theta_r = theta0 + cfg.delta_grid[dk] * ones;
        const Constraint null = Constraint::at_point(theta_r);
        EstimateResult restricted;
        restricted.theta_hat = theta_r;
        restricted.loglik = obj.value(theta_r);
        const auto tests = run_tests(obj, null, cfg.kinds, mo, &fit, &restricted);
        for (std::size_t k = 0; k < tests.size(); ++k)
          rec.statistics[(o * cfg.kinds.size() + k) * cfg.delta_grid.size() + dk] = tests[k].statistic;
      }
    }
    rec.included = true;
  } catch (const Error& e) {
    rec.reason = e.what();
    rec.estimates.clear();
  }
  return rec;
}

inline MCReport monte_carlo(const MCConfig& cfg) {
  if (cfg.replications < 1) throw Error(ErrorKind::ConfigError, "replications must be at least 1");
  if (std::none_of(cfg.delta_grid.begin(), cfg.delta_grid.end(), [](double d) { return std::abs(d) < 1e-12; }))
    throw Error(ErrorKind::ConfigError, "delta grid must contain 0");
  if (cfg.objectives.empty() || cfg.kinds.empty())
    throw Error(ErrorKind::ConfigError, "at least one objective and one test kind are required");
  MCReport rep;
  rep.config = cfg;
  rep.replications.resize(cfg.replications);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < cfg.replications; r = next++) rep.replications[r] = run_replication(cfg, r);
  };
  const int nthreads = std::max(1, std::min(cfg.threads, cfg.replications));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < nthreads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const auto& r : rep.replications) rep.excluded += !r.included;
  const int used = cfg.replications - rep.excluded;
  const double crit_level = cfg.level;
  for (std::size_t o = 0; o < cfg.objectives.size(); ++o) {
    for (std::size_t k = 0; k < cfg.kinds.size(); ++k) {
      for (std::size_t dk = 0; dk < cfg.delta_grid.size(); ++dk) {
        RejectionRow row;
        row.objective = cfg.objectives[o];
        row.kind = cfg.kinds[k];
        row.delta = cfg.delta_grid[dk];
        row.replications = used;
        for (double s : rep.statistics(o, k, dk))
          row.rejections += dist::chi2_sf(s, static_cast<int>(cfg.design.theta0.size())) < crit_level;
        row.rate = used > 0 ? static_cast<double>(row.rejections) / used : std::nan("");
        row.mc_se = used > 0 ? std::sqrt(row.rate * (1.0 - row.rate) / used) : std::nan("");
        rep.rejections.push_back(row);
      }
    }
    const ModelSpec spec = cfg.design.model_spec(cfg.tau);
    const auto names = spec.parameter_names();
    for (std::size_t j = 0; j < names.size(); ++j) {
      EstimatorRow row;
      row.objective = cfg.objectives[o];
      row.parameter = names[j];
      row.truth = cfg.design.theta0[static_cast<Eigen::Index>(j)];
      row.replications = used;
      double sum = 0.0, sq = 0.0;
      for (const auto& r : rep.replications) {
        if (!r.included) continue;
        const double v = r.estimates[o][static_cast<Eigen::Index>(j)];
        sum += v;
        sq += (v - row.truth) * (v - row.truth);
      }
      row.mean = used > 0 ? sum / used : std::nan("");
      row.pct_bias = 100.0 * (row.mean - row.truth) / row.truth;
      row.rmse = used > 0 ? std::sqrt(sq / used) : std::nan("");
      rep.estimators.push_back(row);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Delimited output

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::nan("");
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw Error(ErrorKind::NonNumericField, "not a number: '" + s + "'");
  return v;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline void write_rejections_csv(std::ostream& os, const std::vector<RejectionRow>& rows) {
  os << "objective,kind,delta,replications,rejections,rate,mc_se\n";
  for (const auto& r : rows)
    os << to_string(r.objective) << ',' << to_string(r.kind) << ',' << format_double(r.delta) << ','
       << r.replications << ',' << r.rejections << ',' << format_double(r.rate) << ',' << format_double(r.mc_se)
       << '\n';
}

inline std::vector<RejectionRow> read_rejections_csv(std::istream& is) {
  std::vector<RejectionRow> rows;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 7) throw Error(ErrorKind::NonNumericField, "malformed rejection row: " + line);
    RejectionRow r;
    r.objective = parse_objective(f[0]);
    r.kind = parse_test_kind(f[1]);
    r.delta = parse_double(f[2]);
    r.replications = std::stoi(f[3]);
    r.rejections = std::stoi(f[4]);
    r.rate = parse_double(f[5]);
    r.mc_se = parse_double(f[6]);
    rows.push_back(r);
  }
  return rows;
}

inline void write_estimators_csv(std::ostream& os, const std::vector<EstimatorRow>& rows) {
  os << "objective,parameter,truth,replications,mean,pct_bias,rmse\n";
  for (const auto& r : rows)
    os << to_string(r.objective) << ',' << r.parameter << ',' << format_double(r.truth) << ',' << r.replications
       << ',' << format_double(r.mean) << ',' << format_double(r.pct_bias) << ',' << format_double(r.rmse) << '\n';
}

inline std::vector<EstimatorRow> read_estimators_csv(std::istream& is) {
  std::vector<EstimatorRow> rows;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 7) throw Error(ErrorKind::NonNumericField, "malformed estimator row: " + line);
    EstimatorRow r;
    r.objective = parse_objective(f[0]);
    r.parameter = f[1];
    r.truth = parse_double(f[2]);
    r.replications = std::stoi(f[3]);
    r.mean = parse_double(f[4]);
    r.pct_bias = parse_double(f[5]);
    r.rmse = parse_double(f[6]);
    rows.push_back(r);
  }
  return rows;
}

inline void write_replications_csv(std::ostream& os, const MCReport& rep) {
  os << "replication,seed,included,dropped_units,dropped_periods,reason\n";
  for (const auto& r : rep.replications) {
    std::string reason = r.reason;
    std::replace(reason.begin(), reason.end(), ',', ';');
    os << r.index << ',' << r.seed << ',' << (r.included ? 1 : 0) << ',' << r.dropped_units << ','
       << r.dropped_periods << ',' << reason << '\n';
  }
}

}  // namespace twfe
