// Command-line front end: estimate, test, simulate, diagnose, tau-sweep.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "twfe/twfe.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Args {
  std::string config;
  std::string data;
  std::string out;
  std::string objective = "both";
  std::vector<int> tau;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  int threads = 1;
  std::string design;
  std::optional<int> n, t;
  std::vector<std::string> constraints;
  std::string kinds;
  // model
  std::string family, index_form, identification;
  std::optional<int> lag;
  std::vector<std::string> x;
  std::string u, v;
  std::string unit_col, time_col, y_col;
  bool exogenous = false;
  bool raw_hessian = false;
  // simulate / diagnose
  std::string write_panel;
  std::vector<double> deltas;
  std::vector<int> grid;
  std::optional<int> fixed_dim;
  std::string series = "A,B";
};

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw twfe::Error(twfe::ErrorKind::ConfigError, "cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw twfe::Error(twfe::ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
}

template <class T>
T cfg_get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw twfe::Error(twfe::ErrorKind::ConfigError, std::string("config field '") + key + "' has the wrong type");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Model spec and column roles from config, overridden by flags.
struct Resolved {
  twfe::ModelSpec spec;
  twfe::ColumnRoles roles;
  std::string data;
  std::vector<std::string> constraints;
  std::vector<twfe::ObjectiveKind> objectives;
  std::vector<twfe::TestKind> kinds;
  std::vector<int> taus;
  std::uint64_t seed = 1;
  json echo;
};

Resolved resolve(const Args& a) {
  const json cfg = read_config(a.config);
  const json model = cfg.value("model", json::object());
  const json columns = cfg.value("columns", json::object());
  Resolved r;
  auto pick = [](const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; };
  r.spec.family = twfe::parse_family(pick(a.family, cfg_get<std::string>(model, "family", "probit")));
  r.spec.index_form = twfe::parse_index_form(pick(a.index_form, cfg_get<std::string>(model, "index_form", "additive_fe")));
  r.spec.identification =
      twfe::parse_identification(pick(a.identification, cfg_get<std::string>(model, "identification", "sum_equal")));
  if (model.contains("constants")) {
    const auto c = cfg_get<std::vector<double>>(model, "constants", {});
    if (c.size() != 2) throw twfe::Error(twfe::ErrorKind::ConfigError, "model.constants needs two values");
    r.spec.identification_constants = std::array<double, 2>{c[0], c[1]};
  }
  r.spec.lag_order = a.lag.value_or(cfg_get<int>(model, "lag_order", 0));
  r.spec.strictly_exogenous = a.exogenous || cfg_get<bool>(model, "strictly_exogenous", false);
  r.roles.unit = pick(a.unit_col, cfg_get<std::string>(columns, "unit", "unit"));
  r.roles.time = pick(a.time_col, cfg_get<std::string>(columns, "time", "time"));
  r.roles.outcome = pick(a.y_col, cfg_get<std::string>(columns, "outcome", "y"));
  r.roles.x = a.x.empty() ? cfg_get<std::vector<std::string>>(columns, "x", {}) : a.x;
  r.roles.u = pick(a.u, cfg_get<std::string>(columns, "u", ""));
  r.roles.v = pick(a.v, cfg_get<std::string>(columns, "v", ""));
  r.spec.x_columns = r.roles.x;
  r.spec.u_column = r.roles.u;
  r.spec.v_column = r.roles.v;
  r.data = pick(a.data, cfg_get<std::string>(cfg, "data", ""));
  r.constraints = a.constraints.empty() ? cfg_get<std::vector<std::string>>(cfg, "constraints", {}) : a.constraints;
  r.taus = a.tau;
  if (r.taus.empty()) {
    if (cfg.contains("tau") && cfg["tau"].is_array()) r.taus = cfg_get<std::vector<int>>(cfg, "tau", {});
    else r.taus = {cfg_get<int>(cfg, "tau", cfg_get<int>(model, "tau", 1))};
  }
  if (r.taus.empty()) r.taus = {1};
  r.spec.tau = r.taus.front();
  const std::string obj = a.objective != "both" || !cfg.contains("objective") ? a.objective
                                                                                 : cfg_get<std::string>(cfg, "objective", "both");
  if (obj == "both") r.objectives = {twfe::ObjectiveKind::raw, twfe::ObjectiveKind::corrected};
  else r.objectives = {twfe::parse_objective(obj)};
  const std::string kinds = a.kinds.empty() ? cfg_get<std::string>(cfg, "kinds", "lr,lm,wald") : a.kinds;
  for (const auto& k : split_list(kinds)) r.kinds.push_back(twfe::parse_test_kind(k));
  r.seed = a.seed.value_or(cfg_get<std::uint64_t>(cfg, "seed", 1));
  r.echo = {{"family", twfe::to_string(r.spec.family)},
            {"index_form", twfe::to_string(r.spec.index_form)},
            {"identification", twfe::to_string(r.spec.identification)},
            {"lag_order", r.spec.lag_order},
            {"strictly_exogenous", r.spec.strictly_exogenous},
            {"x", r.roles.x},
            {"u", r.roles.u},
            {"v", r.roles.v},
            {"data", r.data},
            {"tau", r.taus},
            {"constraints", r.constraints}};
  return r;
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::isfinite(v[k])) a.push_back(v[k]);
    else a.push_back(nullptr);
  }
  return a;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_file(const std::string& dir, const std::string& name, const std::string& content) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  std::ofstream os(fs::path(dir) / name, std::ios::binary);
  if (!os) throw twfe::Error(twfe::ErrorKind::ConfigError, "cannot write to '" + dir + "'");
  os << content;
}

struct Loaded {
  twfe::PanelData data;
  twfe::SanitizeReport report;
};

Loaded load(const Resolved& r) {
  if (r.data.empty()) throw twfe::Error(twfe::ErrorKind::ConfigError, "no data file given (--data)");
  twfe::PanelData raw = twfe::ingest(r.data, r.roles, r.spec.lag_order);
  twfe::validate(raw, r.spec);
  auto [data, report] = twfe::sanitize_panel(raw, r.spec);
  return {std::move(data), std::move(report)};
}

json sanitize_json(const twfe::SanitizeReport& rep) {
  return {{"dropped_units", rep.dropped_units.size()},
          {"dropped_periods", rep.dropped_periods.size()},
          {"reasons", rep.reasons}};
}

json estimate_json(const twfe::EstimateResult& e, const std::vector<std::string>& names) {
  json j = {{"objective", twfe::to_string(e.objective_kind)},
            {"parameters", names},
            {"theta", vec_json(e.theta_hat)},
            {"se", vec_json(e.se)},
            {"loglik", number(e.loglik)},
            {"score_inf_norm", number(e.score.size() ? e.score.cwiseAbs().maxCoeff() : 0.0)},
            {"converged", e.converged},
            {"iterations", e.iterations},
            {"flags", e.flags}};
  json h = json::array();
  for (Eigen::Index i = 0; i < e.hessian_theta.rows(); ++i) {
    Eigen::VectorXd row = e.hessian_theta.row(i).transpose();
    h.push_back(vec_json(row));
  }
  j["hessian"] = h;
  j["profile"] = {{"converged", e.profile.converged},
                  {"iterations", e.profile.iterations},
                  {"grad_norm", e.profile.grad_norm},
                  {"clamp_hits", e.profile.clamp_hits}};
  return j;
}

twfe::CorrectionOptions correction_options(const Args& a, int tau) {
  twfe::CorrectionOptions co;
  co.tau = tau;
  co.raw_hessian = a.raw_hessian;
  return co;
}

int cmd_estimate(const Args& a) {
  const Resolved r = resolve(a);
  const Loaded l = load(r);
  const auto names = r.spec.parameter_names();
  json out = {{"command", "estimate"}, {"config", r.echo}, {"sanitize", sanitize_json(l.report)},
              {"n_units", l.data.n_units()}, {"n_periods", l.data.n_periods()}};
  std::ostringstream table;
  table << "objective,parameter,estimate,se\n";
  json results = json::array();
  std::optional<Eigen::VectorXd> start;
  for (auto kind : r.objectives) {
    twfe::Objective obj(l.data, r.spec, kind, correction_options(a, r.taus.front()));
    twfe::MaximizeOptions mo;
    mo.start = start;
    const auto est = twfe::maximize(obj, std::nullopt, mo);
    if (kind == twfe::ObjectiveKind::raw && est.converged) start = est.theta_hat;
    results.push_back(estimate_json(est, names));
    for (std::size_t j = 0; j < names.size(); ++j)
      table << twfe::to_string(kind) << ',' << names[j] << ',' << twfe::format_double(est.theta_hat[j]) << ','
            << twfe::format_double(est.se[j]) << '\n';
  }
  out["estimates"] = results;
  std::cout << out.dump(2) << '\n' << table.str();
  write_file(a.out, "estimate.json", out.dump(2) + "\n");
  write_file(a.out, "estimate_se.csv", table.str());
  return 0;
}

twfe::Constraint combined_constraint(const Resolved& r) {
  if (r.constraints.empty()) throw twfe::Error(twfe::ErrorKind::ConfigError, "no restriction given (--constraint)");
  std::string joined;
  for (const auto& c : r.constraints) joined += (joined.empty() ? "" : ",") + c;
  return twfe::parse_constraint(joined, r.spec.parameter_names());
}

json tests_for(const twfe::PanelData& data, const twfe::ModelSpec& spec, const twfe::Constraint& k,
               const Resolved& r, const Args& a, int tau, std::ostringstream& table, json* estimates = nullptr) {
  json rows = json::array();
  std::optional<Eigen::VectorXd> start;
  for (auto kind : r.objectives) {
    twfe::Objective obj(data, spec, kind, correction_options(a, tau));
    twfe::MaximizeOptions mo;
    mo.start = start;
    const auto fu = twfe::maximize(obj, std::nullopt, mo);
    if (kind == twfe::ObjectiveKind::raw && fu.converged) start = fu.theta_hat;
    twfe::MaximizeOptions ro = mo;
    ro.start = fu.theta_hat;
    ro.compute_hessian = false;
    const auto fr = twfe::maximize(obj, k, ro);
    if (estimates) {
      json e = estimate_json(fu, spec.parameter_names());
      e["tau"] = tau;
      e["restricted_theta"] = vec_json(fr.theta_hat);
      estimates->push_back(e);
    }
    for (const auto& t : twfe::run_tests(obj, k, r.kinds, mo, &fu, &fr)) {
      rows.push_back({{"objective", twfe::to_string(t.objective_kind)},
                      {"kind", twfe::to_string(t.kind)},
                      {"tau", tau},
                      {"statistic", number(t.statistic)},
                      {"df", t.df},
                      {"p_value", number(t.p_value)},
                      {"constraint", t.constraint},
                      {"clipped", t.clipped}});
      table << tau << ',' << twfe::to_string(t.objective_kind) << ',' << twfe::to_string(t.kind) << ','
            << twfe::format_double(t.statistic) << ',' << t.df << ',' << twfe::format_double(t.p_value) << ",\""
            << t.constraint << "\"\n";
    }
  }
  return rows;
}

int cmd_test(const Args& a) {
  const Resolved r = resolve(a);
  const Loaded l = load(r);
  const twfe::Constraint k = combined_constraint(r);
  std::ostringstream table;
  table << "tau,objective,kind,statistic,df,p_value,constraint\n";
  json out = {{"command", "test"}, {"config", r.echo}, {"sanitize", sanitize_json(l.report)}};
  out["tests"] = tests_for(l.data, r.spec, k, r, a, r.taus.front(), table);
  std::cout << table.str();
  write_file(a.out, "test.json", out.dump(2) + "\n");
  write_file(a.out, "test.csv", table.str());
  return 0;
}

int cmd_tau_sweep(const Args& a) {
  const Resolved r = resolve(a);
  const Loaded l = load(r);
  std::ostringstream table, est;
  table << "tau,objective,kind,statistic,df,p_value,constraint\n";
  est << "tau,parameter,estimate,se,corrected_loglik\n";
  json out = {{"command", "tau-sweep"}, {"config", r.echo}, {"sanitize", sanitize_json(l.report)}};
  json estimates = json::array(), tests = json::array();
  const auto names = r.spec.parameter_names();
  Resolved rc = r;
  rc.objectives = {twfe::ObjectiveKind::corrected};
  for (int tau : r.taus) {
    twfe::ModelSpec spec = r.spec;
    spec.tau = tau;
    if (!r.constraints.empty()) {
      json e = json::array();
      for (auto& row : tests_for(l.data, spec, combined_constraint(r), rc, a, tau, table, &e)) tests.push_back(row);
      for (auto& x : e) estimates.push_back(x);
      const auto& fit = e.back();
      for (std::size_t j = 0; j < names.size(); ++j)
        est << tau << ',' << names[j] << ',' << twfe::format_double(fit["theta"][j].is_null() ? NAN : fit["theta"][j].get<double>())
            << ',' << twfe::format_double(fit["se"][j].is_null() ? NAN : fit["se"][j].get<double>()) << ','
            << twfe::format_double(fit["loglik"].get<double>()) << '\n';
    } else {
      twfe::Objective obj(l.data, spec, twfe::ObjectiveKind::corrected, correction_options(a, tau));
      const auto fit = twfe::maximize(obj);
      json e = estimate_json(fit, names);
      e["tau"] = tau;
      estimates.push_back(e);
      for (std::size_t j = 0; j < names.size(); ++j)
        est << tau << ',' << names[j] << ',' << twfe::format_double(fit.theta_hat[j]) << ','
            << twfe::format_double(fit.se[j]) << ',' << twfe::format_double(fit.loglik) << '\n';
    }
  }
  out["estimates"] = estimates;
  out["tests"] = tests;
  std::cout << est.str();
  if (!r.constraints.empty()) std::cout << table.str();
  write_file(a.out, "tau_sweep.json", out.dump(2) + "\n");
  write_file(a.out, "tau_sweep_estimates.csv", est.str());
  if (!r.constraints.empty()) write_file(a.out, "tau_sweep_tests.csv", table.str());
  return 0;
}

int cmd_simulate(const Args& a) {
  const json cfg = read_config(a.config);
  const std::string name = a.design.empty() ? cfg_get<std::string>(cfg, "design", "logit-ds-dynamic") : a.design;
  const int n = a.n.value_or(cfg_get<int>(cfg, "n", 56));
  const int t = a.t.value_or(cfg_get<int>(cfg, "t", 14));
  const std::uint64_t seed = a.seed.value_or(cfg_get<std::uint64_t>(cfg, "seed", 1));
  twfe::MCConfig mc;
  mc.design = twfe::design_from_name(name, n, t);
  if (!a.write_panel.empty()) {
    const auto [data, truth] = twfe::generate(mc.design, seed);
    std::ofstream os(a.write_panel, std::ios::binary);
    if (!os) throw twfe::Error(twfe::ErrorKind::ConfigError, "cannot write '" + a.write_panel + "'");
    twfe::write_panel_csv(os, data);
    return 0;
  }
  if (a.out.empty()) throw twfe::Error(twfe::ErrorKind::ConfigError, "simulate needs --out");
  mc.replications = a.reps.value_or(cfg_get<int>(cfg, "reps", 1000));
  mc.master_seed = seed;
  mc.tau = a.tau.empty() ? cfg_get<int>(cfg, "tau", 1) : a.tau.front();
  mc.threads = a.threads;
  if (!a.deltas.empty()) mc.delta_grid = a.deltas;
  else if (cfg.contains("delta_grid")) mc.delta_grid = cfg_get<std::vector<double>>(cfg, "delta_grid", {});
  const std::string kinds = a.kinds.empty() ? cfg_get<std::string>(cfg, "kinds", "lr") : a.kinds;
  mc.kinds.clear();
  for (const auto& k : split_list(kinds)) mc.kinds.push_back(twfe::parse_test_kind(k));
  const std::string obj = a.objective == "both" ? cfg_get<std::string>(cfg, "objectives", "infeasible,raw,corrected")
                                                : a.objective;
  mc.objectives.clear();
  for (const auto& o : split_list(obj)) mc.objectives.push_back(twfe::parse_objective(o));

  const twfe::MCReport rep = twfe::monte_carlo(mc);
  std::ostringstream rej, est, reps;
  twfe::write_rejections_csv(rej, rep.rejections);
  twfe::write_estimators_csv(est, rep.estimators);
  twfe::write_replications_csv(reps, rep);
  write_file(a.out, "rejections.csv", rej.str());
  write_file(a.out, "estimators.csv", est.str());
  write_file(a.out, "replications.csv", reps.str());
  json objectives = json::array(), kind_names = json::array();
  for (auto o : mc.objectives) objectives.push_back(twfe::to_string(o));
  for (auto k : mc.kinds) kind_names.push_back(twfe::to_string(k));
  json manifest = {{"command", "simulate"},
                   {"design", name},
                   {"n", n},
                   {"t", t},
                   {"theta0", vec_json(mc.design.theta0)},
                   {"replications", mc.replications},
                   {"master_seed", seed},
                   {"tau", mc.tau},
                   {"level", mc.level},
                   {"delta_grid", mc.delta_grid},
                   {"objectives", objectives},
                   {"kinds", kind_names},
                   {"excluded", rep.excluded},
                   {"files", {"rejections.csv", "estimators.csv", "replications.csv"}}};
  write_file(a.out, "manifest.json", manifest.dump(2) + "\n");
  std::cout << rej.str();
  return 0;
}

int cmd_diagnose(const Args& a) {
  const json cfg = read_config(a.config);
  const std::string name = a.design.empty() ? cfg_get<std::string>(cfg, "design", "probit-ae-dynamic") : a.design;
  const std::uint64_t seed = a.seed.value_or(cfg_get<std::uint64_t>(cfg, "seed", 1));
  const int fixed = a.fixed_dim.value_or(cfg_get<int>(cfg, "fixed_dim", 100));
  std::vector<int> grid = a.grid;
  if (grid.empty()) grid = cfg_get<std::vector<int>>(cfg, "grid", {});
  if (grid.empty())
    for (int g = 10; g <= 200; g += 10) grid.push_back(g);
  std::vector<double> deltas = a.deltas;
  if (deltas.empty()) deltas = cfg_get<std::vector<double>>(cfg, "deltas", {0.0});
  const twfe::DgpDesign design = twfe::design_from_name(name, fixed, fixed);
  std::ostringstream series, summary;
  series << "design,series,delta,grid,scaled_norm,dlog\n";
  summary << "design,series,delta,est,sig,t_stat,differences\n";
  json runs = json::array();
  std::uint64_t stream = 0;
  for (const auto& which : split_list(a.series)) {
    if (which != "A" && which != "B") throw twfe::Error(twfe::ErrorKind::ConfigError, "series must be A or B");
    for (double d : deltas) {
      const auto s = twfe::schur_invariance_check(design, d, fixed, grid, twfe::derive_seed(seed, stream++),
                                                  which[0], a.threads);
      for (std::size_t k = 0; k < s.grid.size(); ++k)
        series << name << ',' << which << ',' << twfe::format_double(d) << ',' << s.grid[k] << ','
               << twfe::format_double(s.scaled_norm[k]) << ','
               << (k == 0 ? std::string() : twfe::format_double(s.dlog[k - 1])) << '\n';
      summary << name << ',' << which << ',' << twfe::format_double(d) << ',' << twfe::format_double(s.mean) << ','
              << twfe::format_double(s.p_value) << ',' << twfe::format_double(s.t_stat) << ',' << s.dlog.size()
              << '\n';
      runs.push_back({{"series", which}, {"delta", d}, {"est", number(s.mean)}, {"sig", number(s.p_value)},
                      {"insufficient_df", s.insufficient_df}});
    }
  }
  json manifest = {{"command", "diagnose"}, {"design", name}, {"seed", seed}, {"fixed_dim", fixed},
                   {"grid", grid}, {"runs", runs}};
  std::cout << summary.str();
  write_file(a.out, "schur_series.csv", series.str());
  write_file(a.out, "schur_summary.csv", summary.str());
  write_file(a.out, "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

void add_model_flags(CLI::App* sub, Args& a) {
  sub->add_option("--data", a.data, "Long-format panel file");
  sub->add_option("--family", a.family, "probit | logit | gaussian");
  sub->add_option("--index-form", a.index_form, "additive_fe | slope_shift_fe | slope_scale_fe | covariate_loaded_fe | shared_slope_fe");
  sub->add_option("--identification", a.identification, "sum_zero_both | sum_equal | mean_half | none_needed");
  sub->add_option("--lag", a.lag, "1 to include the lagged outcome");
  sub->add_option("--x", a.x, "Regressor columns")->delimiter(',');
  sub->add_option("--u", a.u, "U column");
  sub->add_option("--v", a.v, "V column");
  sub->add_option("--unit-col", a.unit_col, "Unit identifier column");
  sub->add_option("--time-col", a.time_col, "Period column");
  sub->add_option("--y-col", a.y_col, "Outcome column");
  sub->add_flag("--exogenous", a.exogenous, "Regressors strictly exogenous (tau = 0)");
  sub->add_flag("--raw-hessian", a.raw_hessian, "Use the profiled-likelihood Hessian for corrected tests");
}

int report_error(const std::string& kind, const std::string& message, int code) {
  json e = {{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << e.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-way fixed-effects panel likelihoods with analytical bias correction"};
  app.require_subcommand(1);
  Args a;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "JSON run configuration");
    sub->add_option("--out", a.out, "Output directory");
    sub->add_option("--objective", a.objective, "raw | corrected | both (simulate: comma list incl. infeasible)");
    sub->add_option("--tau", a.tau, "Truncation lag(s)")->delimiter(',');
    sub->add_option("--seed", a.seed, "Master seed");
    sub->add_option("--threads", a.threads, "Worker threads (results do not depend on it)");
    sub->add_option("--kinds", a.kinds, "Comma list of lr, lm, wald");
    sub->add_option("--constraint", a.constraints, "Restriction, e.g. rho=0 or l1=l2=l3 (repeatable)");
  };
  auto* est = app.add_subcommand("estimate", "Raw and corrected estimates with standard errors");
  auto* tst = app.add_subcommand("test", "LR / LM / Wald tests of a restriction");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo rejection rates and estimator summaries");
  auto* dia = app.add_subcommand("diagnose", "Schur-complement invariance diagnostics");
  auto* sweep = app.add_subcommand("tau-sweep", "Corrected estimates and tests across truncation lags");
  for (auto* s : {est, tst, sim, dia, sweep}) common(s);
  for (auto* s : {est, tst, sweep}) add_model_flags(s, a);
  for (auto* s : {sim, dia}) {
    s->add_option("--design", a.design, "Design name");
    s->add_option("--deltas", a.deltas, "Offsets from theta0")->delimiter(',');
  }
  sim->add_option("--n", a.n, "Units");
  sim->add_option("--t", a.t, "Periods");
  sim->add_option("--reps", a.reps, "Replications");
  sim->add_option("--write-panel", a.write_panel, "Write one simulated panel (long CSV) and exit");
  dia->add_option("--grid", a.grid, "Grid of varying dimension")->delimiter(',');
  dia->add_option("--fixed-dim", a.fixed_dim, "Fixed dimension");
  dia->add_option("--series", a.series, "A, B or A,B");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("ConfigError", e.what(), 2);
  }

  try {
    if (*est) return cmd_estimate(a);
    if (*tst) return cmd_test(a);
    if (*sim) return cmd_simulate(a);
    if (*dia) return cmd_diagnose(a);
    if (*sweep) return cmd_tau_sweep(a);
  } catch (const twfe::Error& e) {
    return report_error(std::string(twfe::to_string(e.kind())), e.what(), twfe::is_config_error(e.kind()) ? 2 : 3);
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what(), 3);
  }
  return 2;
}
