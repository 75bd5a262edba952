#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "helpers.hpp"

using namespace twfe;

namespace {

DgpDesign symmetric_design(int n, int t) {
  auto d = design_from_name("logit-ae-static", n, t);
  d.effect_law = EffectLaw::zeros;
  d.theta0 = Eigen::VectorXd::Zero(1);
  return d;
}

MCConfig small_config(const std::string& name, int n, int t, int reps) {
  MCConfig c;
  c.design = design_from_name(name, n, t);
  c.replications = reps;
  c.delta_grid = {-0.3, 0.0, 0.3};
  c.master_seed = 99;
  return c;
}

}  // namespace

TEST(Generate, SymmetricDesignHasMeanHalf) {
  const auto [data, truth] = generate(symmetric_design(200, 200), 1);
  const double n = static_cast<double>(data.y.size());
  const double mean = data.y.mean();
  EXPECT_NEAR(mean, 0.5, 3.0 * std::sqrt(0.25 / n));
  EXPECT_TRUE((truth.mean.array() == 0.5).all());
}

TEST(Generate, SameSeedSamePanel) {
  for (const auto& name : design_names()) {
    const auto design = design_from_name(name, 12, 7);
    const auto [a, ta] = generate(design, 5);
    const auto [b, tb] = generate(design, 5);
    const auto [c, tc] = generate(design, 6);
    EXPECT_EQ(a.y, b.y) << name;
    EXPECT_EQ(a.y_lag, b.y_lag) << name;
    EXPECT_EQ(a.covariates, b.covariates) << name;
    EXPECT_EQ(ta.alpha0, tb.alpha0) << name;
    EXPECT_NE(a.covariates.empty() ? a.y : a.covariates.begin()->second,
              c.covariates.empty() ? c.y : c.covariates.begin()->second)
        << name;
  }
}

TEST(Generate, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t k = 0; k < 10000; ++k) seen.insert(derive_seed(1, k));
  EXPECT_EQ(seen.size(), 10000u);
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(Generate, UnknownDesignIsConfigError) {
  for (const char* bad : {"logit-xx-dynamic", "cauchy-ae-static", "logit-ae", "probit-ae-sometimes"}) {
    try {
      design_from_name(bad, 10, 10);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
    }
  }
}

TEST(Generate, CovariateAutocorrelation) {
  // With zero effects the covariate is z_t = 0.5 z_{t-1} + sqrt(1/2) e_t.
  auto design = design_from_name("probit-ae-static", 400, 60);
  design.effect_law = EffectLaw::zeros;
  const auto [data, truth] = generate(design, 3);
  const Eigen::MatrixXd& x = data.covariate("x");
  const Eigen::MatrixXd lead = x.rightCols(59), lag = x.leftCols(59);
  const double corr = ((lead.array() - lead.mean()) * (lag.array() - lag.mean())).mean() /
                      std::sqrt((lead.array() - lead.mean()).square().mean() *
                                (lag.array() - lag.mean()).square().mean());
  EXPECT_NEAR(corr, 0.5, 0.02);
  // Stationary variance 0.5 / (1 - 0.25); the first periods start at variance 1.
  const Eigen::MatrixXd late = x.rightCols(40);
  EXPECT_NEAR((late.array() - late.mean()).square().mean(), 2.0 / 3.0, 0.03);
}

TEST(Generate, OutcomesFollowTheTruth) {
  for (const char* name : {"probit-ae-dynamic", "logit-ds-dynamic", "probit-hs-static", "gaussian-ar1"}) {
    const auto design = design_from_name(name, 20, 9);
    const auto [data, truth] = generate(design, 11);
    const auto spec = design.model_spec();
    for (int i = 0; i < 20; ++i)
      for (int s = 0; s < 9; ++s) {
        const Design d(data, spec);
        const double m = link_mean(spec.family, d.index(i, s, truth.theta0, truth.alpha0[i], truth.gamma0[s]).pi);
        EXPECT_NEAR(truth.mean(i, s), m, 1e-14) << name;
        if (spec.binary()) {
          EXPECT_EQ(data.y(i, s), truth.innovations(i, s) < m ? 1.0 : 0.0) << name;
        } else {
          EXPECT_NEAR(data.y(i, s), m + truth.innovations(i, s), 1e-14) << name;
        }
        if (design.dynamic && s > 0) {
          EXPECT_EQ(data.y_lag(i, s), data.y(i, s - 1));
        }
      }
  }
}

TEST(Generate, LagStateWeightsMatchPathEnumeration) {
  const auto design = design_from_name("probit-ae-dynamic", 3, 5);
  const auto [data, truth] = generate(design, 21);
  ASSERT_EQ(truth.expected.states.size(), 2u);
  const auto& one = truth.expected.states[0];
  const auto& zero = truth.expected.states[1];
  for (int i = 0; i < 3; ++i) {
    // P(Y_{t-1} = 1) by summing over all outcome paths.
    for (int s = 0; s < 5; ++s) {
      double p_one = 0.0;
      for (int path = 0; path < (1 << s); ++path) {
        double prob = 1.0;
        double prev = data.y_init[i];
        for (int r = 0; r < s; ++r) {
          const double p = prev == 1.0 ? one.response(i, r) : zero.response(i, r);
          const double y = (path >> r) & 1;
          prob *= y == 1.0 ? p : 1.0 - p;
          prev = y;
        }
        if (prev == 1.0) p_one += prob;
      }
      EXPECT_NEAR(one.weight(i, s), p_one, 1e-14);
      EXPECT_NEAR(one.weight(i, s) + zero.weight(i, s), 1.0, 1e-14);
    }
  }
}

TEST(Expected, SymmetricDesignAtZeroIndex) {
  const auto design = symmetric_design(10, 6);
  const auto [data, truth] = generate(design, 2);
  const auto spec = design.model_spec();
  const auto iv = infeasible_loglik(truth, data, spec, truth.theta0);
  EXPECT_NEAR(iv.expected, std::log(0.5), 1e-12);
  EXPECT_NEAR(iv.value, std::log(0.5), 1e-12);
  EXPECT_LT(iv.profile.phi().cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Expected, ProbitStaticGridMatchesDirectFormula) {
  auto design = design_from_name("probit-ae-static", 3, 3);
  const auto [data, truth] = generate(design, 8);
  const auto spec = design.model_spec();
  const Eigen::VectorXd alpha = Eigen::Vector3d(-0.4, 0.1, 0.3), gamma = Eigen::Vector3d(0.2, -0.2, 0.0);
  for (double beta : {0.5, 1.0, 1.5}) {
    const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, beta);
    double direct = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int s = 0; s < 3; ++s) {
        const double pi = beta * data.covariate("x")(i, s) + alpha[i] + gamma[s];
        const double m = truth.mean(i, s);
        direct += m * std::log(dist::normal_cdf(pi)) + (1 - m) * std::log(dist::normal_cdf(-pi));
      }
    const Layers layers(data, spec, &truth.expected);
    EXPECT_NEAR(fe_value(layers, theta, alpha, gamma), direct, 1e-12) << beta;
  }
}

TEST(Expected, ProfileRecoversTrueEffectsAtTruth) {
  for (const char* name : {"probit-ae-dynamic", "logit-ae-static", "logit-ds-dynamic"}) {
    const auto draw = twfe::testing::sanitized_draw(design_from_name(name, 30, 10), 4);
    const auto iv = infeasible_loglik(draw.truth, draw.data, draw.spec, draw.truth.theta0);
    const Design d(draw.data, draw.spec);
    for (int i = 0; i < draw.data.n_units(); ++i)
      for (int s = 0; s < draw.data.n_periods(); ++s) {
        const double fit = d.index(i, s, draw.truth.theta0, iv.profile.alpha_hat[i], iv.profile.gamma_hat[s]).pi;
        const double tru = d.index(i, s, draw.truth.theta0, draw.truth.alpha0[i], draw.truth.gamma0[s]).pi;
        EXPECT_NEAR(fit, tru, 1e-7) << name;
      }
  }
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResults) {
  auto cfg = small_config("logit-ae-dynamic", 20, 8, 12);
  cfg.threads = 1;
  const auto a = monte_carlo(cfg);
  cfg.threads = 4;
  const auto b = monte_carlo(cfg);
  std::ostringstream sa, sb;
  write_rejections_csv(sa, a.rejections);
  write_rejections_csv(sb, b.rejections);
  EXPECT_EQ(sa.str(), sb.str());
  ASSERT_EQ(a.replications.size(), b.replications.size());
  for (std::size_t r = 0; r < a.replications.size(); ++r) {
    EXPECT_EQ(a.replications[r].seed, b.replications[r].seed);
    EXPECT_EQ(a.replications[r].statistics, b.replications[r].statistics);
  }
}

TEST(MonteCarlo, CsvRoundTrip) {
  auto cfg = small_config("probit-ae-static", 20, 8, 6);
  const auto rep = monte_carlo(cfg);
  std::stringstream rs, es;
  write_rejections_csv(rs, rep.rejections);
  write_estimators_csv(es, rep.estimators);
  const auto rows = read_rejections_csv(rs);
  const auto ests = read_estimators_csv(es);
  ASSERT_EQ(rows.size(), rep.rejections.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].objective, rep.rejections[k].objective);
    EXPECT_EQ(rows[k].kind, rep.rejections[k].kind);
    EXPECT_EQ(rows[k].delta, rep.rejections[k].delta);
    EXPECT_EQ(rows[k].rejections, rep.rejections[k].rejections);
    EXPECT_EQ(rows[k].rate, rep.rejections[k].rate);
    EXPECT_EQ(rows[k].mc_se, rep.rejections[k].mc_se);
  }
  ASSERT_EQ(ests.size(), rep.estimators.size());
  for (std::size_t k = 0; k < ests.size(); ++k) {
    EXPECT_EQ(ests[k].parameter, rep.estimators[k].parameter);
    EXPECT_EQ(ests[k].mean, rep.estimators[k].mean);
    EXPECT_EQ(ests[k].rmse, rep.estimators[k].rmse);
  }
}

TEST(MonteCarlo, GridWithoutZeroIsRejected) {
  auto cfg = small_config("probit-ae-static", 10, 5, 2);
  cfg.delta_grid = {0.1, 0.2};
  try {
    monte_carlo(cfg);
    FAIL() << "expected ConfigError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
}

TEST(MonteCarlo, PowerRisesAwayFromNull) {
  auto cfg = small_config("logit-ae-static", 40, 20, 40);
  cfg.objectives = {ObjectiveKind::corrected};
  cfg.delta_grid = {0.0, 0.1, 0.2, 0.3};
  const auto rep = monte_carlo(cfg);
  ASSERT_EQ(rep.rejections.size(), 4u);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_GE(rep.rejections[k].rate, rep.rejections[k - 1].rate);
  EXPECT_GT(rep.rejections[3].rate, 0.5);
}

TEST(MonteCarlo, CorrectionReducesBias) {
  auto cfg = small_config("logit-ae-dynamic", 56, 14, 60);
  cfg.objectives = {ObjectiveKind::raw, ObjectiveKind::corrected};
  cfg.delta_grid = {0.0};
  cfg.threads = 4;
  const auto rep = monte_carlo(cfg);
  EXPECT_EQ(rep.excluded, 0);
  // Rows are objective-major, parameters rho then beta.
  ASSERT_EQ(rep.estimators.size(), 4u);
  for (int j = 0; j < 2; ++j)
    EXPECT_LT(std::abs(rep.estimators[2 + j].pct_bias), std::abs(rep.estimators[j].pct_bias))
        << rep.estimators[j].parameter;
}

TEST(MonteCarlo, HeavySanitizingExcludesReplication) {
  auto cfg = small_config("logit-ae-dynamic", 10, 3, 4);
  cfg.max_shrink = 0.0;
  cfg.objectives = {ObjectiveKind::raw};
  const auto rep = monte_carlo(cfg);
  for (const auto& r : rep.replications) {
    if (r.dropped_units + r.dropped_periods > 0) {
      EXPECT_FALSE(r.included);
      EXPECT_NE(r.reason.find("sanitize"), std::string::npos);
    }
  }
  EXPECT_GT(rep.excluded, 0);
}
