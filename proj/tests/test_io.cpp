#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"

using namespace twfe;

namespace {

ErrorKind kind_of(const std::string& text, int lag = 0, ColumnRoles roles = {}) {
  std::istringstream in(text);
  try {
    ingest(in, roles, lag);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::ConfigError;
}

std::string message_of(const std::string& text) {
  std::istringstream in(text);
  try {
    ingest(in, {}, 0);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Ingest, SmallPanelWithAndWithoutLag) {
  const std::string csv =
      "unit,time,y\n"
      "a,1,0\n"
      "a,2,1\n"
      "a,3,1\n"
      "b,1,1\n"
      "b,2,0\n"
      "b,3,0\n";
  std::istringstream s0(csv), s1(csv);
  const auto d0 = ingest(s0, {}, 0);
  EXPECT_EQ(d0.n_units(), 2);
  EXPECT_EQ(d0.n_periods(), 3);
  EXPECT_EQ(d0.y_init.size(), 0);
  const auto d1 = ingest(s1, {}, 1);
  EXPECT_EQ(d1.n_units(), 2);
  EXPECT_EQ(d1.n_periods(), 2);
  EXPECT_EQ(d1.y_init, Eigen::Vector2d(0, 1));
  Eigen::MatrixXd lag(2, 2);
  lag << 0, 1, 1, 0;
  EXPECT_EQ(d1.y_lag, lag);
  EXPECT_EQ(d1.time_labels, (std::vector<std::string>{"2", "3"}));
}

TEST(Ingest, ShuffledRowsGiveSamePanel) {
  std::ifstream in(twfe::testing::fixture("logit_loaded.csv"));
  std::string header, line;
  std::getline(in, header);
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ColumnRoles roles;
  roles.x = {"x"};
  roles.u = "u";
  roles.v = "v";
  auto read = [&](const std::vector<std::string>& rows) {
    std::ostringstream os;
    os << header << '\n';
    for (const auto& r : rows) os << r << '\n';
    std::istringstream is(os.str());
    return ingest(is, roles, 1);
  };
  const auto base = read(lines);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(lines.begin(), lines.end(), rng);
    const auto d = read(lines);
    EXPECT_EQ(d.y, base.y);
    EXPECT_EQ(d.y_init, base.y_init);
    EXPECT_EQ(d.y_lag, base.y_lag);
    EXPECT_EQ(d.covariates, base.covariates);
    EXPECT_EQ(d.unit_labels, base.unit_labels);
    EXPECT_EQ(d.time_labels, base.time_labels);
  }
}

TEST(Ingest, NumericLabelsSortNumerically) {
  std::istringstream in("unit,time,y\n10,2,1\n9,2,0\n10,10,0\n9,10,1\n");
  const auto d = ingest(in, {}, 0);
  EXPECT_EQ(d.unit_labels, (std::vector<std::string>{"9", "10"}));
  EXPECT_EQ(d.time_labels, (std::vector<std::string>{"2", "10"}));
  EXPECT_EQ(d.y(0, 1), 1.0);
}

TEST(Ingest, OtherDelimiters) {
  std::istringstream tab("unit\ttime\ty\n1\t1\t0.5\n1\t2\t1.5\n");
  EXPECT_EQ(ingest(tab, {}, 0).y(0, 1), 1.5);
  std::istringstream semi("unit;time;y\n1;1;0.5\n1;2;-1\n");
  EXPECT_EQ(ingest(semi, {}, 0).y(0, 1), -1.0);
}

TEST(Ingest, DuplicateCellReportsRow) {
  const std::string csv = "unit,time,y\n1,1,0\n1,2,1\n1,1,1\n";
  EXPECT_EQ(kind_of(csv), ErrorKind::DuplicateCell);
  EXPECT_NE(message_of(csv).find("row 4"), std::string::npos);
}

TEST(Ingest, UnbalancedPanelListsGaps) {
  const std::string csv = "unit,time,y\n1,1,0\n1,2,1\n2,1,1\n";
  EXPECT_EQ(kind_of(csv), ErrorKind::UnbalancedPanel);
  EXPECT_NE(message_of(csv).find("unit 2 missing 2"), std::string::npos);
}

TEST(Ingest, NonNumericFieldReportsLocation) {
  const std::string csv = "unit,time,y\n1,1,0\n1,2,yes\n";
  EXPECT_EQ(kind_of(csv), ErrorKind::NonNumericField);
  const auto msg = message_of(csv);
  EXPECT_NE(msg.find("row 3"), std::string::npos);
  EXPECT_NE(msg.find("'y'"), std::string::npos);
  EXPECT_EQ(kind_of("unit,time,y\n1,1,nan\n"), ErrorKind::NonNumericField);
  EXPECT_EQ(kind_of("unit,time,y\n1,1\n"), ErrorKind::NonNumericField);
}

TEST(Ingest, MissingColumnAndEmptyInput) {
  ColumnRoles roles;
  roles.x = {"age"};
  EXPECT_EQ(kind_of("unit,time,y\n1,1,0\n", 0, roles), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of(""), ErrorKind::EmptyPanel);
  EXPECT_EQ(kind_of("unit,time,y\n"), ErrorKind::EmptyPanel);
  EXPECT_EQ(kind_of("unit,time,y\n1,1,0\n2,1,1\n", 1), ErrorKind::EmptyPanel);
}

TEST(Ingest, WriteThenReadRoundTrips) {
  const auto [data, truth] = generate(design_from_name("logit-ds-dynamic", 7, 5), 4);
  std::stringstream ss;
  write_panel_csv(ss, data);
  ColumnRoles roles;
  roles.x = {"x"};
  roles.u = "u";
  roles.v = "v";
  const auto back = ingest(ss, roles, 1);
  EXPECT_EQ(back.y, data.y);
  EXPECT_EQ(back.y_init, data.y_init);
  EXPECT_EQ(back.covariates, data.covariates);
}

TEST(ParseConstraint, Grammar) {
  const std::vector<std::string> names{"rho", "x", "l1", "l2", "l3"};
  const auto a = parse_constraint("rho=0", names);
  EXPECT_EQ(a.r, 1);
  EXPECT_EQ(a.c, (Eigen::MatrixXd(1, 5) << 1, 0, 0, 0, 0).finished());
  EXPECT_EQ(a.rhs[0], 0.0);
  const auto b = parse_constraint("l1=l2=l3", names);
  EXPECT_EQ(b.r, 2);
  EXPECT_EQ(b.c, (Eigen::MatrixXd(2, 5) << 0, 0, 1, -1, 0, 0, 0, 0, 1, -1).finished());
  const auto c = parse_constraint("rho=0.5, 1.25=x", names);
  EXPECT_EQ(c.r, 2);
  EXPECT_EQ(c.rhs, Eigen::Vector2d(0.5, 1.25));
  EXPECT_EQ(c.c(1, 1), 1.0);
}

TEST(ParseConstraint, Errors) {
  const std::vector<std::string> names{"rho", "x"};
  auto kind = [&](const std::string& text) {
    try {
      parse_constraint(text, names);
    } catch (const Error& e) {
      return e.kind();
    }
    ADD_FAILURE() << text;
    return ErrorKind::EmptyPanel;
  };
  EXPECT_EQ(kind("beta=0"), ErrorKind::ConfigError);
  EXPECT_EQ(kind("rho"), ErrorKind::ConfigError);
  EXPECT_EQ(kind("1=2"), ErrorKind::ConfigError);
  EXPECT_EQ(kind(""), ErrorKind::ConfigError);
  EXPECT_EQ(kind("rho=x,x=rho"), ErrorKind::RankDeficientConstraint);
}
