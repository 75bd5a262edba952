#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twfe/error.hpp"
#include "twfe/inference.hpp"
#include "twfe/panel.hpp"
#include "twfe/simulation.hpp"

namespace twfe {

struct ColumnRoles {
  std::string unit = "unit";
  std::string time = "time";
  std::string outcome = "y";
  std::vector<std::string> x;
  std::string u;
  std::string v;
};

namespace detail {

inline std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

inline std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool to_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && ptr == e && std::isfinite(v);
}

/// Sorts labels numerically when every label is a number, else lexically.
inline std::vector<std::string> sorted_labels(const std::set<std::string>& labels) {
  std::vector<std::string> out(labels.begin(), labels.end());
  double tmp = 0.0;
  const bool numeric = std::all_of(out.begin(), out.end(), [&](const std::string& s) { return to_number(s, tmp); });
  if (numeric) {
    std::stable_sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      double x = 0.0, y = 0.0;
      to_number(a, x);
      to_number(b, y);
      return x < y;
    });
  }
  return out;
}

}  // namespace detail

/// Reads a long-format table (header row, one row per unit-period) and pivots
/// it to a balanced panel. With lag_order 1 the first period of every unit
/// supplies the initial condition and is not part of the estimation sample.
inline PanelData ingest(std::istream& is, const ColumnRoles& roles, int lag_order = 0) {
  std::string header;
  if (!std::getline(is, header)) throw Error(ErrorKind::EmptyPanel, "input has no header row");
  char delim = ',';
  for (char c : {'\t', ';', ','})
    if (header.find(c) != std::string::npos) delim = c;
  const auto cols = detail::split(header, delim);
  auto col_index = [&](const std::string& name) {
    const auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) throw Error(ErrorKind::ConfigError, "column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - cols.begin());
  };
  const std::size_t iu = col_index(roles.unit), it = col_index(roles.time), iy = col_index(roles.outcome);
  std::vector<std::string> cov_names = roles.x;
  if (!roles.u.empty()) cov_names.push_back(roles.u);
  if (!roles.v.empty() && roles.v != roles.u) cov_names.push_back(roles.v);
  std::vector<std::size_t> cov_idx;
  for (const auto& c : cov_names) cov_idx.push_back(col_index(c));

  struct Row {
    std::string unit, time;
    double y;
    std::vector<double> cov;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  std::set<std::string> units, times;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, delim);
    if (f.size() != cols.size())
      throw Error(ErrorKind::NonNumericField, "row " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                                                  " fields, expected " + std::to_string(cols.size()));
    Row r;
    r.unit = f[iu];
    r.time = f[it];
    r.line = lineno;
    auto num = [&](std::size_t k) {
      double v = 0.0;
      if (!detail::to_number(f[k], v))
        throw Error(ErrorKind::NonNumericField,
                    "row " + std::to_string(lineno) + ", column '" + cols[k] + "': '" + f[k] + "' is not numeric");
      return v;
    };
    r.y = num(iy);
    for (auto k : cov_idx) r.cov.push_back(num(k));
    const auto key = std::make_pair(r.unit, r.time);
    if (auto s = seen.find(key); s != seen.end())
      throw Error(ErrorKind::DuplicateCell, "row " + std::to_string(lineno) + " repeats unit " + r.unit +
                                                ", time " + r.time + " first seen at row " +
                                                std::to_string(s->second));
    seen.emplace(key, lineno);
    units.insert(r.unit);
    times.insert(r.time);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyPanel, "input has no data rows");
  const auto unit_labels = detail::sorted_labels(units);
  const auto time_labels = detail::sorted_labels(times);
  const int n = static_cast<int>(unit_labels.size()), t = static_cast<int>(time_labels.size());
  if (rows.size() != static_cast<std::size_t>(n) * t) {
    std::ostringstream gaps;
    std::map<std::string, std::set<std::string>> have;
    for (const auto& r : rows) have[r.unit].insert(r.time);
    int reported = 0;
    for (const auto& u : unit_labels) {
      std::vector<std::string> missing;
      for (const auto& s : time_labels)
        if (!have[u].count(s)) missing.push_back(s);
      if (missing.empty()) continue;
      if (reported++ < 20) {
        gaps << " unit " << u << " missing";
        for (const auto& s : missing) gaps << ' ' << s;
        gaps << ';';
      }
    }
    throw Error(ErrorKind::UnbalancedPanel, "panel is unbalanced:" + gaps.str());
  }
  std::map<std::string, int> upos, tpos;
  for (int i = 0; i < n; ++i) upos[unit_labels[i]] = i;
  for (int s = 0; s < t; ++s) tpos[time_labels[s]] = s;
  Eigen::MatrixXd y(n, t);
  std::vector<Eigen::MatrixXd> cov(cov_names.size(), Eigen::MatrixXd(n, t));
  for (const auto& r : rows) {
    const int i = upos[r.unit], s = tpos[r.time];
    y(i, s) = r.y;
    for (std::size_t k = 0; k < cov.size(); ++k) cov[k](i, s) = r.cov[k];
  }
  const int first = lag_order > 0 ? 1 : 0;
  if (t - first < 1) throw Error(ErrorKind::EmptyPanel, "no periods left after taking the initial condition");
  std::map<std::string, Eigen::MatrixXd> covariates;
  for (std::size_t k = 0; k < cov.size(); ++k) covariates[cov_names[k]] = cov[k].rightCols(t - first);
  PanelData d = make_panel(y.rightCols(t - first), first ? Eigen::VectorXd(y.col(0)) : Eigen::VectorXd{},
                           std::move(covariates));
  d.unit_labels = unit_labels;
  d.time_labels.assign(time_labels.begin() + first, time_labels.end());
  return d;
}

inline PanelData ingest(const std::string& path, const ColumnRoles& roles, int lag_order = 0) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open '" + path + "'");
  return ingest(in, roles, lag_order);
}

/// Writes a panel in long format. With initial conditions, a period labelled
/// "0" carries y_init and zero covariates so that ingest with lag_order 1
/// reproduces the panel.
inline void write_panel_csv(std::ostream& os, const PanelData& d) {
  os << "unit,time,y";
  for (const auto& [name, m] : d.covariates) os << ',' << name;
  os << '\n';
  for (int i = 0; i < d.n_units(); ++i) {
    if (d.y_init.size() > 0) {
      os << d.unit_labels[i] << ",0," << format_double(d.y_init[i]);
      for (std::size_t k = 0; k < d.covariates.size(); ++k) os << ",0";
      os << '\n';
    }
    for (int s = 0; s < d.n_periods(); ++s) {
      os << d.unit_labels[i] << ',' << d.time_labels[s] << ',' << format_double(d.y(i, s));
      for (const auto& [name, m] : d.covariates) os << ',' << format_double(m(i, s));
      os << '\n';
    }
  }
}

/// Parses restrictions such as "rho=0", "l1=l2", "l1=l2=l3" or a comma
/// separated conjunction of them into C theta = c.
inline Constraint parse_constraint(const std::string& text, const std::vector<std::string>& names) {
  const auto clauses = detail::split(text, ',');
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  const auto p = static_cast<Eigen::Index>(names.size());
  for (const auto& clause : clauses) {
    if (clause.empty()) continue;
    const auto terms = detail::split(clause, '=');
    if (terms.size() < 2) throw Error(ErrorKind::ConfigError, "restriction '" + clause + "' has no '='");
    for (std::size_t k = 0; k + 1 < terms.size(); ++k) {
      const std::string& a = terms[k];
      const std::string& b = terms[k + 1];
      double va = 0.0, vb = 0.0;
      const bool na = detail::to_number(a, va), nb = detail::to_number(b, vb);
      auto index_of = [&](const std::string& s) {
        const auto it = std::find(names.begin(), names.end(), s);
        if (it == names.end()) throw Error(ErrorKind::ConfigError, "unknown parameter '" + s + "'");
        return static_cast<Eigen::Index>(it - names.begin());
      };
      Eigen::VectorXd row = Eigen::VectorXd::Zero(p);
      if (na && nb) throw Error(ErrorKind::ConfigError, "restriction '" + clause + "' compares two numbers");
      if (!na && !nb) {
        row[index_of(a)] += 1.0;
        row[index_of(b)] -= 1.0;
        rhs.push_back(0.0);
      } else {
        row[index_of(na ? b : a)] = 1.0;
        rhs.push_back(na ? va : vb);
      }
      rows.push_back(row);
    }
  }
  if (rows.empty()) throw Error(ErrorKind::ConfigError, "empty restriction");
  Eigen::MatrixXd c(rows.size(), p);
  for (std::size_t k = 0; k < rows.size(); ++k) c.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
  Eigen::VectorXd cv = Eigen::Map<Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(c.transpose());
  if (qr.rank() < c.rows())
    throw Error(ErrorKind::RankDeficientConstraint, "restrictions '" + text + "' are linearly dependent");
  return Constraint::linear(std::move(c), std::move(cv), text);
}

}  // namespace twfe
