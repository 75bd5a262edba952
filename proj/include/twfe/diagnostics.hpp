#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "twfe/distributions.hpp"
#include "twfe/error.hpp"
#include "twfe/profiler.hpp"
#include "twfe/simulation.hpp"

namespace twfe {

/// Expected fixed-effect Hessian at (theta, phi) in the average scale.
struct ExpectedHessian {
  Eigen::VectorXd d_alpha;  // diagonal of H_aa
  Eigen::VectorXd d_gamma;  // diagonal of H_gg
  Eigen::MatrixXd m;        // H_ag, N x T
};

inline ExpectedHessian expected_fe_hessian(const PanelData& data, const ModelSpec& spec, const Eigen::VectorXd& theta,
                                           const Eigen::VectorXd& alpha, const Eigen::VectorXd& gamma,
                                           const ExpectedLikelihood& expected) {
  const Layers ly(data, spec, &expected);
  const FeBlock b = fe_block(ly, theta, alpha, gamma);
  const double nt = static_cast<double>(ly.n()) * ly.t();
  return {b.d_alpha / nt, b.d_gamma / nt, b.m / nt};
}

/// Schur complement of one diagonal block: A = H_gg - H_ga H_aa^-1 H_ag when
/// eliminating alpha, B = H_aa - H_ag H_gg^-1 H_ga when eliminating gamma.
inline Eigen::MatrixXd schur_complement(const ExpectedHessian& h, bool eliminate_alpha) {
  const Eigen::VectorXd& elim = eliminate_alpha ? h.d_alpha : h.d_gamma;
  const Eigen::VectorXd& keep = eliminate_alpha ? h.d_gamma : h.d_alpha;
  if ((elim.array() >= 0.0).any()) throw Error(ErrorKind::SingularBlock, "eliminated block is not negative definite");
  const Eigen::MatrixXd cross = eliminate_alpha ? Eigen::MatrixXd(h.m.transpose()) : h.m;  // keep x elim
  Eigen::MatrixXd s = -cross * elim.cwiseInverse().asDiagonal() * cross.transpose();
  s.diagonal() += keep;
  return 0.5 * (s + s.transpose());
}

enum class InverseMethod { factorization, eigen };

/// ||S^-1||_inf. When the index form has the joint shift direction
/// (alpha + c, gamma - c), S has the constant vector as its null space and
/// the Moore-Penrose inverse is used.
inline double schur_inverse_norm(const Eigen::MatrixXd& s, bool constant_null, InverseMethod method) {
  const auto k = s.rows();
  Eigen::MatrixXd inv;
  if (method == InverseMethod::eigen) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double cut = 1e-10 * ev.cwiseAbs().maxCoeff();
    Eigen::VectorXd ie = Eigen::VectorXd::Zero(k);
    for (Eigen::Index j = 0; j < k; ++j)
      if (std::abs(ev[j]) > cut) ie[j] = 1.0 / ev[j];
    inv = es.eigenvectors() * ie.asDiagonal() * es.eigenvectors().transpose();
  } else if (constant_null) {
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(k, 1.0 / std::sqrt(static_cast<double>(k)));
    const double c = s.diagonal().mean();
    const Eigen::MatrixXd uu = u * u.transpose();
    Eigen::MatrixXd shifted = s + c * uu;
    inv = shifted.partialPivLu().inverse() - uu / c;
  } else {
    inv = s.partialPivLu().inverse();
  }
  if (!inv.allFinite()) throw Error(ErrorKind::SingularBlock, "Schur complement is singular");
  return inv.cwiseAbs().rowwise().sum().maxCoeff();
}

inline bool has_constant_null(IndexForm f) { return f != IndexForm::covariate_loaded_fe; }

struct SchurSeries {
  std::string design;
  char which = 'A';  // 'A': T varies with N fixed; 'B': N varies with T fixed
  double delta = 0.0;
  int fixed_dim = 100;
  std::uint64_t seed = 0;
  std::vector<int> grid;
  std::vector<double> scaled_norm;  // ||A^-1||/T or ||B^-1||/N
  std::vector<double> dlog;         // first differences of the log series
  double mean = 0.0;
  double t_stat = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  bool insufficient_df = false;
};

/// Scaled inverse norm of A (or B) on one simulated panel at theta0 + delta.
inline double schur_point(const DgpDesign& base, char which, double delta, int n, int t, std::uint64_t seed,
                          InverseMethod method = InverseMethod::factorization) {
  DgpDesign design = base;
  design.n = n;
  design.t = t;
  const auto [data, truth] = generate(design, seed);
  const ModelSpec spec = design.model_spec();
  const Eigen::VectorXd theta = truth.theta0.array() + delta;
  ProfileOptions po;
  po.expected = &truth.expected;
  const ProfileResult prof = profile_fixed_effects(data, spec, theta, po);
  if (!prof.converged) throw Error(ErrorKind::NoConvergence, "expected-likelihood profiling did not converge");
  const ExpectedHessian h = expected_fe_hessian(data, spec, theta, prof.alpha_hat, prof.gamma_hat, truth.expected);
  const bool a = which == 'A';
  const Eigen::MatrixXd s = schur_complement(h, a);
  return schur_inverse_norm(s, has_constant_null(spec.index_form), method) / (a ? t : n);
}

inline SchurSeries schur_invariance_check(const DgpDesign& design, double delta, int fixed_dim,
                                          const std::vector<int>& grid, std::uint64_t seed, char which = 'A',
                                          int threads = 1) {
  if (which != 'A' && which != 'B') throw Error(ErrorKind::ConfigError, "series must be 'A' or 'B'");
  if (grid.empty()) throw Error(ErrorKind::ConfigError, "empty grid");
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (grid[k] <= grid[k - 1]) throw Error(ErrorKind::ConfigError, "grid must be strictly increasing");
  if (fixed_dim < 2 || grid.front() < 2) throw Error(ErrorKind::ConfigError, "dimensions must be at least 2");
  if (std::max(fixed_dim, grid.back()) > 1200)
    throw Error(ErrorKind::ConfigError, "dense diagnostics are capped at dimension 1200");

  SchurSeries out;
  out.design = design.name;
  out.which = which;
  out.delta = delta;
  out.fixed_dim = fixed_dim;
  out.seed = seed;
  out.grid = grid;
  out.scaled_norm.assign(grid.size(), 0.0);
  std::vector<std::string> errors(grid.size());
  std::atomic<int> next{0};
  const int count = static_cast<int>(grid.size());
  auto worker = [&] {
    for (int k = next++; k < count; k = next++) {
      const int n = which == 'A' ? fixed_dim : grid[k];
      const int t = which == 'A' ? grid[k] : fixed_dim;
      try {
        out.scaled_norm[k] = schur_point(design, which, delta, n, t, derive_seed(seed, static_cast<std::uint64_t>(k)));
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  const int nthreads = std::max(1, std::min(threads, count));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < nthreads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(ErrorKind::SingularBlock, "diagnostic grid point failed: " + e);

  for (std::size_t k = 1; k < grid.size(); ++k)
    out.dlog.push_back(std::log(out.scaled_norm[k]) - std::log(out.scaled_norm[k - 1]));
  const auto m = static_cast<double>(out.dlog.size());
  if (out.dlog.empty()) {
    out.mean = std::numeric_limits<double>::quiet_NaN();
    out.insufficient_df = true;
    return out;
  }
  double sum = 0.0;
  for (double v : out.dlog) sum += v;
  out.mean = sum / m;
  if (out.dlog.size() < 2) {
    out.insufficient_df = true;
    return out;
  }
  double ss = 0.0;
  for (double v : out.dlog) ss += (v - out.mean) * (v - out.mean);
  const double se = std::sqrt(ss / (m - 1.0) / m);
  out.t_stat = out.mean / se;
  out.p_value = dist::student_t_two_sided(out.t_stat, m - 1.0);
  return out;
}

}  // namespace twfe
