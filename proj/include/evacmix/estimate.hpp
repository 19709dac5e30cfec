#pragma once

// Simulated maximum likelihood by BFGS, sandwich covariance, fit statistics.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "evacmix/bfgs.hpp"
#include "evacmix/dataset.hpp"
#include "evacmix/draws.hpp"
#include "evacmix/errors.hpp"
#include "evacmix/kernel.hpp"
#include "evacmix/model_spec.hpp"

namespace evacmix {

struct FitStatistics {
  double ll_null = 0.0;
  double adjusted_rho_sq = 0.0;
};

/// Equal-shares null log-likelihood and the parameter-penalized rho-square
/// 1 - (LL - K) / LL0, one entry of `n_alts_available` per modelled task.
inline FitStatistics fit_statistics(double ll_final, std::size_t n_estimated,
                                    std::span<const std::size_t> n_alts_available) {
  FitStatistics s;
  for (const std::size_t j : n_alts_available) {
    if (j == 0) throw std::invalid_argument("fit_statistics: task with no available alternatives");
    s.ll_null -= std::log(static_cast<double>(j));
  }
  if (s.ll_null == 0.0) throw std::invalid_argument("fit_statistics: null log-likelihood is zero");
  s.adjusted_rho_sq = 1.0 - (ll_final - static_cast<double>(n_estimated)) / s.ll_null;
  return s;
}

inline std::vector<std::size_t> available_counts(const ChoiceDataset& d) {
  std::vector<std::size_t> out;
  for (const auto& p : d.individuals)
    for (const auto& t : p.tasks) out.push_back(t.n_available());
  return out;
}

struct EstimationResult {
  ModelSpec spec;
  std::vector<std::string> names;
  ParameterVector estimates;
  std::vector<double> classical_se;
  std::vector<double> robust_se;
  std::vector<double> robust_t;
  double ll_final = 0.0;
  double ll_null = 0.0;
  double adjusted_rho_sq = 0.0;
  std::size_t n_individuals = 0;
  std::size_t n_outcomes = 0;
  std::size_t n_draws = 0;
  bool converged = false;
  std::size_t iterations = 0;
  DrawPlan draw_plan;
  std::optional<Eigen::MatrixXd> classical_covariance;
  std::optional<Eigen::MatrixXd> robust_covariance;
  std::vector<std::string> warnings;
  std::string message;

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return k;
    return std::nullopt;
  }
  double estimate(std::string_view name) const {
    const auto k = index_of(name);
    if (!k) throw std::out_of_range("no estimated parameter named '" + std::string(name) + "'");
    return estimates[*k];
  }
};

inline std::vector<double> t_ratios(std::span<const double> estimates, std::span<const double> se) {
  std::vector<double> t(estimates.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < estimates.size(); ++k)
    if (k < se.size() && se[k] > 0.0) t[k] = estimates[k] / se[k];
  return t;
}

struct CovarianceEstimate {
  Eigen::MatrixXd hessian;    // negative Hessian of the log-likelihood
  Eigen::MatrixXd bhhh;       // sum over individuals of score outer products
  Eigen::MatrixXd classical;  // H^-1
  Eigen::MatrixXd robust;     // H^-1 B H^-1
  std::vector<std::string> warnings;
};

namespace detail {

inline void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

// Clamps negative eigenvalues to zero; returns the number clamped.
inline int floor_eigenvalues(Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  int clamped = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] < 0.0) {
      ev[i] = 0.0;
      ++clamped;
    }
  if (clamped) {
    m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    symmetrize(m);
  }
  return clamped;
}

}  // namespace detail

/// Classical (H^-1) and panel-robust sandwich (H^-1 B H^-1) covariances.
/// H is the negative Hessian from central differences of the analytic score,
/// B sums outer products of per-individual scores.
inline CovarianceEstimate robust_covariance(const CompiledModel& cm, std::span<const double> theta,
                                            const DrawTensor& draws, unsigned threads = 1) {
  const std::size_t K = cm.n_estimated();
  const std::size_t N = cm.n_individuals();
  EvaluationOptions opt;
  opt.individual_scores = true;
  opt.threads = threads;
  const auto at = simulated_loglikelihood(cm, theta, draws, opt);

  CovarianceEstimate out;
  out.bhhh = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  for (std::size_t n = 0; n < N; ++n) {
    const Eigen::Map<const Eigen::VectorXd> s(at.individual_scores.data() + n * K, static_cast<Eigen::Index>(K));
    out.bhhh.noalias() += s * s.transpose();
  }

  out.hessian.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  EvaluationOptions sopt;
  sopt.score = true;
  sopt.threads = threads;
  std::vector<double> x(theta.begin(), theta.end());
  for (std::size_t k = 0; k < K; ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[k]));
    x[k] = theta[k] + h;
    const auto up = *simulated_loglikelihood(cm, x, draws, sopt).score;
    x[k] = theta[k] - h;
    const auto down = *simulated_loglikelihood(cm, x, draws, sopt).score;
    x[k] = theta[k];
    const double step = (theta[k] + h) - (theta[k] - h);
    for (std::size_t i = 0; i < K; ++i)
      out.hessian(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = -(up[i] - down[i]) / step;
  }
  detail::symmetrize(out.hessian);

  const auto names = cm.spec().estimated_names();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.hessian);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  if (K > 0 && ev[0] <= 1e-12 * scale) {
    Eigen::Index worst = 0;
    es.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
    throw EstimationError("Hessian is singular or indefinite (smallest eigenvalue " + detail::format_number(ev[0]) +
                          "); parameter '" + names[static_cast<std::size_t>(worst)] + "' is likely unidentified");
  }
  out.classical = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  detail::symmetrize(out.classical);
  out.robust = out.classical * out.bhhh * out.classical;
  detail::symmetrize(out.robust);
  if (const int c = detail::floor_eigenvalues(out.classical))
    out.warnings.push_back("classical covariance: " + std::to_string(c) + " negative eigenvalue(s) floored at 0");
  if (const int c = detail::floor_eigenvalues(out.robust))
    out.warnings.push_back("robust covariance: " + std::to_string(c) + " negative eigenvalue(s) floored at 0");
  return out;
}

inline std::vector<double> standard_errors(const Eigen::MatrixXd& cov) {
  std::vector<double> se(static_cast<std::size_t>(cov.rows()));
  for (Eigen::Index i = 0; i < cov.rows(); ++i) se[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, cov(i, i)));
  return se;
}

/// Spec copy with every parameter fixed and expressed in preference space:
/// the plain logit used for warm starts.
inline ModelSpec fixed_preference_spec(const ModelSpec& m) {
  ModelSpec s = m;
  s.space = Space::preference;
  for (auto& p : s.parameters) {
    p.kind = ParameterKind::fixed;
    p.init = 0.0;
    p.init_sd = 0.0;
  }
  return s;
}

/// Two-stage warm start: plain logit from zeros, then random spreads at 0.5
/// and lognormal locations at ln|stage-1 coefficient|. In wtp space the
/// stage-1 coefficients are converted to money values by the price coefficient.
inline ParameterVector default_start(const ChoiceDataset& d, const ModelSpec& m, const OptimizerConfig& cfg = {}) {
  const ModelSpec stage1 = fixed_preference_spec(m);
  const CompiledModel cm(d, stage1);
  const DrawTensor none = build_draw_tensor(DrawPlan::with_default_primes(0, 1, 0), d.individuals.size());
  EvaluationOptions opt;
  opt.score = true;
  opt.threads = cfg.threads;
  Objective fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    try {
      const auto ev = simulated_loglikelihood(cm, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), none, opt);
      for (Eigen::Index k = 0; k < x.size(); ++k) g[k] = -(*ev.score)[static_cast<std::size_t>(k)];
      return -ev.value;
    } catch (const EvaluationError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  OptimizerConfig c1 = cfg;
  c1.on_iteration = nullptr;
  const auto res = bfgs_minimize(fn, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.parameters.size())), c1);
  const Eigen::VectorXd& beta = res.x;

  const auto price = m.price_parameter();
  double phi = price ? beta[static_cast<Eigen::Index>(*price)] : -1.0;
  if (m.space == Space::wtp && !(phi < 0.0)) phi = -1e-3;

  ParameterVector start;
  for (std::size_t p = 0; p < m.parameters.size(); ++p) {
    const auto& def = m.parameters[p];
    double b = beta[static_cast<Eigen::Index>(p)];
    const bool money = m.space == Space::wtp && !(price && p == *price) &&
                       std::any_of(m.terms.begin(), m.terms.end(), [&](const UtilityTerm& t) {
                         return t.parameter == def.name && !t.is_constant();
                       });
    if (m.space == Space::wtp && price && p == *price) b = phi;
    else if (money) b /= phi;
    if (!def.is_random()) {
      start.push_back(b);
    } else if (def.distribution == Distribution::negated_lognormal) {
      start.push_back(std::log(std::max(std::abs(b), 1e-6)));
      start.push_back(0.5);
    } else {
      start.push_back(b);
      start.push_back(0.5);
    }
  }
  return start;
}

/// Maximizes the simulated log-likelihood from `start`, then attaches
/// covariances and fit statistics. Convergence failures come back as
/// converged = false with the best point reached.
inline EstimationResult maximize(const ChoiceDataset& d, const ModelSpec& m, const DrawPlan& plan,
                                 const OptimizerConfig& cfg, const ParameterVector& start) {
  cfg.validate();
  const CompiledModel cm(d, m);
  if (plan.dimensions() != cm.random_parameters().size())
    throw ConfigurationError("draw plan has " + std::to_string(plan.dimensions()) + " dimensions, spec has " +
                             std::to_string(cm.random_parameters().size()) + " random parameters");
  if (start.size() != m.n_estimated())
    throw EstimationError("start vector has " + std::to_string(start.size()) + " entries, spec needs " +
                          std::to_string(m.n_estimated()));
  const DrawTensor draws = build_draw_tensor(plan, d.individuals.size());

  EvaluationOptions opt;
  opt.score = true;
  opt.threads = cfg.threads;
  Objective fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    try {
      const auto ev = simulated_loglikelihood(cm, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), draws, opt);
      for (Eigen::Index k = 0; k < x.size(); ++k) g[k] = -(*ev.score)[static_cast<std::size_t>(k)];
      return -ev.value;
    } catch (const EvaluationError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  EstimationResult r;
  r.spec = m;
  r.names = m.estimated_names();
  r.n_individuals = d.individuals.size();
  r.n_outcomes = d.n_observations();
  r.n_draws = plan.n_draws;
  r.draw_plan = plan;

  Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(start.data(), static_cast<Eigen::Index>(start.size()));
  {
    Eigen::VectorXd g(x0.size());
    try {
      const auto ev = simulated_loglikelihood(cm, start, draws, opt);
      if (!std::isfinite(ev.value)) throw EvaluationError("non-finite log-likelihood");
    } catch (const EvaluationError& e) {
      throw EstimationError(std::string("log-likelihood is not finite at the start values: ") + e.what());
    }
    if (cfg.fd_check) {
      fn(x0, g);
      Eigen::VectorXd gp(x0.size()), gm(x0.size()), x = x0;
      for (Eigen::Index k = 0; k < x0.size(); ++k) {
        const double h = 1e-5 * std::max(1.0, std::abs(x0[k]));
        x[k] = x0[k] + h;
        const double fp = fn(x, gp);
        x[k] = x0[k] - h;
        const double fm = fn(x, gm);
        x[k] = x0[k];
        const double fd = (fp - fm) / (2.0 * h);
        if (std::abs(fd - g[k]) > 1e-4 * std::max(1.0, std::abs(fd)))
          r.warnings.push_back("gradient check: " + r.names[static_cast<std::size_t>(k)] + " analytic " +
                               detail::format_number(-g[k]) + " vs finite difference " + detail::format_number(-fd));
      }
    }
  }

  const auto res = bfgs_minimize(fn, x0, cfg);
  r.estimates.assign(res.x.data(), res.x.data() + res.x.size());
  r.ll_final = -res.f;
  r.converged = res.converged;
  r.iterations = res.iterations;
  r.message = res.message;

  const auto fit = fit_statistics(r.ll_final, m.n_estimated(), available_counts(d));
  r.ll_null = fit.ll_null;
  r.adjusted_rho_sq = fit.adjusted_rho_sq;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    auto cov = robust_covariance(cm, r.estimates, draws, cfg.threads);
    r.classical_se = standard_errors(cov.classical);
    r.robust_se = standard_errors(cov.robust);
    r.classical_covariance = std::move(cov.classical);
    r.robust_covariance = std::move(cov.robust);
    for (auto& w : cov.warnings) r.warnings.push_back(std::move(w));
  } catch (const EstimationError& e) {
    r.warnings.emplace_back(e.what());
    r.classical_se.assign(r.estimates.size(), nan);
    r.robust_se.assign(r.estimates.size(), nan);
  } catch (const EvaluationError& e) {
    r.warnings.emplace_back(std::string("covariance evaluation failed: ") + e.what());
    r.classical_se.assign(r.estimates.size(), nan);
    r.robust_se.assign(r.estimates.size(), nan);
  }
  r.robust_t = t_ratios(r.estimates, r.robust_se);
  return r;
}

}  // namespace evacmix
