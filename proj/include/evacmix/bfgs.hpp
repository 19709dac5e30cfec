#pragma once

// BFGS with a strong-Wolfe line search, minimizing f(x). The objective
// writes the gradient into its second argument and returns f, or +inf
// when x is outside the region where f can be evaluated.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "evacmix/errors.hpp"

namespace evacmix {

struct OptimizerConfig {
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-6;  // infinity norm
  double step_tolerance = 1e-10;     // infinity norm of the accepted step, relative to 1 + |x|
  double c1 = 1e-4;
  double c2 = 0.9;
  bool fd_check = false;
  std::size_t max_line_search = 40;
  unsigned threads = 1;
  std::function<void(std::size_t iteration, double f, double gradient_norm)> on_iteration;

  void validate() const {
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw ConfigurationError("Wolfe constants need 0 < c1 < c2 < 1");
    if (gradient_tolerance <= 0.0 || step_tolerance < 0.0) throw ConfigurationError("tolerances must be positive");
  }
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  std::string message;
};

using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

namespace detail {

struct LinePoint {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative
  Eigen::VectorXd g;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), kept inside a safeguarded bracket.
inline double cubic_step(const LinePoint& a, const LinePoint& b) {
  const double lo = std::min(a.alpha, b.alpha), hi = std::max(a.alpha, b.alpha);
  const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  double t = 0.5 * (lo + hi);
  if (disc >= 0.0 && std::isfinite(b.f)) {
    const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
    const double cand = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    if (std::isfinite(cand)) t = cand;
  }
  const double margin = 0.1 * (hi - lo);
  return std::clamp(t, lo + margin, hi - margin);
}

}  // namespace detail

/// Finds a step satisfying the strong Wolfe conditions along `dir`.
/// Returns false when no such step was found within the evaluation budget;
/// `best` then holds the lowest point seen (possibly alpha = 0).
inline bool wolfe_line_search(const Objective& fn, const Eigen::VectorXd& x, const Eigen::VectorXd& dir,
                              const detail::LinePoint& start, double alpha0, const OptimizerConfig& cfg,
                              detail::LinePoint& best, std::size_t& evaluations) {
  auto eval = [&](double alpha) {
    detail::LinePoint p;
    p.alpha = alpha;
    p.g.resize(x.size());
    p.f = fn(x + alpha * dir, p.g);
    ++evaluations;
    p.slope = std::isfinite(p.f) ? p.g.dot(dir) : std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(p.f) && p.f < best.f) best = p;
    return p;
  };
  auto sufficient = [&](const detail::LinePoint& p) {
    return std::isfinite(p.f) && p.f <= start.f + cfg.c1 * p.alpha * start.slope;
  };
  auto curvature = [&](const detail::LinePoint& p) { return std::abs(p.slope) <= -cfg.c2 * start.slope; };

  best = start;
  detail::LinePoint prev = start;
  double alpha = alpha0;
  std::size_t used = 0;

  auto zoom = [&](detail::LinePoint lo, detail::LinePoint hi) {
    while (used < cfg.max_line_search) {
      const double a = std::isfinite(hi.f) ? detail::cubic_step(lo, hi) : 0.5 * (lo.alpha + hi.alpha);
      const auto p = eval(a);
      ++used;
      if (!sufficient(p) || p.f >= lo.f) {
        hi = p;
      } else {
        if (curvature(p)) return true;
        if (p.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = p;
      }
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
    }
    return false;
  };

  while (used < cfg.max_line_search) {
    const auto p = eval(alpha);
    ++used;
    if (!std::isfinite(p.f)) {
      // Outside the evaluable region: shrink toward the last good point.
      if (!zoom(prev, p)) return false;
      return true;
    }
    if (!sufficient(p) || (used > 1 && p.f >= prev.f)) return zoom(prev, p);
    if (curvature(p)) return true;
    if (p.slope >= 0.0) return zoom(p, prev);
    prev = p;
    alpha *= 2.0;
  }
  return false;
}

inline MinimizeResult bfgs_minimize(const Objective& fn, Eigen::VectorXd x0, const OptimizerConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = x0.size();
  MinimizeResult res;
  res.x = std::move(x0);
  res.gradient.resize(n);
  res.f = fn(res.x, res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(res.f)) {
    res.message = "objective is not finite at the starting point";
    return res;
  }

  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  bool reset_tried = false;
  for (res.iterations = 0; res.iterations < cfg.max_iterations; ++res.iterations) {
    const double gnorm = n ? res.gradient.lpNorm<Eigen::Infinity>() : 0.0;
    if (cfg.on_iteration) cfg.on_iteration(res.iterations, res.f, gnorm);
    if (gnorm < cfg.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }

    Eigen::VectorXd dir = -Hinv * res.gradient;
    double slope = res.gradient.dot(dir);
    if (!(slope < 0.0)) {
      Hinv.setIdentity();
      scaled = false;
      dir = -res.gradient;
      slope = res.gradient.dot(dir);
    }
    const double alpha0 = scaled ? 1.0 : std::min(1.0, 1.0 / std::max(gnorm, 1e-300));

    detail::LinePoint start{0.0, res.f, slope, res.gradient};
    detail::LinePoint best;
    const bool ok = wolfe_line_search(fn, res.x, dir, start, alpha0, cfg, best, res.evaluations);
    if (best.alpha == 0.0) {
      // Quasi-Newton decrement already below the rounding of f: nothing left to gain.
      if (scaled && -slope <= 1e3 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(res.f))) {
        res.converged = true;
        res.message = "objective flat to machine precision";
        return res;
      }
      if (!reset_tried) {
        // Retry once from steepest descent before giving up.
        Hinv.setIdentity();
        scaled = false;
        reset_tried = true;
        continue;
      }
      res.message = "line search failed to find a decrease";
      return res;
    }
    reset_tried = false;
    (void)ok;  // a non-Wolfe step with a decrease is still accepted

    const Eigen::VectorXd s = best.alpha * dir;
    const Eigen::VectorXd y = best.g - res.gradient;
    res.x += s;
    res.f = best.f;
    res.gradient = best.g;

    if (s.lpNorm<Eigen::Infinity>() < cfg.step_tolerance * (1.0 + res.x.lpNorm<Eigen::Infinity>())) {
      res.converged = true;
      res.message = "step tolerance reached";
      ++res.iterations;
      return res;
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        Hinv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = Hinv * y;
      const double yHy = y.dot(Hy);
      Hinv += ((1.0 + rho * yHy) * rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
  res.message = "iteration limit reached";
  return res;
}

}  // namespace evacmix
