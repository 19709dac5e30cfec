#pragma once

// Realized coefficients, systematic utility, logit probabilities, and the
// simulated panel log-likelihood with its analytic score.
//
// Utility of alternative j for one coefficient realization:
//   preference space  V_j = sum_terms c_term * x_j,term
//   wtp space         V_j = sum_ASC c * 1 + phi * (price_j + sum_terms z_term * x_j,term)
// where x is the term attribute times its optional interaction multiplier.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <type_traits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "evacmix/dataset.hpp"
#include "evacmix/draws.hpp"
#include "evacmix/errors.hpp"
#include "evacmix/model_spec.hpp"

namespace evacmix {

/// Estimated values in canonical spec order (see ModelSpec::estimated_names).
using ParameterVector = std::vector<double>;

// Chosen probabilities below this are treated as a degenerate evaluation.
inline constexpr double kMinChosenProbability = 1e-300;

struct RealizedCoefficients {
  std::vector<double> values;  // one per ParameterDef
  std::optional<double> phi;   // price coefficient, when the spec names one
};

// Coefficient of one parameter for a standard-normal draw, with derivatives
// with respect to its location and spread slots.
struct Realization {
  double value;
  double d_location;
  double d_spread;
};

inline Realization realize(const ParameterDef& p, double location, double spread, double xi) {
  if (!p.is_random()) return {location, 1.0, 0.0};
  if (p.distribution == Distribution::normal) return {location + spread * xi, 1.0, xi};
  const double c = -std::exp(location + spread * xi);
  return {c, c, c * xi};
}

/// `draw_row` holds one standard normal per random parameter, in declaration order.
inline RealizedCoefficients realize_coefficients(std::span<const double> params, std::span<const double> draw_row,
                                                 const ModelSpec& m) {
  if (params.size() != m.n_estimated())
    throw EvaluationError("parameter vector has " + std::to_string(params.size()) + " entries, spec needs " +
                          std::to_string(m.n_estimated()));
  RealizedCoefficients out;
  out.values.reserve(m.parameters.size());
  std::size_t at = 0, k = 0;
  for (const auto& p : m.parameters) {
    if (p.is_random()) {
      if (k >= draw_row.size()) throw EvaluationError("draw row shorter than the number of random parameters");
      out.values.push_back(realize(p, params[at], params[at + 1], draw_row[k]).value);
      at += 2;
      ++k;
    } else {
      out.values.push_back(params[at]);
      ++at;
    }
  }
  if (const auto phi = m.price_parameter()) out.phi = out.values[*phi];
  return out;
}

/// Systematic utility of one alternative. `lookup(name)` returns the
/// alternative's attribute value or nullopt when it is not bound.
template <class Lookup>
  requires std::is_invocable_v<Lookup&, const std::string&>
double alternative_utility(const ModelSpec& m, const RealizedCoefficients& c, std::string_view alt_id,
                           Lookup&& lookup) {
  auto value_of = [&](const std::string& name) {
    const std::optional<double> v = lookup(name);
    if (!v) throw EvaluationError("attribute '" + name + "' is not bound for alternative " + std::string(alt_id));
    return *v;
  };
  const auto price_param = m.price_parameter();
  double utility_part = 0.0, money_part = 0.0;
  for (const auto& t : m.terms) {
    if (!t.applies(alt_id)) continue;
    const auto p = *m.parameter_index(t.parameter);
    double x = t.is_constant() ? 1.0 : value_of(t.attribute);
    if (t.multiplier_attribute) x *= value_of(*t.multiplier_attribute);
    if (m.space == Space::wtp) {
      if (price_param && p == *price_param) money_part += x;
      else if (t.is_constant()) utility_part += c.values[p] * x;
      else money_part += c.values[p] * x;
    } else {
      utility_part += c.values[p] * x;
    }
  }
  if (m.space == Space::wtp) {
    if (!c.phi) throw EvaluationError("wtp-space utility needs a price coefficient");
    return utility_part + *c.phi * money_part;
  }
  return utility_part;
}

inline double alternative_utility(const ModelSpec& m, const RealizedCoefficients& c, std::string_view alt_id,
                                  const std::map<std::string, double>& attributes) {
  return alternative_utility(m, c, alt_id, [&](const std::string& name) -> std::optional<double> {
    const auto it = attributes.find(name);
    return it == attributes.end() ? std::nullopt : std::optional<double>(it->second);
  });
}

inline double alternative_utility(const ModelSpec& m, const RealizedCoefficients& c, const ChoiceDataset& d,
                                  const AlternativeRecord& alt) {
  return alternative_utility(m, c, alt.alt_id, [&](const std::string& name) -> std::optional<double> {
    const auto k = d.attribute_index(name);
    return k ? std::optional<double>(alt.values[*k]) : std::nullopt;
  });
}

/// Logit probabilities over the available alternatives, max-shifted.
/// Unavailable alternatives get exactly 0.
inline std::vector<double> choice_probabilities(std::span<const double> V, const std::vector<bool>& available) {
  if (V.size() != available.size()) throw std::invalid_argument("choice_probabilities: size mismatch");
  double vmax = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < V.size(); ++j)
    if (available[j]) vmax = std::max(vmax, V[j]);
  if (vmax == -std::numeric_limits<double>::infinity())
    throw std::domain_error("choice_probabilities: no available alternative");
  std::vector<double> P(V.size(), 0.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < V.size(); ++j)
    if (available[j]) sum += (P[j] = std::exp(V[j] - vmax));
  for (auto& p : P) p /= sum;
  return P;
}

// Fixed-order pairwise sum, identical however the inputs were produced.
inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (const double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline unsigned default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Dataset and spec flattened into dense per-row design arrays.
class CompiledModel {
 public:
  struct Task {
    std::size_t begin;   // first row
    std::size_t n_alts;
    std::size_t chosen;  // offset within the task
  };

  CompiledModel(const ChoiceDataset& d, const ModelSpec& m) : spec_(m) {
    const auto violations = validate_spec(m, d);
    if (!violations.empty()) throw SpecError("spec does not match dataset: " + violations.front().detail);
    wtp_ = m.space == Space::wtp;
    if (wtp_) price_param_ = m.price_parameter();
    n_params_ = m.parameters.size();
    for (std::size_t p = 0; p < n_params_; ++p)
      if (m.parameters[p].is_random()) random_.push_back(p);
    offsets_ = m.offsets();

    struct Binding {
      std::size_t param;
      std::optional<std::size_t> attr, mult;
      bool constant, price;
    };
    std::vector<Binding> bind;
    for (const auto& t : m.terms) {
      Binding b{*m.parameter_index(t.parameter), std::nullopt, std::nullopt, t.is_constant(), false};
      if (!t.is_constant()) b.attr = d.attribute_index(t.attribute);
      if (t.multiplier_attribute) b.mult = d.attribute_index(*t.multiplier_attribute);
      b.price = wtp_ && price_param_ && b.param == *price_param_;
      bind.push_back(b);
    }

    person_begin_.push_back(0);
    for (const auto& person : d.individuals) {
      person_ids_.push_back(person.person_id);
      for (const auto& task : person.tasks) {
        Task ct{available_.size(), task.alternatives.size(), *task.find(task.chosen)};
        task_ids_.push_back(task.task_id);
        for (const auto& alt : task.alternatives) {
          available_.push_back(alt.available ? 1 : 0);
          util_.resize(util_.size() + n_params_, 0.0);
          money_.resize(money_.size() + n_params_, 0.0);
          price_.push_back(0.0);
          double* u = util_.data() + util_.size() - n_params_;
          double* z = money_.data() + money_.size() - n_params_;
          for (std::size_t i = 0; i < m.terms.size(); ++i) {
            if (!m.terms[i].applies(alt.alt_id)) continue;
            const auto& b = bind[i];
            double x = b.constant ? 1.0 : alt.values[*b.attr];
            if (b.mult) x *= alt.values[*b.mult];
            if (b.price) price_.back() += x;
            else if (wtp_ && !b.constant) z[b.param] += x;
            else u[b.param] += x;
          }
        }
        tasks_.push_back(ct);
      }
      person_begin_.push_back(tasks_.size());
    }
  }

  const ModelSpec& spec() const { return spec_; }
  bool wtp() const { return wtp_; }
  std::optional<std::size_t> price_parameter() const { return price_param_; }
  std::size_t n_individuals() const { return person_ids_.size(); }
  std::size_t n_params() const { return n_params_; }
  std::size_t n_estimated() const { return spec_.n_estimated(); }
  const std::vector<std::size_t>& random_parameters() const { return random_; }
  const std::vector<std::size_t>& offsets() const { return offsets_; }
  const std::vector<Task>& tasks() const { return tasks_; }
  std::size_t person_task_begin(std::size_t n) const { return person_begin_[n]; }
  std::size_t person_task_end(std::size_t n) const { return person_begin_[n + 1]; }
  const std::string& person_id(std::size_t n) const { return person_ids_[n]; }
  const std::string& task_id(std::size_t t) const { return task_ids_[t]; }

  double util(std::size_t row, std::size_t p) const { return util_[row * n_params_ + p]; }
  double money(std::size_t row, std::size_t p) const { return money_[row * n_params_ + p]; }
  double price(std::size_t row) const { return price_[row]; }
  bool available(std::size_t row) const { return available_[row] != 0; }

 private:
  ModelSpec spec_;
  bool wtp_ = false;
  std::optional<std::size_t> price_param_;
  std::size_t n_params_ = 0;
  std::vector<std::size_t> random_, offsets_;
  std::vector<double> util_, money_, price_;
  std::vector<std::uint8_t> available_;
  std::vector<Task> tasks_;
  std::vector<std::size_t> person_begin_;
  std::vector<std::string> person_ids_, task_ids_;
};

struct LikelihoodEvaluation {
  double value = 0.0;
  std::vector<double> per_individual;
  std::optional<std::vector<double>> score;
  // N x K row-major; filled when individual scores are requested.
  std::vector<double> individual_scores;
};

struct EvaluationOptions {
  bool score = false;
  bool individual_scores = false;
  unsigned threads = 1;
};

namespace detail {

struct PersonWorkspace {
  std::vector<double> base_util, base_money, V, money_total;
  std::vector<double> resid;      // rows x R
  std::vector<double> loglik;     // R
  std::vector<double> phi;        // R
  std::vector<double> coef;       // R x Q
  std::vector<double> draw_grad;  // R x Q : d ln P_r / d c_q
  std::vector<double> price_grad; // R     : d ln P_r / d phi
};

// ln L_n and (optionally) its gradient for one person.
inline double person_contribution(const CompiledModel& cm, std::span<const double> theta, const DrawTensor& draws,
                                  std::size_t n, PersonWorkspace& ws, double* grad) {
  const ModelSpec& m = cm.spec();
  const std::size_t P = cm.n_params();
  const auto& rand = cm.random_parameters();
  const std::size_t Q = rand.size();
  const std::size_t R = draws.n_draws();
  const auto& offs = cm.offsets();
  const bool wtp = cm.wtp();
  const auto price_p = cm.price_parameter();
  const bool price_random = wtp && price_p && m.parameters[*price_p].is_random();

  const std::size_t t_begin = cm.person_task_begin(n), t_end = cm.person_task_end(n);
  const std::size_t row_begin = cm.tasks()[t_begin].begin;
  const std::size_t row_end = cm.tasks()[t_end - 1].begin + cm.tasks()[t_end - 1].n_alts;
  const std::size_t rows = row_end - row_begin;

  // Draw-independent part of every row's utility and money sum.
  ws.base_util.assign(rows, 0.0);
  ws.base_money.assign(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t row = row_begin + i;
    double u = 0.0, z = wtp ? cm.price(row) : 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      if (m.parameters[p].is_random()) continue;
      const double c = theta[offs[p]];
      u += c * cm.util(row, p);
      z += c * cm.money(row, p);
    }
    ws.base_util[i] = u;
    ws.base_money[i] = z;
  }
  const double fixed_phi = (wtp && price_p && !price_random) ? theta[offs[*price_p]] : 0.0;

  ws.V.resize(rows);
  ws.money_total.resize(rows);
  ws.loglik.assign(R, 0.0);
  ws.phi.assign(R, fixed_phi);
  ws.coef.assign(R * Q, 0.0);
  if (grad) {
    ws.resid.assign(rows * R, 0.0);
    ws.draw_grad.assign(R * Q, 0.0);
    ws.price_grad.assign(R, 0.0);
  }
  const double log_floor = std::log(kMinChosenProbability);

  for (std::size_t r = 0; r < R; ++r) {
    const auto xi = draws.row(n, r);
    double* coef = ws.coef.data() + r * Q;
    for (std::size_t q = 0; q < Q; ++q) {
      const std::size_t p = rand[q];
      coef[q] = realize(m.parameters[p], theta[offs[p]], theta[offs[p] + 1], xi[q]).value;
      if (price_random && p == *price_p) ws.phi[r] = coef[q];
    }
    const double phi = ws.phi[r];

    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t row = row_begin + i;
      double u = ws.base_util[i], z = ws.base_money[i];
      for (std::size_t q = 0; q < Q; ++q) {
        u += coef[q] * cm.util(row, rand[q]);
        z += coef[q] * cm.money(row, rand[q]);
      }
      ws.money_total[i] = z;
      ws.V[i] = wtp ? u + phi * z : u;
    }

    double ll = 0.0;
    for (std::size_t t = t_begin; t < t_end; ++t) {
      const auto& task = cm.tasks()[t];
      const std::size_t off = task.begin - row_begin;
      double vmax = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < task.n_alts; ++j) {
        const double v = ws.V[off + j];
        if (!std::isfinite(v))
          throw EvaluationError("non-finite utility for person " + cm.person_id(n) + " task " + cm.task_id(t));
        if (cm.available(task.begin + j)) vmax = std::max(vmax, v);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < task.n_alts; ++j)
        if (cm.available(task.begin + j)) sum += std::exp(ws.V[off + j] - vmax);
      const double lse = vmax + std::log(sum);
      const double log_p = ws.V[off + task.chosen] - lse;
      if (log_p < log_floor)
        throw EvaluationError("chosen probability below 1e-300 for person " + cm.person_id(n) + " task " +
                              cm.task_id(t));
      ll += log_p;
      if (grad) {
        double* e = ws.resid.data() + r * rows + off;
        for (std::size_t j = 0; j < task.n_alts; ++j) {
          const double pj = cm.available(task.begin + j) ? std::exp(ws.V[off + j] - lse) : 0.0;
          e[j] = (j == task.chosen ? 1.0 : 0.0) - pj;
        }
      }
    }
    ws.loglik[r] = ll;

    if (grad) {
      const double* e = ws.resid.data() + r * rows;
      double* g = ws.draw_grad.data() + r * Q;
      double gp = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        if (e[i] == 0.0) continue;
        const std::size_t row = row_begin + i;
        for (std::size_t q = 0; q < Q; ++q)
          g[q] += e[i] * (cm.util(row, rand[q]) + phi * cm.money(row, rand[q]));
        gp += e[i] * ws.money_total[i];
      }
      ws.price_grad[r] = gp;
      if (price_random) {
        // The price coefficient's own slot scales the money sum, not a design column.
        for (std::size_t q = 0; q < Q; ++q)
          if (rand[q] == *price_p) g[q] = gp;
      }
    }
  }

  const double lmax = *std::max_element(ws.loglik.begin(), ws.loglik.end());
  double wsum = 0.0;
  for (std::size_t r = 0; r < R; ++r) wsum += std::exp(ws.loglik[r] - lmax);
  const double contribution = lmax + std::log(wsum) - std::log(static_cast<double>(R));

  if (grad) {
    std::fill(grad, grad + cm.n_estimated(), 0.0);
    // Posterior draw weights w_r = L_nr / sum_s L_ns.
    std::vector<double> w(R);
    for (std::size_t r = 0; r < R; ++r) w[r] = std::exp(ws.loglik[r] - lmax) / wsum;

    // Fixed parameters: sum_r w_r sum_rows e (U + phi Z).
    std::vector<double> e1(rows, 0.0), e2(rows, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      const double* e = ws.resid.data() + r * rows;
      for (std::size_t i = 0; i < rows; ++i) {
        e1[i] += w[r] * e[i];
        e2[i] += w[r] * ws.phi[r] * e[i];
      }
    }
    for (std::size_t p = 0; p < P; ++p) {
      if (m.parameters[p].is_random()) continue;
      double g = 0.0;
      if (wtp && price_p && p == *price_p) {
        for (std::size_t r = 0; r < R; ++r) g += w[r] * ws.price_grad[r];
      } else {
        for (std::size_t i = 0; i < rows; ++i)
          g += e1[i] * cm.util(row_begin + i, p) + e2[i] * cm.money(row_begin + i, p);
      }
      grad[offs[p]] = g;
    }
    for (std::size_t q = 0; q < Q; ++q) {
      const std::size_t p = rand[q];
      double g_loc = 0.0, g_spread = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        const auto d = realize(m.parameters[p], theta[offs[p]], theta[offs[p] + 1], draws.at(n, r, q));
        const double gr = w[r] * ws.draw_grad[r * Q + q];
        g_loc += gr * d.d_location;
        g_spread += gr * d.d_spread;
      }
      grad[offs[p]] = g_loc;
      grad[offs[p] + 1] = g_spread;
    }
  }
  return contribution;
}

}  // namespace detail

/// Simulated panel log-likelihood: per person ln of the draw-average of the
/// product of chosen probabilities. Individuals are split across threads;
/// totals are summed in a fixed order so thread count never changes a bit.
inline LikelihoodEvaluation simulated_loglikelihood(const CompiledModel& cm, std::span<const double> theta,
                                                    const DrawTensor& draws, const EvaluationOptions& opt = {}) {
  const std::size_t N = cm.n_individuals();
  const std::size_t K = cm.n_estimated();
  if (theta.size() != K)
    throw EvaluationError("parameter vector has " + std::to_string(theta.size()) + " entries, spec needs " +
                          std::to_string(K));
  if (draws.n_individuals() < N || draws.dimensions() != cm.random_parameters().size())
    throw EvaluationError("draw tensor is not dimensioned for this dataset and spec");
  for (const double v : theta)
    if (!std::isfinite(v)) throw EvaluationError("non-finite parameter value");

  const bool want_grad = opt.score || opt.individual_scores;
  LikelihoodEvaluation out;
  out.per_individual.assign(N, 0.0);
  std::vector<double> scores(want_grad ? N * K : 0, 0.0);

  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(std::max<std::size_t>(N, 1))));
  std::vector<std::exception_ptr> failures(threads);
  auto work = [&](unsigned w) {
    try {
      detail::PersonWorkspace ws;
      const std::size_t begin = N * w / threads, end = N * (w + 1) / threads;
      for (std::size_t n = begin; n < end; ++n)
        out.per_individual[n] =
            detail::person_contribution(cm, theta, draws, n, ws, want_grad ? scores.data() + n * K : nullptr);
    } catch (...) {
      failures[w] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  out.value = pairwise_sum(out.per_individual);
  if (want_grad) {
    std::vector<double> g(K), column(N);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t n = 0; n < N; ++n) column[n] = scores[n * K + k];
      g[k] = pairwise_sum(column);
    }
    out.score = std::move(g);
    if (opt.individual_scores) out.individual_scores = std::move(scores);
  }
  return out;
}

inline LikelihoodEvaluation simulated_loglikelihood(const ChoiceDataset& d, const ModelSpec& m,
                                                    std::span<const double> theta, const DrawTensor& draws) {
  return simulated_loglikelihood(CompiledModel(d, m), theta, draws);
}

inline std::vector<double> score_vector(const ChoiceDataset& d, const ModelSpec& m, std::span<const double> theta,
                                        const DrawTensor& draws) {
  EvaluationOptions opt;
  opt.score = true;
  return *simulated_loglikelihood(CompiledModel(d, m), theta, draws, opt).score;
}

/// Draw plan with one Halton dimension per random parameter (primes 2, 3, 5, ...).
inline DrawPlan draw_plan_for(const ModelSpec& m, std::size_t n_draws, std::size_t burn_in = 10) {
  std::size_t k = 0;
  for (const auto& p : m.parameters) k += p.is_random() ? 1 : 0;
  return DrawPlan::with_default_primes(k, n_draws, burn_in);
}

/// Rewrites a wtp-space model with a fixed price coefficient phi as the
/// behaviourally identical preference-space model: every money-metric
/// coefficient z becomes phi * z (a normal z stays normal with location and
/// spread scaled by phi). Constants and phi itself are unchanged.
inline std::pair<ModelSpec, ParameterVector> map_wtp_to_preference(const ModelSpec& m, std::span<const double> theta) {
  if (m.space != Space::wtp) throw ConfigurationError("map_wtp_to_preference: spec is not in wtp space");
  const auto phi_index = m.price_parameter();
  if (!phi_index || m.parameters[*phi_index].is_random())
    throw ConfigurationError("map_wtp_to_preference: needs a fixed price coefficient");
  const auto offs = m.offsets();
  const double phi = theta[offs[*phi_index]];

  ModelSpec pref = m;
  pref.space = Space::preference;
  ParameterVector out(theta.begin(), theta.end());
  for (std::size_t p = 0; p < m.parameters.size(); ++p) {
    if (p == *phi_index) continue;
    const bool constant_only = std::all_of(m.terms.begin(), m.terms.end(), [&](const UtilityTerm& t) {
      return t.parameter != m.parameters[p].name || t.is_constant();
    });
    if (constant_only) continue;
    const auto& def = m.parameters[p];
    if (def.is_random() && def.distribution == Distribution::negated_lognormal)
      throw ConfigurationError("map_wtp_to_preference: '" + def.name +
                               "' is lognormal; phi times it leaves the distribution catalogue");
    out[offs[p]] = phi * theta[offs[p]];
    if (def.is_random()) out[offs[p] + 1] = phi * theta[offs[p] + 1];
  }
  return {pref, out};
}

}  // namespace evacmix
