#pragma once

// Synthetic evacuation choice experiments at known parameters, and
// scenario forecasts from estimates.
//
// Each respondent answers 9 tasks (3 per flood-threat level, low ->
// moderate -> extreme) over four alternatives: rides "1".."3" and stay "4".
// Ride attributes are drawn uniformly from the level sets below; five named
// peers are spread uniformly over the four alternatives. Person covariates
// follow marginals chosen to approximate the published variable moments:
//   age decade uniform 1..6, luggage uniform [0, 7.5], disability ~ B(0.03),
//   pets ~ B(0.49), anxiety/fear on 1..5 with means ~4.5/4.4, major pandemic
//   risk ~ B(0.39).
// These are reconstructions, not the original survey design.

#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <map>
#include <string>
#include <vector>

#include "evacmix/dataset.hpp"
#include "evacmix/errors.hpp"
#include "evacmix/kernel.hpp"
#include "evacmix/model_spec.hpp"
#include "evacmix/random.hpp"
#include "evacmix/result_io.hpp"
#include "evacmix/wtp.hpp"

namespace evacmix {

namespace evac {

inline constexpr std::array<const char*, 3> kRideIds{"1", "2", "3"};
inline constexpr const char* kStayId = "4";
inline constexpr std::size_t kTasksPerThreat = 3;

inline constexpr std::array<double, 5> kCostLevels{0, 10, 20, 30, 40};
inline constexpr std::array<double, 3> kWalkLevels{0, 0.25, 0.5};
inline constexpr std::array<double, 3> kWaitLevels{0, 30, 60};
inline constexpr std::array<double, 3> kTravelLevels{20, 40, 60};
inline constexpr std::array<double, 5> kAnxietyPmf{0.02, 0.03, 0.07, 0.14, 0.74};
inline constexpr std::array<double, 5> kFearPmf{0.03, 0.04, 0.08, 0.18, 0.67};

enum Column : std::size_t {
  cost, travel_time, wait_time, walk_distance, back_seat, front_seat, peer_share,
  moderate, extreme, threat_level,
  age, luggage, disability, pets, anxiety, fear, major_risk,
  n_columns
};

inline std::vector<AttributeInfo> schema() {
  using K = AttributeKind;
  return {
      {"cost", K::continuous, "$", false, PeerCoding::none},
      {"travel_time", K::continuous, "minute", false, PeerCoding::none},
      {"wait_time", K::continuous, "minute", false, PeerCoding::none},
      {"walk_distance", K::continuous, "mile", false, PeerCoding::none},
      {"back_seat", K::binary, "indicator", false, PeerCoding::none},
      {"front_seat", K::binary, "indicator", false, PeerCoding::none},
      {"peer_share", K::continuous, "share of 5 peers", false, PeerCoding::share},
      {"moderate", K::binary, "indicator", false, PeerCoding::none},
      {"extreme", K::binary, "indicator", false, PeerCoding::none},
      {"threat_level", K::categorical, "threat level", false, PeerCoding::none},
      {"age", K::categorical, "decade", true, PeerCoding::none},
      {"luggage", K::continuous, "luggage unit", true, PeerCoding::none},
      {"disability", K::binary, "indicator", true, PeerCoding::none},
      {"pets", K::binary, "indicator", true, PeerCoding::none},
      {"anxiety", K::categorical, "Likert level", true, PeerCoding::none},
      {"fear", K::categorical, "Likert level", true, PeerCoding::none},
      {"major_risk", K::binary, "indicator", true, PeerCoding::none},
  };
}

inline ColumnMapping column_mapping() {
  ColumnMapping m;
  m.attributes = schema();
  return m;
}

inline std::map<std::string, std::string> units() {
  std::map<std::string, std::string> u;
  for (const auto& a : schema()) u[a.name] = a.units;
  return u;
}

}  // namespace evac

struct SyntheticDesign {
  ChoiceDataset data;  // every task's `chosen` is empty until simulate_choices
  std::uint64_t seed = 0;
};

namespace detail {

template <std::size_t N>
double draw_level(Rng& rng, const std::array<double, N>& levels) {
  return levels[rng.below(N)];
}

template <std::size_t N>
double draw_likert(Rng& rng, const std::array<double, N>& pmf) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    acc += pmf[k];
    if (u < acc) return static_cast<double>(k + 1);
  }
  return static_cast<double>(N);
}

}  // namespace detail

/// Deterministic in `seed`; person i draws from its own stream (seed, i).
inline SyntheticDesign generate_design(std::size_t n_individuals, std::uint64_t seed,
                                       const ThreatCoding& coding = {}) {
  if (n_individuals < 1) throw ConfigurationError("design needs at least one individual");
  using namespace evac;
  SyntheticDesign design;
  design.seed = seed;
  ChoiceDataset& d = design.data;
  d.attribute_schema = schema();
  d.alternative_ids = {kRideIds[0], kRideIds[1], kRideIds[2], kStayId};

  const FloodThreat threats[] = {FloodThreat::low, FloodThreat::moderate, FloodThreat::extreme};
  for (std::size_t i = 0; i < n_individuals; ++i) {
    Rng rng(seed, i);
    PersonRecord person;
    person.person_id = std::to_string(i + 1);
    std::array<double, n_columns> person_values{};
    person_values[age] = 1.0 + static_cast<double>(rng.below(6));
    person_values[luggage] = 7.5 * rng.uniform();
    person_values[disability] = rng.bernoulli(0.03) ? 1.0 : 0.0;
    person_values[pets] = rng.bernoulli(0.49) ? 1.0 : 0.0;
    person_values[anxiety] = detail::draw_likert(rng, kAnxietyPmf);
    person_values[fear] = detail::draw_likert(rng, kFearPmf);
    person_values[major_risk] = rng.bernoulli(0.39) ? 1.0 : 0.0;
    for (std::size_t c = age; c < n_columns; ++c) person.covariates[d.attribute_schema[c].name] = person_values[c];

    std::size_t task_no = 0;
    for (const FloodThreat threat : threats) {
      const auto indicators = ScenarioSpec{threat, coding}.active_interactions();
      for (std::size_t rep = 0; rep < kTasksPerThreat; ++rep) {
        ChoiceTask task;
        task.task_id = std::to_string(++task_no);
        std::array<double, 4> peers{};
        for (int k = 0; k < static_cast<int>(kPeerNetworkSize); ++k) peers[rng.below(4)] += 1.0;
        for (std::size_t j = 0; j < 4; ++j) {
          AlternativeRecord alt;
          alt.alt_id = d.alternative_ids[j];
          std::array<double, n_columns> v = person_values;
          if (j < 3) {
            v[cost] = detail::draw_level(rng, kCostLevels);
            v[travel_time] = detail::draw_level(rng, kTravelLevels);
            v[wait_time] = detail::draw_level(rng, kWaitLevels);
            v[walk_distance] = detail::draw_level(rng, kWalkLevels);
            const auto seat = rng.below(3);  // private, front, back
            v[front_seat] = seat == 1 ? 1.0 : 0.0;
            v[back_seat] = seat == 2 ? 1.0 : 0.0;
          }
          v[peer_share] = peers[j] / kPeerNetworkSize;
          v[moderate] = indicators.at(coding.moderate);
          v[extreme] = indicators.at(coding.extreme);
          v[threat_level] = indicators.at(coding.level);
          alt.values.assign(v.begin(), v.end());
          task.alternatives.push_back(std::move(alt));
        }
        person.tasks.push_back(std::move(task));
      }
    }
    d.individuals.push_back(std::move(person));
  }
  return design;
}

struct TrueParameters {
  ModelSpec spec;
  ParameterVector values;
  std::uint64_t seed = 0;
};

/// One coefficient realization per person (panel), one uniform per task
/// inverted through the cumulative choice probabilities.
inline ChoiceDataset simulate_choices(const SyntheticDesign& design, const TrueParameters& truth) {
  const ModelSpec& m = truth.spec;
  if (truth.values.size() != m.n_estimated())
    throw ConfigurationError("truth has " + std::to_string(truth.values.size()) + " values, spec needs " +
                             std::to_string(m.n_estimated()));
  ChoiceDataset d = design.data;
  if (const auto v = validate_spec(m, d); !v.empty()) throw SpecError("spec does not match design: " + v.front().detail);
  std::size_t n_random = 0;
  for (const auto& p : m.parameters) n_random += p.is_random() ? 1 : 0;

  std::vector<double> xi(n_random), V;
  std::vector<bool> avail;
  for (std::size_t i = 0; i < d.individuals.size(); ++i) {
    Rng rng(truth.seed ^ 0xC401CE5ULL, i);
    for (auto& x : xi) x = rng.normal();
    const auto coef = realize_coefficients(truth.values, xi, m);
    for (auto& task : d.individuals[i].tasks) {
      V.clear();
      avail.clear();
      for (const auto& alt : task.alternatives) {
        V.push_back(alternative_utility(m, coef, d, alt));
        avail.push_back(alt.available);
      }
      const auto P = choice_probabilities(V, avail);
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t pick = P.size();
      for (std::size_t j = 0; j < P.size(); ++j) {
        if (!avail[j]) continue;
        acc += P[j];
        pick = j;
        if (u < acc) break;
      }
      task.chosen = task.alternatives[pick].alt_id;
    }
  }
  return d;
}

struct ForecastResult {
  std::vector<std::string> alt_ids;
  std::vector<double> mean;
  std::vector<double> standard_error;
};

/// Sets the scenario's threat indicators on every alternative of `task`
/// that carries them.
inline ChoiceTask apply_scenario(ChoiceTask task, const std::vector<AttributeInfo>& schema, const ScenarioSpec& s) {
  for (const auto& [name, value] : s.active_interactions()) {
    for (std::size_t k = 0; k < schema.size(); ++k)
      if (schema[k].name == name)
        for (auto& alt : task.alternatives) alt.values[k] = value;
  }
  return task;
}

/// Choice shares for one task under a scenario, averaged over R seeded
/// pseudo-random coefficient draws from the estimated distributions.
inline ForecastResult forecast_scenario(const EstimationResult& r, const ScenarioSpec& scenario, const ChoiceTask& task,
                                        const std::vector<AttributeInfo>& schema, std::size_t R,
                                        std::uint64_t seed = 0) {
  if (R < 100) throw ConfigurationError("forecast needs at least 100 draws");
  const ModelSpec& m = r.spec;
  ChoiceDataset holder;
  holder.attribute_schema = schema;
  const ChoiceTask t = apply_scenario(task, schema, scenario);
  for (const auto& a : t.alternatives) holder.alternative_ids.push_back(a.alt_id);

  std::size_t n_random = 0;
  for (const auto& p : m.parameters) n_random += p.is_random() ? 1 : 0;
  const std::size_t J = t.alternatives.size();
  std::vector<double> sum(J, 0.0), sumsq(J, 0.0), xi(n_random), V(J);
  std::vector<bool> avail(J);
  for (std::size_t j = 0; j < J; ++j) avail[j] = t.alternatives[j].available;

  Rng rng(seed, 0xF0CA57);
  for (std::size_t draw = 0; draw < R; ++draw) {
    for (auto& x : xi) x = rng.normal();
    const auto coef = realize_coefficients(r.estimates, xi, m);
    for (std::size_t j = 0; j < J; ++j) V[j] = alternative_utility(m, coef, holder, t.alternatives[j]);
    const auto P = choice_probabilities(V, avail);
    for (std::size_t j = 0; j < J; ++j) {
      sum[j] += P[j];
      sumsq[j] += P[j] * P[j];
    }
  }
  ForecastResult out;
  const double n = static_cast<double>(R);
  for (std::size_t j = 0; j < J; ++j) {
    out.alt_ids.push_back(t.alternatives[j].alt_id);
    const double mean = sum[j] / n;
    const double var = std::max(0.0, sumsq[j] / n - mean * mean) * n / (n - 1.0);
    out.mean.push_back(mean);
    out.standard_error.push_back(std::sqrt(var / n));
  }
  return out;
}

struct RecoveryRow {
  std::string name;
  double truth = 0.0;
  double estimate = 0.0;
  double robust_se = 0.0;
  double z = 0.0;        // (estimate - truth) / robust_se
  bool within = false;   // |z| <= tolerance
  bool is_spread = false;
  bool fixed_sign_ok = true;
};

struct RecoveryReport {
  std::vector<RecoveryRow> rows;
  double tolerance_se = 2.0;
  std::size_t n_within = 0;
  bool fixed_signs_match = true;

  double share_within() const { return rows.empty() ? 0.0 : static_cast<double>(n_within) / static_cast<double>(rows.size()); }
};

/// Compares estimates with the truth they were simulated from. Spread slots
/// are compared in magnitude because the sign of a spread is not identified.
inline RecoveryReport compare_recovery(const EstimationResult& r, const TrueParameters& truth, double tolerance_se = 2.0) {
  RecoveryReport rep;
  rep.tolerance_se = tolerance_se;
  const ModelSpec& m = truth.spec;
  const auto names = m.estimated_names();
  const auto offs = m.offsets();
  for (std::size_t p = 0; p < m.parameters.size(); ++p) {
    const std::size_t slots = m.parameters[p].is_random() ? 2 : 1;
    for (std::size_t s = 0; s < slots; ++s) {
      const std::size_t k = offs[p] + s;
      RecoveryRow row;
      row.name = names[k];
      row.is_spread = s == 1;
      row.truth = row.is_spread ? std::abs(truth.values[k]) : truth.values[k];
      row.estimate = row.is_spread ? std::abs(r.estimates[k]) : r.estimates[k];
      row.robust_se = r.robust_se[k];
      row.z = (row.estimate - row.truth) / row.robust_se;
      row.within = std::isfinite(row.z) && std::abs(row.z) <= tolerance_se;
      if (!m.parameters[p].is_random()) {
        row.fixed_sign_ok = (row.estimate > 0.0) == (row.truth > 0.0);
        rep.fixed_signs_match = rep.fixed_signs_match && row.fixed_sign_ok;
      }
      rep.n_within += row.within ? 1 : 0;
      rep.rows.push_back(row);
    }
  }
  return rep;
}

inline void print_recovery(const RecoveryReport& rep, std::ostream& out) {
  char line[200];
  std::snprintf(line, sizeof line, "%-26s %14s %14s %12s %8s  %s\n", "parameter", "truth", "estimate", "robust_se", "z",
                "ok");
  out << line;
  for (const auto& r : rep.rows) {
    std::snprintf(line, sizeof line, "%-26s %14.4f %14.4f %12.4f %8.2f  %s%s\n", r.name.c_str(), r.truth, r.estimate,
                  r.robust_se, r.z, r.within ? "yes" : "NO", r.fixed_sign_ok ? "" : " (sign)");
    out << line;
  }
  std::snprintf(line, sizeof line, "%zu of %zu within %.2f robust SEs (%.1f%%); fixed-parameter signs %s\n", rep.n_within,
                rep.rows.size(), rep.tolerance_se, 100.0 * rep.share_within(), rep.fixed_signs_match ? "all match" : "DIFFER");
  out << line;
}

inline OrderedJson truth_to_json(const TrueParameters& t) {
  OrderedJson j;
  j["seed"] = t.seed;
  OrderedJson params = OrderedJson::object();
  const auto names = t.spec.estimated_names();
  for (std::size_t k = 0; k < names.size(); ++k) params[names[k]] = t.values[k];
  j["parameters"] = params;
  j["spec_echo"] = print_model_spec(t.spec);
  return j;
}

/// Reads parameter values for `spec` from a truth document ("parameters")
/// or an estimation result ("estimates").
inline TrueParameters truth_from_json(const OrderedJson& j, const ModelSpec& spec, std::uint64_t seed) {
  TrueParameters t{spec, {}, seed};
  const char* key = j.contains("parameters") ? "parameters" : j.contains("estimates") ? "estimates" : nullptr;
  if (!key) throw SchemaError("truth file needs a 'parameters' or 'estimates' object");
  for (const auto& name : spec.estimated_names()) {
    if (!j.at(key).contains(name)) throw SchemaError("truth file is missing parameter '" + name + "'");
    t.values.push_back(j.at(key).at(name).get<double>());
  }
  return t;
}

}  // namespace evacmix
