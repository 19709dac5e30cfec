#pragma once

// Money-metric post-processing of estimates.
//
// Direction convention: a money value is a price-equivalent inside the
// alternative its attribute enters. Positive z behaves like extra price
// (respondents need compensation); negative z is a willingness to pay.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evacmix/estimate.hpp"
#include "evacmix/model_spec.hpp"
#include "evacmix/normal.hpp"
#include "evacmix/random.hpp"

namespace evacmix {

enum class MoneyDirection { none, pay, compensate };

inline std::string to_string(MoneyDirection d) {
  switch (d) {
    case MoneyDirection::pay: return "pay";
    case MoneyDirection::compensate: return "compensate";
    default: return "none";
  }
}

inline MoneyDirection direction_of(double z) {
  if (z > 0.0) return MoneyDirection::compensate;
  if (z < 0.0) return MoneyDirection::pay;
  return MoneyDirection::none;
}

enum class FloodThreat { low, moderate, extreme };

inline std::string to_string(FloodThreat t) {
  switch (t) {
    case FloodThreat::moderate: return "moderate";
    case FloodThreat::extreme: return "extreme";
    default: return "low";
  }
}

inline FloodThreat flood_threat_from_string(std::string_view s) {
  if (s == "low") return FloodThreat::low;
  if (s == "moderate") return FloodThreat::moderate;
  if (s == "extreme") return FloodThreat::extreme;
  throw std::invalid_argument("unknown flood threat '" + std::string(s) + "' (expected low, moderate or extreme)");
}

/// Attribute names and level coding for the threat indicators a scenario sets.
struct ThreatCoding {
  std::string moderate = "moderate";
  std::string extreme = "extreme";
  std::string level = "threat_level";
  double level_base = 1.0;  // ordinal level of "low"; moderate and extreme follow
};

struct ScenarioSpec {
  FloodThreat flood_threat = FloodThreat::low;
  ThreatCoding coding;

  /// Indicator values implied by the threat: the moderate/extreme dummies and the ordinal level.
  std::map<std::string, double> active_interactions() const {
    const double rank = flood_threat == FloodThreat::low ? 0.0 : flood_threat == FloodThreat::moderate ? 1.0 : 2.0;
    return {{coding.moderate, flood_threat == FloodThreat::moderate ? 1.0 : 0.0},
            {coding.extreme, flood_threat == FloodThreat::extreme ? 1.0 : 0.0},
            {coding.level, coding.level_base + rank}};
  }
};

struct WtpRow {
  std::string parameter;
  std::string attribute;
  std::vector<std::string> applies_to;
  double z_mean = 0.0;
  double z_median = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
  double amount = 0.0;  // |z_mean|
  MoneyDirection direction = MoneyDirection::none;
  std::string unit;
};

struct CovRow {
  std::string parameter;
  double cov = 0.0;
};

struct ScenarioRow {
  std::string parameter;
  std::string scenario;
  double net = 0.0;
  double amount = 0.0;
  MoneyDirection direction = MoneyDirection::none;
  std::string unit;
};

struct RatioRow {
  std::string numerator;
  std::string denominator;
  double ratio = 0.0;
};

struct WtpReport {
  Space space = Space::wtp;
  std::vector<WtpRow> rows;
  std::vector<CovRow> cov_table;
  std::vector<ScenarioRow> scenario_rows;
  std::vector<RatioRow> ratios;
};

/// Signed ratio of the raw spread and location estimates.
inline double coefficient_of_variation(double mean_est, double sd_est) {
  if (mean_est == 0.0) throw std::domain_error("coefficient of variation is undefined for a zero mean");
  return sd_est / mean_est;
}

/// P(coefficient > 0) for a normal coefficient.
inline double sign_share(double mean, double sd) {
  if (sd < 0.0) throw std::invalid_argument("sign_share: sd must be non-negative");
  if (sd == 0.0) return mean > 0.0 ? 1.0 : 0.0;
  return normal_cdf(mean / sd);
}

/// Base money value plus every interaction switched on by the scenario.
/// `interaction_zs` maps the multiplier attribute to its money coefficient.
inline double scenario_value(double base_z, const std::map<std::string, double>& interaction_zs,
                             const ScenarioSpec& s) {
  const auto active = s.active_interactions();
  double net = base_z;
  for (const auto& [multiplier, z] : interaction_zs) {
    const auto it = active.find(multiplier);
    if (it == active.end())
      throw std::invalid_argument("scenario does not define interaction indicator '" + multiplier + "'");
    net += z * it->second;
  }
  return net;
}

inline double money_ratio(double numerator_z, double denominator_z) {
  if (denominator_z == 0.0) throw std::domain_error("money_ratio: zero denominator");
  return std::abs(numerator_z) / std::abs(denominator_z);
}

namespace detail {

inline bool is_constant_parameter(const ModelSpec& m, const std::string& name) {
  return std::all_of(m.terms.begin(), m.terms.end(),
                     [&](const UtilityTerm& t) { return t.parameter != name || t.is_constant(); });
}

inline const UtilityTerm* main_term(const ModelSpec& m, const std::string& name) {
  for (const auto& t : m.terms)
    if (t.parameter == name && !t.multiplier_attribute) return &t;
  for (const auto& t : m.terms)
    if (t.parameter == name) return &t;
  return nullptr;
}

inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

inline constexpr std::size_t kWtpSimulationDraws = 100000;

/// Money value per unit of every non-price, non-constant attribute.
/// wtp space reports z directly; preference space simulates xi/phi with
/// independent pseudo-random draws (seeded) since both terms are random.
inline std::vector<WtpRow> marginal_money_values(const EstimationResult& r, const ModelSpec& m,
                                                 const std::map<std::string, std::string>& units = {},
                                                 std::uint64_t seed = 0,
                                                 std::size_t n_sim = kWtpSimulationDraws) {
  const auto offs = m.offsets();
  const auto price = m.price_parameter();
  std::vector<WtpRow> rows;

  std::vector<double> phi_draws;
  if (m.space == Space::preference) {
    if (!price) throw std::domain_error("preference-space WTP needs a price coefficient ('price' line)");
    const auto& pdef = m.parameters[*price];
    if (pdef.is_random() && pdef.distribution == Distribution::normal)
      throw std::domain_error("price coefficient '" + pdef.name +
                              "' is normal: it has mass at zero, so the WTP ratio has no finite moments");
    Rng rng(seed, 0x5eed);
    phi_draws.resize(n_sim);
    for (auto& v : phi_draws) {
      const double xi = rng.normal();
      v = realize(pdef, r.estimates[offs[*price]], pdef.is_random() ? r.estimates[offs[*price] + 1] : 0.0, xi).value;
    }
    if (std::any_of(phi_draws.begin(), phi_draws.end(), [](double v) { return v == 0.0; }))
      throw std::domain_error("price coefficient is zero; WTP is not identified");
  }

  for (std::size_t p = 0; p < m.parameters.size(); ++p) {
    const auto& def = m.parameters[p];
    if ((price && p == *price) || detail::is_constant_parameter(m, def.name)) continue;
    const UtilityTerm* term = detail::main_term(m, def.name);
    WtpRow row;
    row.parameter = def.name;
    row.attribute = term->attribute + (term->multiplier_attribute ? " x " + *term->multiplier_attribute : "");
    row.applies_to = term->applies_to;
    const auto u = units.find(term->attribute);
    row.unit = u != units.end() ? u->second : term->attribute;

    const double loc = r.estimates[offs[p]];
    const double spread = def.is_random() ? r.estimates[offs[p] + 1] : 0.0;
    if (m.space == Space::wtp) {
      if (!def.is_random()) {
        row.z_mean = row.z_median = row.q05 = row.q95 = loc;
      } else if (def.distribution == Distribution::normal) {
        const double half = 1.6448536269514722 * std::abs(spread);
        row.z_mean = row.z_median = loc;
        row.q05 = loc - half;
        row.q95 = loc + half;
      } else {
        row.z_mean = -std::exp(loc + 0.5 * spread * spread);
        row.z_median = -std::exp(loc);
        row.q05 = -std::exp(loc + 1.6448536269514722 * std::abs(spread));
        row.q95 = -std::exp(loc - 1.6448536269514722 * std::abs(spread));
      }
    } else {
      Rng rng(seed, p + 1);
      std::vector<double> z(n_sim);
      double sum = 0.0;
      for (std::size_t i = 0; i < n_sim; ++i) {
        const double c = def.is_random() ? realize(def, loc, spread, rng.normal()).value : loc;
        z[i] = c / phi_draws[i];
        sum += z[i];
      }
      row.z_mean = sum / static_cast<double>(n_sim);
      std::sort(z.begin(), z.end());
      row.z_median = detail::quantile_sorted(z, 0.5);
      row.q05 = detail::quantile_sorted(z, 0.05);
      row.q95 = detail::quantile_sorted(z, 0.95);
    }
    row.amount = std::abs(row.z_mean);
    row.direction = direction_of(row.z_mean);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Net money value of every main (non-interaction) money parameter under a
/// scenario, folding in interaction terms on the same attribute and
/// alternatives whose multiplier is a scenario indicator.
inline std::vector<ScenarioRow> scenario_values(const EstimationResult& r, const ModelSpec& m, const ScenarioSpec& s,
                                                const std::map<std::string, std::string>& units = {}) {
  if (m.space != Space::wtp) throw std::domain_error("scenario values are read from wtp-space estimates");
  const auto offs = m.offsets();
  const auto price = m.price_parameter();
  const auto active = s.active_interactions();
  std::vector<ScenarioRow> out;
  for (std::size_t p = 0; p < m.parameters.size(); ++p) {
    const auto& def = m.parameters[p];
    if ((price && p == *price) || detail::is_constant_parameter(m, def.name)) continue;
    const UtilityTerm* term = detail::main_term(m, def.name);
    if (term->multiplier_attribute) continue;
    std::map<std::string, double> interactions;
    for (const auto& t : m.terms) {
      if (!t.multiplier_attribute || t.attribute != term->attribute || t.applies_to != term->applies_to) continue;
      if (!active.count(*t.multiplier_attribute)) continue;
      interactions[*t.multiplier_attribute] += r.estimates[offs[*m.parameter_index(t.parameter)]];
    }
    ScenarioRow row;
    row.parameter = def.name;
    row.scenario = to_string(s.flood_threat);
    row.net = scenario_value(r.estimates[offs[p]], interactions, s);
    row.amount = std::abs(row.net);
    row.direction = direction_of(row.net);
    const auto u = units.find(term->attribute);
    row.unit = u != units.end() ? u->second : term->attribute;
    out.push_back(std::move(row));
  }
  return out;
}

/// Full report: marginal values, COV of each random parameter, scenario rows
/// for the requested threats (all three when none given), and the summary
/// ratios that exist in the spec.
inline WtpReport build_wtp_report(const EstimationResult& r, const std::vector<FloodThreat>& threats = {},
                                  const std::map<std::string, std::string>& units = {}, std::uint64_t seed = 0,
                                  const ThreatCoding& coding = {}) {
  const ModelSpec& m = r.spec;
  WtpReport rep;
  rep.space = m.space;
  rep.rows = marginal_money_values(r, m, units, seed);
  const auto offs = m.offsets();
  for (std::size_t p = 0; p < m.parameters.size(); ++p) {
    if (!m.parameters[p].is_random()) continue;
    const double mean = r.estimates[offs[p]];
    if (mean != 0.0) rep.cov_table.push_back({m.parameters[p].name, coefficient_of_variation(mean, r.estimates[offs[p] + 1])});
  }
  if (m.space == Space::wtp) {
    const std::vector<FloodThreat> all{FloodThreat::low, FloodThreat::moderate, FloodThreat::extreme};
    for (const auto t : threats.empty() ? all : threats) {
      auto rows = scenario_values(r, m, ScenarioSpec{t, coding}, units);
      rep.scenario_rows.insert(rep.scenario_rows.end(), rows.begin(), rows.end());
    }
  }
  auto z_of = [&](const std::string& name) -> std::optional<double> {
    for (const auto& row : rep.rows)
      if (row.parameter == name) return row.z_mean;
    return std::nullopt;
  };
  const std::pair<const char*, const char*> named[] = {
      {"wait_time", "travel_time"}, {"fear", "anxiety"}, {"peers_staying", "peers_ride"}};
  for (const auto& [a, b] : named) {
    const auto za = z_of(a), zb = z_of(b);
    if (za && zb && *zb != 0.0) rep.ratios.push_back({a, b, money_ratio(*za, *zb)});
  }
  return rep;
}

inline std::string format_money(double v, int decimals = 2) {
  char buf[48];
  // half away from zero, so 271.125 reads 271.13 (printf alone rounds half to even)
  const double scale = std::pow(10.0, decimals);
  std::snprintf(buf, sizeof buf, "%.*f", decimals, std::round(v * scale) / scale);
  return buf;
}

/// CSV behind the scenario charts: attribute,scenario,net_value,direction,unit.
inline void write_wtp_csv(const WtpReport& rep, std::ostream& out) {
  out << "attribute,scenario,net_value,direction,unit\n";
  for (const auto& s : rep.scenario_rows)
    out << s.parameter << ',' << s.scenario << ',' << format_money(s.net) << ',' << to_string(s.direction) << ','
        << s.unit << '\n';
  if (rep.scenario_rows.empty())
    for (const auto& r : rep.rows)
      out << r.parameter << ",marginal," << format_money(r.z_mean) << ',' << to_string(r.direction) << ',' << r.unit
          << '\n';
}

inline void print_wtp_report(const WtpReport& rep, std::ostream& out) {
  char line[256];
  out << "Money values per unit (" << (rep.space == Space::wtp ? "wtp space" : "preference space, simulated") << ")\n";
  std::snprintf(line, sizeof line, "  %-22s %-11s %12s %12s %12s %12s  %s\n", "parameter", "direction", "amount",
                "median", "q05", "q95", "unit");
  out << line;
  for (const auto& r : rep.rows) {
    std::snprintf(line, sizeof line, "  %-22s %-11s %12.2f %12.2f %12.2f %12.2f  %s\n", r.parameter.c_str(),
                  to_string(r.direction).c_str(), r.amount, r.z_median, r.q05, r.q95, r.unit.c_str());
    out << line;
  }
  if (!rep.cov_table.empty()) {
    out << "\nCoefficients of variation\n";
    for (const auto& c : rep.cov_table) {
      std::snprintf(line, sizeof line, "  %-22s %8.3f\n", c.parameter.c_str(), c.cov);
      out << line;
    }
  }
  if (!rep.scenario_rows.empty()) {
    out << "\nScenario values\n";
    for (const auto& s : rep.scenario_rows) {
      std::snprintf(line, sizeof line, "  %-22s %-9s %-11s %10.2f  %s\n", s.parameter.c_str(), s.scenario.c_str(),
                    to_string(s.direction).c_str(), s.amount, s.unit.c_str());
      out << line;
    }
  }
  if (!rep.ratios.empty()) {
    out << "\nRatios of money values\n";
    for (const auto& r : rep.ratios) {
      std::snprintf(line, sizeof line, "  |%s| / |%s| = %.3f\n", r.numerator.c_str(), r.denominator.c_str(), r.ratio);
      out << line;
    }
  }
}

}  // namespace evacmix
