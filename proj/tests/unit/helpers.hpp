#pragma once

// Small hand-built datasets and independent oracles shared by the unit tests.

#include <cmath>
#include <string>
#include <vector>

#include "evacmix/evacmix.hpp"

namespace testutil {

using namespace evacmix;

inline std::string data_path(const std::string& name) { return std::string(EVACMIX_DATA_DIR) + "/" + name; }

// rows[person][task][alt] = attribute values; chosen[person][task] = alt index.
inline ChoiceDataset make_dataset(const std::vector<std::string>& attrs,
                                  const std::vector<std::vector<std::vector<std::vector<double>>>>& rows,
                                  const std::vector<std::vector<std::size_t>>& chosen) {
  ChoiceDataset d;
  for (const auto& a : attrs) d.attribute_schema.push_back({a, AttributeKind::continuous, "", false, PeerCoding::none});
  const std::size_t J = rows.at(0).at(0).size();
  for (std::size_t j = 0; j < J; ++j) d.alternative_ids.push_back(std::to_string(j + 1));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    PersonRecord p;
    p.person_id = "p" + std::to_string(n + 1);
    for (std::size_t t = 0; t < rows[n].size(); ++t) {
      ChoiceTask task;
      task.task_id = std::to_string(t + 1);
      for (std::size_t j = 0; j < rows[n][t].size(); ++j)
        task.alternatives.push_back({d.alternative_ids[j], true, rows[n][t][j]});
      task.chosen = d.alternative_ids[chosen[n][t]];
      p.tasks.push_back(std::move(task));
    }
    d.individuals.push_back(std::move(p));
  }
  return d;
}

inline ModelSpec spec_of(const std::string& text) {
  auto r = parse_model_spec(text);
  if (!r.ok()) throw std::runtime_error("test spec did not parse: " + describe(r.errors.front()));
  return *r.spec;
}

// Straight enumeration of (1/R) sum_r prod_t P_ntr in long double, with
// coefficients and utilities recomputed from scratch (no kernel code).
inline long double brute_force_loglik(const ChoiceDataset& d, const ModelSpec& m, const std::vector<double>& theta,
                                      const DrawTensor& draws) {
  long double total = 0.0L;
  const std::size_t R = draws.n_draws();
  for (std::size_t n = 0; n < d.individuals.size(); ++n) {
    long double avg = 0.0L;
    for (std::size_t r = 0; r < R; ++r) {
      std::vector<long double> coef;
      std::size_t at = 0, k = 0;
      for (const auto& p : m.parameters) {
        if (!p.is_random()) {
          coef.push_back(theta[at++]);
          continue;
        }
        const long double xi = draws.at(n, r, k++);
        const long double loc = theta[at], s = theta[at + 1];
        at += 2;
        coef.push_back(p.distribution == Distribution::normal ? loc + s * xi : -std::exp(loc + s * xi));
      }
      long double prod = 1.0L;
      for (const auto& task : d.individuals[n].tasks) {
        std::vector<long double> V;
        for (const auto& alt : task.alternatives) {
          long double u = 0.0L, money = 0.0L;
          for (const auto& t : m.terms) {
            if (!t.applies(alt.alt_id)) continue;
            const std::size_t p = *m.parameter_index(t.parameter);
            long double x = t.is_constant() ? 1.0L : alt.values[*d.attribute_index(t.attribute)];
            if (t.multiplier_attribute) x *= alt.values[*d.attribute_index(*t.multiplier_attribute)];
            const bool is_price = m.space == Space::wtp && m.price_parameter() && *m.price_parameter() == p;
            if (m.space == Space::wtp && !t.is_constant())
              money += is_price ? x : coef[p] * x;
            else
              u += coef[p] * x;
          }
          if (m.space == Space::wtp) u += coef[*m.price_parameter()] * money;
          V.push_back(u);
        }
        long double denom = 0.0L, num = 0.0L;
        for (std::size_t j = 0; j < V.size(); ++j) {
          denom += std::exp(V[j]);
          if (task.alternatives[j].alt_id == task.chosen) num = std::exp(V[j]);
        }
        prod *= num / denom;
      }
      avg += prod;
    }
    total += std::log(avg / static_cast<long double>(R));
  }
  return total;
}

// Bundled model restricted to the first n individuals of the synthetic file.
inline ChoiceDataset synthetic_subset(std::size_t n) {
  ChoiceDataset d = load_long_table(data_path("evac_synthetic.csv"), evac::column_mapping());
  d.individuals.resize(n);
  return d;
}

}  // namespace testutil
