#pragma once

// EstimationResult <-> JSON. Floating-point numbers are written with 17
// significant digits; non-finite values become null.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "evacmix/estimate.hpp"
#include "evacmix/model_spec.hpp"
#include "json.hpp"

namespace evacmix {

using OrderedJson = nlohmann::ordered_json;

namespace detail {

inline void write_json_string(std::ostream& out, const std::string& s) {
  out << OrderedJson(s).dump();
}

inline void write_json(std::ostream& out, const OrderedJson& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case OrderedJson::value_t::object: {
      if (j.empty()) { out << "{}"; return; }
      out << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out << ",\n";
        first = false;
        out << pad;
        write_json_string(out, it.key());
        out << ": ";
        write_json(out, it.value(), indent, depth + 1);
      }
      out << '\n' << close_pad << '}';
      return;
    }
    case OrderedJson::value_t::array: {
      if (j.empty()) { out << "[]"; return; }
      out << '[';
      bool first = true;
      for (const auto& v : j) {
        if (!first) out << ", ";
        first = false;
        write_json(out, v, indent, depth + 1);
      }
      out << ']';
      return;
    }
    case OrderedJson::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) { out << "null"; return; }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf;
      return;
    }
    default:
      out << j.dump();
  }
}

inline double json_number(const OrderedJson& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline std::string dump_json(const OrderedJson& j) {
  std::ostringstream out;
  detail::write_json(out, j, 2, 0);
  out << '\n';
  return out.str();
}

inline OrderedJson draw_plan_to_json(const DrawPlan& p) {
  OrderedJson j;
  j["n_draws"] = p.n_draws;
  j["burn_in"] = p.burn_in;
  j["primes"] = p.primes;
  j["shuffle_seed"] = p.shuffle_seed ? OrderedJson(*p.shuffle_seed) : OrderedJson(nullptr);
  return j;
}

inline DrawPlan draw_plan_from_json(const OrderedJson& j) {
  DrawPlan p;
  p.n_draws = j.value("n_draws", std::size_t{1000});
  p.burn_in = j.value("burn_in", std::size_t{10});
  if (j.contains("primes")) p.primes = j.at("primes").get<std::vector<unsigned>>();
  if (j.contains("shuffle_seed") && !j.at("shuffle_seed").is_null()) p.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
  return p;
}

inline OrderedJson to_json(const EstimationResult& r) {
  auto named = [&](const std::vector<double>& v) {
    OrderedJson o = OrderedJson::object();
    for (std::size_t k = 0; k < r.names.size(); ++k)
      o[r.names[k]] = k < v.size() ? v[k] : std::numeric_limits<double>::quiet_NaN();
    return o;
  };
  OrderedJson j;
  j["estimates"] = named(r.estimates);
  j["robust_se"] = named(r.robust_se);
  j["robust_t"] = named(r.robust_t);
  j["classical_se"] = named(r.classical_se);
  j["ll_final"] = r.ll_final;
  j["ll_null"] = r.ll_null;
  j["adjusted_rho_sq"] = r.adjusted_rho_sq;
  j["n_individuals"] = r.n_individuals;
  j["n_outcomes"] = r.n_outcomes;
  j["n_draws"] = r.n_draws;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["spec_echo"] = print_model_spec(r.spec);
  j["draw_plan"] = draw_plan_to_json(r.draw_plan);
  if (!r.message.empty()) j["message"] = r.message;
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j;
}

/// Reads a result document. Missing standard-error blocks load as NaN.
inline EstimationResult result_from_json(const OrderedJson& j) {
  EstimationResult r;
  try {
    r.spec = parse_model_spec_or_throw(j.at("spec_echo").get<std::string>());
    r.names = r.spec.estimated_names();
    auto named = [&](const char* key) {
      std::vector<double> v(r.names.size(), std::numeric_limits<double>::quiet_NaN());
      if (!j.contains(key) || j.at(key).is_null()) return v;
      const auto& o = j.at(key);
      for (std::size_t k = 0; k < r.names.size(); ++k)
        if (o.contains(r.names[k])) v[k] = detail::json_number(o.at(r.names[k]));
      return v;
    };
    r.estimates = named("estimates");
    for (std::size_t k = 0; k < r.names.size(); ++k)
      if (!j.at("estimates").contains(r.names[k]))
        throw SchemaError("result is missing estimate '" + r.names[k] + "'");
    r.robust_se = named("robust_se");
    r.robust_t = named("robust_t");
    r.classical_se = named("classical_se");
    r.ll_final = detail::json_number(j.at("ll_final"));
    r.ll_null = detail::json_number(j.value("ll_null", OrderedJson(nullptr)));
    r.adjusted_rho_sq = detail::json_number(j.value("adjusted_rho_sq", OrderedJson(nullptr)));
    r.n_individuals = j.value("n_individuals", std::size_t{0});
    r.n_outcomes = j.value("n_outcomes", std::size_t{0});
    r.n_draws = j.value("n_draws", std::size_t{0});
    r.converged = j.value("converged", false);
    r.iterations = j.value("iterations", std::size_t{0});
    if (j.contains("draw_plan")) r.draw_plan = draw_plan_from_json(j.at("draw_plan"));
    if (j.contains("message")) r.message = j.at("message").get<std::string>();
    if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const OrderedJson::exception& e) {
    throw SchemaError(std::string("malformed result document: ") + e.what());
  }
  return r;
}

inline OrderedJson read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  try {
    return OrderedJson::parse(in);
  } catch (const OrderedJson::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

inline EstimationResult load_result(const std::string& path) { return result_from_json(read_json_file(path)); }

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  out << text;
}

}  // namespace evacmix
