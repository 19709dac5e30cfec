#pragma once

// Declarative utility specification.
//
//   space wtp|preference
//   price <attribute>
//   param <name> fixed init=<v>
//   param <name> random <normal|neglognormal> init=<m> init_sd=<s>
//   term <param> on <attribute|ASC> alts=<id,id,...> [times <attribute>]
//   reference <alt_id>
//
// `#` starts a comment. Parameters keep declaration order; every parameter
// vector downstream is laid out in that order, random parameters taking two
// slots (location, spread).

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "evacmix/dataset.hpp"
#include "evacmix/errors.hpp"

namespace evacmix {

enum class Space { preference, wtp };
enum class ParameterKind { fixed, random };
enum class Distribution { normal, negated_lognormal };

inline constexpr std::string_view kConstantAttribute = "ASC";

struct ParameterDef {
  std::string name;
  ParameterKind kind = ParameterKind::fixed;
  Distribution distribution = Distribution::normal;  // random only
  double init = 0.0;
  double init_sd = 0.0;                               // random only

  bool is_random() const { return kind == ParameterKind::random; }
  bool operator==(const ParameterDef&) const = default;
};

struct UtilityTerm {
  std::string parameter;
  std::string attribute;  // kConstantAttribute for alternative-specific constants
  std::vector<std::string> applies_to;
  std::optional<std::string> multiplier_attribute;

  bool is_constant() const { return attribute == kConstantAttribute; }
  bool applies(std::string_view alt_id) const {
    return std::find(applies_to.begin(), applies_to.end(), alt_id) != applies_to.end();
  }
  bool operator==(const UtilityTerm&) const = default;
};

struct ModelSpec {
  Space space = Space::preference;
  std::optional<std::string> price_attribute;
  std::vector<ParameterDef> parameters;
  std::vector<UtilityTerm> terms;
  std::string reference_alternative;

  bool operator==(const ModelSpec&) const = default;

  std::optional<std::size_t> parameter_index(std::string_view name) const {
    for (std::size_t i = 0; i < parameters.size(); ++i)
      if (parameters[i].name == name) return i;
    return std::nullopt;
  }

  // Number of estimated entries: one per fixed parameter, two per random one.
  std::size_t n_estimated() const {
    std::size_t n = 0;
    for (const auto& p : parameters) n += p.is_random() ? 2 : 1;
    return n;
  }

  // Offset of each parameter's first slot in the estimated vector.
  std::vector<std::size_t> offsets() const {
    std::vector<std::size_t> out;
    std::size_t at = 0;
    for (const auto& p : parameters) {
      out.push_back(at);
      at += p.is_random() ? 2 : 1;
    }
    return out;
  }

  std::vector<std::string> estimated_names() const {
    std::vector<std::string> out;
    for (const auto& p : parameters) {
      if (p.is_random()) {
        out.push_back(p.name + ".mean");
        out.push_back(p.name + ".sd");
      } else {
        out.push_back(p.name);
      }
    }
    return out;
  }

  std::vector<double> initial_values() const {
    std::vector<double> out;
    for (const auto& p : parameters) {
      out.push_back(p.init);
      if (p.is_random()) out.push_back(p.init_sd);
    }
    return out;
  }

  // The parameter multiplying the price attribute (the money-to-utility scale in wtp space).
  std::optional<std::size_t> price_parameter() const {
    if (!price_attribute) return std::nullopt;
    for (const auto& t : terms)
      if (t.attribute == *price_attribute && !t.multiplier_attribute) return parameter_index(t.parameter);
    return std::nullopt;
  }

  std::size_t n_interactions() const {
    return static_cast<std::size_t>(
        std::count_if(terms.begin(), terms.end(), [](const auto& t) { return t.multiplier_attribute.has_value(); }));
  }
};

struct SpecDiagnostic {
  std::size_t line = 0;    // 1-based; 0 for whole-document problems
  std::size_t column = 0;  // 1-based
  std::string message;
};

inline std::string describe(const SpecDiagnostic& d) {
  if (d.line == 0) return d.message;
  return std::to_string(d.line) + ":" + std::to_string(d.column) + ": " + d.message;
}

struct SpecParseResult {
  std::optional<ModelSpec> spec;
  std::vector<SpecDiagnostic> errors;
  bool ok() const { return spec.has_value(); }
};

namespace detail {

struct Token {
  std::string text;
  std::size_t column;
};

inline std::vector<Token> tokenize_spec_line(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size() || line[i] == '#') break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' && line[i] != '#') ++i;
    out.push_back({std::string(line.substr(start, i - start)), start + 1});
  }
  return out;
}

inline bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

inline std::string format_spec_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parses spec text. Never throws on malformed input: every problem comes
/// back as a positioned diagnostic and `spec` stays empty.
inline SpecParseResult parse_model_spec(std::string_view text) {
  SpecParseResult result;
  auto& errors = result.errors;
  ModelSpec m;
  std::vector<std::size_t> param_lines, term_lines;
  std::optional<std::size_t> space_line, price_line;
  bool space_seen = false;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const auto tok = detail::tokenize_spec_line(line);
    if (tok.empty()) continue;
    auto err = [&](const detail::Token& t, std::string msg) { errors.push_back({line_no, t.column, std::move(msg)}); };
    auto err_end = [&](std::string msg) {
      errors.push_back({line_no, tok.back().column + tok.back().text.size(), std::move(msg)});
    };
    const std::string& kw = tok[0].text;

    if (kw == "space") {
      if (tok.size() != 2) { err_end("expected 'space wtp|preference'"); continue; }
      if (space_seen) err(tok[0], "space declared more than once");
      if (tok[1].text == "wtp") m.space = Space::wtp;
      else if (tok[1].text == "preference") m.space = Space::preference;
      else { err(tok[1], "unknown space '" + tok[1].text + "' (expected wtp or preference)"); continue; }
      space_seen = true;
      space_line = line_no;
    } else if (kw == "price") {
      if (tok.size() != 2) { err_end("expected 'price <attribute>'"); continue; }
      if (m.price_attribute) err(tok[0], "price declared more than once");
      m.price_attribute = tok[1].text;
      price_line = line_no;
    } else if (kw == "reference") {
      if (tok.size() != 2) { err_end("expected 'reference <alt_id>'"); continue; }
      m.reference_alternative = tok[1].text;
    } else if (kw == "param") {
      if (tok.size() < 3) { err_end("expected 'param <name> fixed|random ...'"); continue; }
      ParameterDef p;
      p.name = tok[1].text;
      if (!detail::is_identifier(p.name)) { err(tok[1], "invalid parameter name '" + p.name + "'"); continue; }
      std::size_t next = 3;
      if (tok[2].text == "fixed") {
        p.kind = ParameterKind::fixed;
      } else if (tok[2].text == "random") {
        p.kind = ParameterKind::random;
        if (tok.size() < 4) { err_end("random parameter needs a distribution"); continue; }
        const auto& dist = tok[3].text;
        if (dist == "normal") p.distribution = Distribution::normal;
        else if (dist == "neglognormal" || dist == "negated_lognormal") p.distribution = Distribution::negated_lognormal;
        else { err(tok[3], "unknown distribution '" + dist + "' (expected normal or neglognormal)"); continue; }
        p.init_sd = 0.5;
        next = 4;
      } else {
        err(tok[2], "expected 'fixed' or 'random', got '" + tok[2].text + "'");
        continue;
      }
      bool bad = false;
      for (std::size_t i = next; i < tok.size(); ++i) {
        const auto eq = tok[i].text.find('=');
        const std::string key = tok[i].text.substr(0, eq);
        const auto value = eq == std::string::npos ? std::nullopt : detail::parse_number(tok[i].text.substr(eq + 1));
        if (!value) { err(tok[i], "expected key=<number>, got '" + tok[i].text + "'"); bad = true; continue; }
        if (key == "init") p.init = *value;
        else if (key == "init_sd" && p.is_random()) p.init_sd = *value;
        else { err(tok[i], "unknown option '" + key + "'"); bad = true; }
      }
      if (bad) continue;
      if (m.parameter_index(p.name)) { err(tok[1], "duplicate parameter name '" + p.name + "'"); continue; }
      m.parameters.push_back(p);
      param_lines.push_back(line_no);
    } else if (kw == "term") {
      if (tok.size() != 5 && tok.size() != 7) {
        err_end("expected 'term <param> on <attribute|ASC> alts=<ids> [times <attribute>]'");
        continue;
      }
      if (tok[2].text != "on") { err(tok[2], "expected 'on'"); continue; }
      UtilityTerm t;
      t.parameter = tok[1].text;
      t.attribute = tok[3].text;
      if (tok[4].text.rfind("alts=", 0) != 0) { err(tok[4], "expected alts=<id,id,...>"); continue; }
      std::string ids = tok[4].text.substr(5);
      std::stringstream ss(ids);
      std::string id;
      bool bad = false;
      while (std::getline(ss, id, ',')) {
        if (id.empty()) { err(tok[4], "empty alternative id"); bad = true; break; }
        if (t.applies(id)) { err(tok[4], "alternative '" + id + "' listed twice"); bad = true; break; }
        t.applies_to.push_back(id);
      }
      if (bad) continue;
      if (t.applies_to.empty()) { err(tok[4], "empty alternative list"); continue; }
      if (tok.size() == 7) {
        if (tok[5].text != "times") { err(tok[5], "expected 'times'"); continue; }
        t.multiplier_attribute = tok[6].text;
        if (*t.multiplier_attribute == t.attribute) {
          err(tok[6], "interaction multiplier must differ from the term attribute");
          continue;
        }
      }
      m.terms.push_back(t);
      term_lines.push_back(line_no);
    } else {
      err(tok[0], "unknown directive '" + kw + "'");
    }
  }

  // Document-level rules.
  if (m.parameters.empty()) errors.push_back({0, 0, "no parameters declared"});
  for (std::size_t i = 0; i < m.terms.size(); ++i)
    if (!m.parameter_index(m.terms[i].parameter))
      errors.push_back({term_lines[i], 6, "term references undeclared parameter '" + m.terms[i].parameter + "'"});
  for (std::size_t i = 0; i < m.parameters.size(); ++i) {
    const bool used = std::any_of(m.terms.begin(), m.terms.end(),
                                  [&](const auto& t) { return t.parameter == m.parameters[i].name; });
    if (!used) errors.push_back({param_lines[i], 7, "parameter '" + m.parameters[i].name + "' is not used by any term"});
  }
  if (m.space == Space::wtp) {
    if (!m.price_attribute) {
      errors.push_back({space_line.value_or(0), 1, "wtp space requires a 'price <attribute>' line"});
    } else {
      std::vector<std::size_t> price_terms;
      for (std::size_t i = 0; i < m.terms.size(); ++i)
        if (m.terms[i].attribute == *m.price_attribute && !m.terms[i].multiplier_attribute) price_terms.push_back(i);
      if (price_terms.size() != 1) {
        errors.push_back({price_line.value_or(0), 1,
                          "wtp space needs exactly one term on the price attribute, found " +
                              std::to_string(price_terms.size())});
      } else {
        const std::string& phi = m.terms[price_terms[0]].parameter;
        for (std::size_t i = 0; i < m.terms.size(); ++i)
          if (i != price_terms[0] && m.terms[i].parameter == phi)
            errors.push_back({term_lines[i], 6, "price parameter '" + phi + "' may only multiply the price attribute"});
      }
      for (std::size_t i = 0; i < m.terms.size(); ++i)
        if (m.terms[i].multiplier_attribute == m.price_attribute)
          errors.push_back({term_lines[i], 1, "price attribute cannot be an interaction multiplier in wtp space"});
    }
    // Constants stay on the utility scale; a parameter cannot be both a constant and money-metric.
    for (const auto& p : m.parameters) {
      bool on_constant = false, on_attribute = false;
      for (const auto& t : m.terms)
        if (t.parameter == p.name) (t.is_constant() ? on_constant : on_attribute) = true;
      if (on_constant && on_attribute)
        errors.push_back({0, 0, "parameter '" + p.name + "' mixes ASC and attribute terms in wtp space"});
    }
  }

  if (errors.empty()) result.spec = std::move(m);
  return result;
}

inline ModelSpec parse_model_spec_or_throw(std::string_view text) {
  auto r = parse_model_spec(text);
  if (!r.ok()) {
    std::string msg = "invalid model spec:";
    for (const auto& e : r.errors) msg += "\n  " + describe(e);
    throw SpecError(msg);
  }
  return std::move(*r.spec);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ModelSpec load_model_spec(const std::string& path) {
  return parse_model_spec_or_throw(read_text_file(path));
}

/// Canonical text form; parse(print(m)) == m.
inline std::string print_model_spec(const ModelSpec& m) {
  std::ostringstream out;
  out << "space " << (m.space == Space::wtp ? "wtp" : "preference") << '\n';
  if (m.price_attribute) out << "price " << *m.price_attribute << '\n';
  if (!m.reference_alternative.empty()) out << "reference " << m.reference_alternative << '\n';
  for (const auto& p : m.parameters) {
    out << "param " << p.name;
    if (p.is_random()) {
      out << " random " << (p.distribution == Distribution::normal ? "normal" : "neglognormal")
          << " init=" << detail::format_spec_number(p.init) << " init_sd=" << detail::format_spec_number(p.init_sd);
    } else {
      out << " fixed init=" << detail::format_spec_number(p.init);
    }
    out << '\n';
  }
  for (const auto& t : m.terms) {
    out << "term " << t.parameter << " on " << t.attribute << " alts=";
    for (std::size_t i = 0; i < t.applies_to.size(); ++i) out << (i ? "," : "") << t.applies_to[i];
    if (t.multiplier_attribute) out << " times " << *t.multiplier_attribute;
    out << '\n';
  }
  return out.str();
}

struct SpecViolation {
  std::string rule;
  std::string detail;
};

/// Cross-checks attribute bindings and alternative ids against a dataset.
inline std::vector<SpecViolation> validate_spec(const ModelSpec& m, const ChoiceDataset& d) {
  std::vector<SpecViolation> out;
  auto check_attr = [&](const std::string& name, const std::string& where) {
    if (!d.attribute_index(name)) out.push_back({"unknown-attribute", where + ": attribute '" + name + "' not in dataset"});
  };
  if (m.price_attribute) check_attr(*m.price_attribute, "price");
  for (const auto& t : m.terms) {
    const std::string where = "term " + t.parameter + " on " + t.attribute;
    if (!t.is_constant()) check_attr(t.attribute, where);
    if (t.multiplier_attribute) check_attr(*t.multiplier_attribute, where);
    for (const auto& id : t.applies_to)
      if (!d.has_alternative(id)) out.push_back({"unknown-alternative", where + ": alternative '" + id + "' not in dataset"});
  }
  if (!m.reference_alternative.empty() && !d.has_alternative(m.reference_alternative))
    out.push_back({"unknown-alternative", "reference alternative '" + m.reference_alternative + "' not in dataset"});
  return out;
}

}  // namespace evacmix
