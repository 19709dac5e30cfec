#pragma once

// Long-format stated-choice panels: one row per person x task x alternative.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evacmix/errors.hpp"
#include "json.hpp"

namespace evacmix {

enum class AttributeKind { continuous, binary, categorical };

// How a peer column is coded in the file. Stored values are always shares.
enum class PeerCoding { none, share, count };

inline constexpr double kPeerNetworkSize = 5.0;
inline constexpr double kPeerShareTolerance = 1e-9;

struct AttributeInfo {
  std::string name;
  AttributeKind kind = AttributeKind::continuous;
  std::string units;
  bool person_level = false;
  PeerCoding peer = PeerCoding::none;

  bool operator==(const AttributeInfo&) const = default;
};

struct AlternativeRecord {
  std::string alt_id;
  bool available = true;
  std::vector<double> values;  // indexed like ChoiceDataset::attribute_schema

  bool operator==(const AlternativeRecord&) const = default;
};

struct ChoiceTask {
  std::string task_id;
  std::vector<AlternativeRecord> alternatives;
  std::string chosen;

  std::optional<std::size_t> find(std::string_view alt_id) const {
    for (std::size_t j = 0; j < alternatives.size(); ++j)
      if (alternatives[j].alt_id == alt_id) return j;
    return std::nullopt;
  }
  std::size_t n_available() const {
    return static_cast<std::size_t>(std::count_if(alternatives.begin(), alternatives.end(),
                                                  [](const auto& a) { return a.available; }));
  }

  bool operator==(const ChoiceTask&) const = default;
};

struct PersonRecord {
  std::string person_id;
  std::vector<ChoiceTask> tasks;
  std::map<std::string, double> covariates;

  bool operator==(const PersonRecord&) const = default;
};

struct ChoiceDataset {
  std::vector<PersonRecord> individuals;
  std::vector<AttributeInfo> attribute_schema;
  std::vector<std::string> alternative_ids;  // first-appearance order

  std::size_t n_alternatives() const { return alternative_ids.size(); }

  std::size_t n_observations() const {
    std::size_t n = 0;
    for (const auto& p : individuals) n += p.tasks.size();
    return n;
  }

  std::optional<std::size_t> attribute_index(std::string_view name) const {
    for (std::size_t k = 0; k < attribute_schema.size(); ++k)
      if (attribute_schema[k].name == name) return k;
    return std::nullopt;
  }

  bool has_alternative(std::string_view alt_id) const {
    return std::find(alternative_ids.begin(), alternative_ids.end(), alt_id) !=
           alternative_ids.end();
  }

  bool operator==(const ChoiceDataset&) const = default;
};

/// Which file columns hold what. An empty `attributes` list means "every
/// non-reserved column is a continuous attribute" with binary kinds detected.
struct ColumnMapping {
  std::string person_id = "person_id";
  std::string task_id = "task_id";
  std::string alt_id = "alt_id";
  std::string avail = "avail";
  std::string chosen = "chosen";
  std::vector<AttributeInfo> attributes;
  bool strict_covariates = true;

  static ColumnMapping from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Mapping that reloads a saved dataset into an identical one.
  static ColumnMapping describing(const ChoiceDataset& d);
};

struct Violation {
  std::string person_id;
  std::string task_id;
  std::string rule;
  std::string detail;
};

struct AttributeSummary {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

// ---------------------------------------------------------------------------

inline std::string to_string(AttributeKind k) {
  switch (k) {
    case AttributeKind::binary: return "binary";
    case AttributeKind::categorical: return "categorical";
    default: return "continuous";
  }
}

inline AttributeKind attribute_kind_from_string(std::string_view s) {
  if (s == "continuous") return AttributeKind::continuous;
  if (s == "binary") return AttributeKind::binary;
  if (s == "categorical") return AttributeKind::categorical;
  throw SchemaError("unknown attribute kind '" + std::string(s) + "'");
}

inline ColumnMapping ColumnMapping::from_json(const nlohmann::json& j) {
  ColumnMapping m;
  auto str = [&](const char* key, std::string& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::string>();
  };
  try {
    str("person_id", m.person_id);
    str("task_id", m.task_id);
    str("alt_id", m.alt_id);
    str("avail", m.avail);
    str("chosen", m.chosen);
    if (j.contains("strict_covariates")) m.strict_covariates = j.at("strict_covariates").get<bool>();
    if (j.contains("attributes")) {
      for (const auto& a : j.at("attributes")) {
        AttributeInfo info;
        info.name = a.at("name").get<std::string>();
        if (a.contains("kind")) info.kind = attribute_kind_from_string(a.at("kind").get<std::string>());
        if (a.contains("units")) info.units = a.at("units").get<std::string>();
        if (a.contains("person_level")) info.person_level = a.at("person_level").get<bool>();
        if (a.contains("peer")) {
          const auto peer = a.at("peer").get<std::string>();
          if (peer == "share") info.peer = PeerCoding::share;
          else if (peer == "count") info.peer = PeerCoding::count;
          else if (peer != "none") throw SchemaError("unknown peer coding '" + peer + "'");
        }
        m.attributes.push_back(std::move(info));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed column mapping: ") + e.what());
  }
  return m;
}

inline nlohmann::json ColumnMapping::to_json() const {
  nlohmann::ordered_json j;
  j["person_id"] = person_id;
  j["task_id"] = task_id;
  j["alt_id"] = alt_id;
  j["avail"] = avail;
  j["chosen"] = chosen;
  j["strict_covariates"] = strict_covariates;
  j["attributes"] = nlohmann::ordered_json::array();
  for (const auto& a : attributes) {
    nlohmann::ordered_json e;
    e["name"] = a.name;
    e["kind"] = to_string(a.kind);
    e["units"] = a.units;
    e["person_level"] = a.person_level;
    e["peer"] = a.peer == PeerCoding::count ? "count" : a.peer == PeerCoding::share ? "share" : "none";
    j["attributes"].push_back(e);
  }
  return j;
}

inline ColumnMapping ColumnMapping::describing(const ChoiceDataset& d) {
  ColumnMapping m;
  m.attributes = d.attribute_schema;
  for (auto& a : m.attributes)
    if (a.peer == PeerCoding::count) a.peer = PeerCoding::share;
  return m;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Comma-separated fields; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Checks every dataset, person, and task rule. Violations are data; this
/// never throws.
inline std::vector<Violation> validate_dataset(const ChoiceDataset& d) {
  std::vector<Violation> out;
  std::vector<std::size_t> peer_columns;
  for (std::size_t k = 0; k < d.attribute_schema.size(); ++k)
    if (d.attribute_schema[k].peer != PeerCoding::none) peer_columns.push_back(k);

  std::set<std::string> seen_people;
  for (const auto& person : d.individuals) {
    if (!seen_people.insert(person.person_id).second)
      out.push_back({person.person_id, "", "unique-person", "person_id appears more than once"});

    std::set<std::string> seen_tasks;
    for (const auto& task : person.tasks) {
      auto flag = [&](std::string rule, std::string detail) {
        out.push_back({person.person_id, task.task_id, std::move(rule), std::move(detail)});
      };
      if (!seen_tasks.insert(task.task_id).second) flag("unique-task", "task_id repeated for person");

      std::set<std::string> alt_ids;
      for (const auto& alt : task.alternatives) {
        if (!alt_ids.insert(alt.alt_id).second) flag("unique-alternative", "alt_id " + alt.alt_id + " repeated");
        if (alt.values.size() != d.attribute_schema.size())
          flag("attribute-count", "alternative " + alt.alt_id + " has wrong number of attribute values");
      }

      const std::size_t n_avail = task.n_available();
      if (n_avail < 2) {
        flag("min-two-available", std::to_string(n_avail) + " available alternative(s)");
        continue;
      }
      const auto chosen = task.find(task.chosen);
      if (!chosen) {
        flag("chosen-present", "chosen alternative '" + task.chosen + "' not offered");
      } else if (!task.alternatives[*chosen].available) {
        flag("chosen-available", "chosen alternative '" + task.chosen + "' is unavailable");
      }

      for (const std::size_t k : peer_columns) {
        double sum = 0.0;
        for (const auto& alt : task.alternatives)
          if (k < alt.values.size()) sum += alt.values[k];
        if (std::abs(sum - 1.0) > kPeerShareTolerance)
          flag("peer-share-sum", d.attribute_schema[k].name + " sums to " + detail::format_number(sum));
      }
    }

    for (std::size_t k = 0; k < d.attribute_schema.size(); ++k) {
      if (!d.attribute_schema[k].person_level) continue;
      std::optional<double> first;
      bool constant = true;
      for (const auto& task : person.tasks)
        for (const auto& alt : task.alternatives) {
          if (k >= alt.values.size()) continue;
          if (!first) first = alt.values[k];
          else if (alt.values[k] != *first) constant = false;
        }
      if (!constant)
        out.push_back({person.person_id, "", "covariate-constant",
                       d.attribute_schema[k].name + " varies within person"});
    }
  }
  return out;
}

inline std::string describe(const Violation& v) {
  std::string s = "person " + v.person_id;
  if (!v.task_id.empty()) s += " task " + v.task_id;
  return s + " [" + v.rule + "] " + v.detail;
}

/// Reads a long-format CSV. Rows of one task keep their file order as the
/// alternative order; people and tasks are ordered by first appearance.
inline ChoiceDataset load_long_table(std::istream& in, const ColumnMapping& mapping,
                                     const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw SchemaError(source + ": missing header row");

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!col.emplace(header[i], i).second) throw SchemaError(source + ": duplicate column '" + header[i] + "'");
  }
  auto require = [&](const std::string& name) {
    const auto it = col.find(name);
    if (it == col.end()) throw SchemaError(source + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t c_person = require(mapping.person_id);
  const std::size_t c_task = require(mapping.task_id);
  const std::size_t c_alt = require(mapping.alt_id);
  const std::size_t c_chosen = require(mapping.chosen);
  const auto avail_it = col.find(mapping.avail);
  const std::optional<std::size_t> c_avail =
      avail_it == col.end() ? std::nullopt : std::optional<std::size_t>(avail_it->second);

  std::vector<AttributeInfo> schema = mapping.attributes;
  const bool infer_kinds = schema.empty();
  if (infer_kinds) {
    const std::set<std::string> reserved{mapping.person_id, mapping.task_id, mapping.alt_id,
                                         mapping.avail, mapping.chosen};
    for (const auto& h : header)
      if (!reserved.count(h)) schema.push_back({h, AttributeKind::continuous, "", false, PeerCoding::none});
  }
  std::vector<std::size_t> attr_cols;
  for (const auto& a : schema) attr_cols.push_back(require(a.name));

  ChoiceDataset d;
  d.attribute_schema = schema;

  std::unordered_map<std::string, std::size_t> person_at;
  std::vector<std::unordered_map<std::string, std::size_t>> task_at;
  std::vector<std::vector<std::size_t>> chosen_count;
  std::set<std::tuple<std::string, std::string, std::string>> triples;

  auto flag01 = [&](std::string_view cell, const std::string& what) {
    const auto v = detail::parse_number(cell);
    if (!v || (*v != 0.0 && *v != 1.0))
      throw ParseError(line_no, "column '" + what + "' must be 0 or 1, got '" + std::string(cell) + "'");
    return *v == 1.0;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                    std::to_string(cells.size()));

    const std::string& pid = cells[c_person];
    const std::string& tid = cells[c_task];
    const std::string& aid = cells[c_alt];
    if (pid.empty() || tid.empty() || aid.empty()) throw ParseError(line_no, "empty identifier");
    if (!triples.emplace(pid, tid, aid).second)
      throw IntegrityError(source + ": duplicate (person, task, alt) = (" + pid + ", " + tid + ", " + aid +
                           ") at line " + std::to_string(line_no));

    AlternativeRecord alt;
    alt.alt_id = aid;
    alt.available = c_avail ? flag01(cells[*c_avail], mapping.avail) : true;
    const bool chosen = flag01(cells[c_chosen], mapping.chosen);
    alt.values.reserve(schema.size());
    for (std::size_t k = 0; k < schema.size(); ++k) {
      const auto v = detail::parse_number(cells[attr_cols[k]]);
      if (!v)
        throw ParseError(line_no, "non-numeric value '" + cells[attr_cols[k]] + "' in attribute '" +
                                      schema[k].name + "'");
      alt.values.push_back(schema[k].peer == PeerCoding::count ? *v / kPeerNetworkSize : *v);
    }

    auto [pit, new_person] = person_at.emplace(pid, d.individuals.size());
    if (new_person) {
      d.individuals.push_back(PersonRecord{pid, {}, {}});
      task_at.emplace_back();
      chosen_count.emplace_back();
    }
    const std::size_t pi = pit->second;
    auto [tit, new_task] = task_at[pi].emplace(tid, d.individuals[pi].tasks.size());
    if (new_task) {
      d.individuals[pi].tasks.push_back(ChoiceTask{tid, {}, ""});
      chosen_count[pi].push_back(0);
    }
    const std::size_t ti = tit->second;
    if (chosen) {
      d.individuals[pi].tasks[ti].chosen = aid;
      ++chosen_count[pi][ti];
    }
    d.individuals[pi].tasks[ti].alternatives.push_back(std::move(alt));
    if (!d.has_alternative(aid)) d.alternative_ids.push_back(aid);
  }

  for (std::size_t pi = 0; pi < d.individuals.size(); ++pi)
    for (std::size_t ti = 0; ti < d.individuals[pi].tasks.size(); ++ti)
      if (chosen_count[pi][ti] != 1)
        throw IntegrityError(source + ": person " + d.individuals[pi].person_id + " task " +
                             d.individuals[pi].tasks[ti].task_id + " has " +
                             std::to_string(chosen_count[pi][ti]) + " chosen rows (expected 1)");

  if (infer_kinds) {
    for (std::size_t k = 0; k < schema.size(); ++k) {
      bool binary = true;
      for (const auto& p : d.individuals)
        for (const auto& t : p.tasks)
          for (const auto& a : t.alternatives)
            if (a.values[k] != 0.0 && a.values[k] != 1.0) binary = false;
      if (binary) d.attribute_schema[k].kind = AttributeKind::binary;
    }
  }

  // Person-level covariates: strict mode rejects variation, lenient keeps the first row's value.
  for (auto& person : d.individuals) {
    for (std::size_t k = 0; k < schema.size(); ++k) {
      if (!schema[k].person_level) continue;
      const double first = person.tasks.front().alternatives.front().values[k];
      for (auto& task : person.tasks)
        for (auto& alt : task.alternatives) {
          if (alt.values[k] == first) continue;
          if (mapping.strict_covariates)
            throw IntegrityError(source + ": covariate '" + schema[k].name + "' varies within person " +
                                 person.person_id);
          alt.values[k] = first;
        }
      person.covariates[schema[k].name] = first;
    }
  }

  const auto violations = validate_dataset(d);
  if (!violations.empty()) {
    std::string msg = source + ": " + std::to_string(violations.size()) + " integrity violation(s); first: " +
                      describe(violations.front());
    throw IntegrityError(msg);
  }
  return d;
}

inline ChoiceDataset load_long_table(const std::string& path, const ColumnMapping& mapping = {}) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open data file '" + path + "'");
  return load_long_table(in, mapping, path);
}

/// Writes the dataset in the layout load_long_table reads, numbers at 17
/// significant digits so a reload is exact.
inline void save_long_table(const ChoiceDataset& d, std::ostream& out) {
  out << "person_id,task_id,alt_id,avail,chosen";
  for (const auto& a : d.attribute_schema) out << ',' << a.name;
  out << '\n';
  for (const auto& p : d.individuals)
    for (const auto& t : p.tasks)
      for (const auto& a : t.alternatives) {
        out << p.person_id << ',' << t.task_id << ',' << a.alt_id << ',' << (a.available ? 1 : 0) << ','
            << (a.alt_id == t.chosen ? 1 : 0);
        for (const double v : a.values) out << ',' << detail::format_number(v);
        out << '\n';
      }
}

inline void save_long_table(const ChoiceDataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write data file '" + path + "'");
  save_long_table(d, out);
}

/// Min, max, mean and population sd of every attribute over all alternative
/// rows. Values are sorted before summation so the result does not depend on
/// row order.
inline std::vector<AttributeSummary> summarize_attributes(const ChoiceDataset& d) {
  std::vector<AttributeSummary> out;
  std::vector<double> column;
  for (std::size_t k = 0; k < d.attribute_schema.size(); ++k) {
    column.clear();
    for (const auto& p : d.individuals)
      for (const auto& t : p.tasks)
        for (const auto& a : t.alternatives) column.push_back(a.values[k]);
    AttributeSummary s{d.attribute_schema[k].name};
    if (!column.empty()) {
      std::sort(column.begin(), column.end());
      if (column.front() == column.back()) {
        s.min = s.max = s.mean = column.front();
        out.push_back(s);
        continue;
      }
      const double n = static_cast<double>(column.size());
      double sum = 0.0;
      for (const double v : column) sum += v;
      s.mean = sum / n;
      std::vector<double> sq;
      sq.reserve(column.size());
      for (const double v : column) sq.push_back((v - s.mean) * (v - s.mean));
      std::sort(sq.begin(), sq.end());
      double ss = 0.0;
      for (const double v : sq) ss += v;
      s.min = column.front();
      s.max = column.back();
      s.sd = std::sqrt(ss / n);
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace evacmix
