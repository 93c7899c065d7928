#pragma once

// Deterministic validators and the gate that runs them at a trust boundary.
//
// Validators are pure: they see an immutable view of the artifact and return
// every violation they find. A parse failure is itself a failing outcome, so
// a gate never fails open on input it cannot read.

#include <algorithm>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/artifact_store.hpp"
#include "boundarykit/audit.hpp"
#include "boundarykit/digest.hpp"
#include "boundarykit/errors.hpp"
#include "boundarykit/payload.hpp"

namespace boundarykit {

enum class ValidatorKind { numeric_range, schema_conformance, spatial_plausibility, artifact_integrity, scripted_predicate };
enum class Severity { blocking, advisory };
enum class Verdict { pass, fail };

NLOHMANN_JSON_SERIALIZE_ENUM(ValidatorKind, {{ValidatorKind::numeric_range, "numeric_range"},
                                             {ValidatorKind::schema_conformance, "schema_conformance"},
                                             {ValidatorKind::spatial_plausibility, "spatial_plausibility"},
                                             {ValidatorKind::artifact_integrity, "artifact_integrity"},
                                             {ValidatorKind::scripted_predicate, "scripted_predicate"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Severity, {{Severity::blocking, "blocking"}, {Severity::advisory, "advisory"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Verdict, {{Verdict::pass, "pass"}, {Verdict::fail, "fail"}})

inline std::string to_string(ValidatorKind k) { return nlohmann::json(k).get<std::string>(); }

struct ValidatorSpec {
  std::string id;
  ValidatorKind kind = ValidatorKind::numeric_range;
  nlohmann::json params = nlohmann::json::object();
  Severity severity = Severity::blocking;
};

// Immutable view handed to validators. `context` carries boundary facts the
// payload cannot (e.g. the dataset the stage was asked to produce).
struct ArtifactView {
  std::string_view name;
  PayloadFormat format = PayloadFormat::geojson;
  std::string_view content;
  const std::map<std::string, std::string>* context = nullptr;

  std::optional<std::string> context_value(const std::string& key) const {
    if (!context) return std::nullopt;
    auto it = context->find(key);
    if (it == context->end()) return std::nullopt;
    return it->second;
  }
};

struct OffendingItem {
  std::string record;
  std::string field;
  std::string value;
  bool operator==(const OffendingItem&) const = default;
};

struct ValidationOutcome {
  std::string validator_id;
  ValidatorKind kind = ValidatorKind::numeric_range;
  Severity severity = Severity::blocking;
  std::string artifact;
  Verdict verdict = Verdict::pass;
  std::vector<OffendingItem> offending_items;
  nlohmann::json observations = nlohmann::json::object();  // e.g. observed ranges
  std::uint64_t impacted_count = 0;                         // records implicated by a fail
  std::uint64_t ran_at = 0;
  std::string input_digest;

  bool passed() const { return verdict == Verdict::pass; }
};

inline nlohmann::json to_json(const ValidationOutcome& o) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& i : o.offending_items) items.push_back({i.record, i.field, i.value});
  return {{"validator_id", o.validator_id},
          {"kind", o.kind},
          {"severity", o.severity},
          {"artifact", o.artifact},
          {"verdict", o.verdict},
          {"offending_items", items},
          {"observations", o.observations},
          {"impacted_count", o.impacted_count},
          {"ran_at", o.ran_at},
          {"input_digest", o.input_digest}};
}

// ---------------------------------------------------------------------------
// Spec parsing. Numeric-range specs are normalized to carry explicit
// inclusivity flags on every range.

struct NumericRange {
  std::string field;
  double min = 0;
  double max = 0;
  bool min_inclusive = true;
  bool max_inclusive = true;

  bool contains(double v) const {
    const bool lo = min_inclusive ? v >= min : v > min;
    const bool hi = max_inclusive ? v <= max : v < max;
    return lo && hi;
  }
};

inline std::vector<NumericRange> numeric_ranges(const nlohmann::json& params) {
  std::vector<NumericRange> out;
  auto one = [&](const nlohmann::json& r) {
    NumericRange nr;
    nr.field = r.at("field").get<std::string>();
    nr.min = r.at("min").get<double>();
    nr.max = r.at("max").get<double>();
    nr.min_inclusive = r.value("min_inclusive", true);
    nr.max_inclusive = r.value("max_inclusive", true);
    if (nr.min > nr.max) throw ParseError("numeric_range " + nr.field + ": min > max");
    out.push_back(nr);
  };
  if (params.contains("ranges")) {
    for (const auto& r : params.at("ranges")) one(r);
  } else {
    one(params);
  }
  if (out.empty()) throw ParseError("numeric_range: no ranges");
  return out;
}

inline ValidatorSpec validator_spec_from_json(const nlohmann::json& j) {
  try {
    ValidatorSpec s;
    s.id = j.at("id").get<std::string>();
    s.kind = detail::parse_enum<ValidatorKind>(j.at("kind"), "validator kind");
    s.params = j.value("params", nlohmann::json::object());
    s.severity = j.contains("severity") ? detail::parse_enum<Severity>(j.at("severity"), "severity") : Severity::blocking;
    switch (s.kind) {
      case ValidatorKind::numeric_range: {
        nlohmann::json ranges = nlohmann::json::array();
        for (const auto& r : numeric_ranges(s.params)) {
          ranges.push_back({{"field", r.field},
                            {"min", r.min},
                            {"max", r.max},
                            {"min_inclusive", r.min_inclusive},
                            {"max_inclusive", r.max_inclusive}});
        }
        s.params.erase("field");
        s.params.erase("min");
        s.params.erase("max");
        s.params.erase("min_inclusive");
        s.params.erase("max_inclusive");
        s.params["ranges"] = ranges;
        break;
      }
      case ValidatorKind::spatial_plausibility:
        if (!s.params.contains("max_collocated_fraction")) {
          throw ParseError("spatial_plausibility " + s.id + ": missing max_collocated_fraction");
        }
        break;
      case ValidatorKind::scripted_predicate:
        if (!s.params.contains("predicate")) throw ParseError("scripted_predicate " + s.id + ": missing predicate");
        break;
      default:
        break;
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("validator spec: ") + e.what());
  }
}

inline nlohmann::json to_json(const ValidatorSpec& s) {
  return {{"id", s.id}, {"kind", s.kind}, {"params", s.params}, {"severity", s.severity}};
}

// ---------------------------------------------------------------------------
// Scripted predicates: named pure functions returning offending items.

using PredicateFn = std::function<std::vector<OffendingItem>(const ArtifactView&, const nlohmann::json& params)>;

struct ScriptedPredicate {
  PredicateFn fn;
  bool declared_pure = false;
};

class PredicateRegistry {
 public:
  void add(std::string name, PredicateFn fn, bool declared_pure) {
    std::lock_guard lock(mu_);
    predicates_[std::move(name)] = ScriptedPredicate{std::move(fn), declared_pure};
  }

  std::optional<ScriptedPredicate> find(const std::string& name) const {
    std::lock_guard lock(mu_);
    auto it = predicates_.find(name);
    if (it == predicates_.end()) return std::nullopt;
    return it->second;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, ScriptedPredicate> predicates_;
};

struct ValidationOptions {
  const PredicateRegistry* predicates = nullptr;
  // Run scripted predicates twice and compare result digests.
  bool verify_purity = false;
};

// ---------------------------------------------------------------------------
// Spatial plausibility: fail when more than `max_collocated_fraction` of the
// points sit (within epsilon, per axis) on one coordinate pair.

struct GeoPoint {
  std::string id;
  double lon = 0;
  double lat = 0;
};

struct SpatialPlausibilityParams {
  double max_collocated_fraction = 0.5;
  double epsilon = 1e-9;
};

struct ClusterSummary {
  std::size_t count = 0;
  std::size_t representative = 0;  // index into the input
};

inline ClusterSummary dominant_cluster(std::span<const GeoPoint> pts, double eps) {
  ClusterSummary best;
  if (pts.empty()) return best;
  std::vector<std::size_t> order(pts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pts[a].lon != pts[b].lon) return pts[a].lon < pts[b].lon;
    if (pts[a].lat != pts[b].lat) return pts[a].lat < pts[b].lat;
    return pts[a].id < pts[b].id;
  });
  std::size_t lo = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& c = pts[order[k]];
    while (pts[order[lo]].lon < c.lon - eps) ++lo;
    std::size_t n = 0;
    for (std::size_t j = lo; j < order.size() && pts[order[j]].lon <= c.lon + eps; ++j) {
      if (std::abs(pts[order[j]].lat - c.lat) <= eps) ++n;
    }
    if (n > best.count) best = {n, order[k]};
  }
  return best;
}

inline ValidationOutcome spatial_plausibility(std::span<const GeoPoint> pts, const SpatialPlausibilityParams& params) {
  ValidationOutcome out;
  out.kind = ValidatorKind::spatial_plausibility;
  out.observations["features"] = pts.size();
  if (pts.size() < 2) {
    out.observations["max_collocated"] = pts.size();
    return out;
  }
  const ClusterSummary c = dominant_cluster(pts, params.epsilon);
  out.observations["max_collocated"] = c.count;
  if (static_cast<double>(c.count) > params.max_collocated_fraction * static_cast<double>(pts.size())) {
    const auto& p = pts[c.representative];
    out.verdict = Verdict::fail;
    out.impacted_count = c.count;
    out.offending_items.push_back({p.id, "collocated_cluster",
                                   "lon=" + format_number(p.lon) + " lat=" + format_number(p.lat) +
                                       " count=" + std::to_string(c.count)});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::string json_type_name(const nlohmann::json& v) {
  if (v.is_string()) return "string";
  if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_boolean()) return "boolean";
  if (v.is_null()) return "null";
  return v.is_array() ? "array" : "object";
}

inline bool type_matches(const nlohmann::json& v, const std::string& want) {
  const std::string got = json_type_name(v);
  return got == want || (want == "number" && got == "integer");
}

inline bool cell_matches(const std::string& cell, const std::string& want) {
  if (want == "string") return true;
  if (want == "number") return parse_double(cell).has_value();
  if (want == "integer") {
    auto v = parse_double(cell);
    return v && std::floor(*v) == *v;
  }
  if (want == "boolean") return cell == "true" || cell == "false";
  return false;
}

inline std::size_t distinct_records(const std::vector<OffendingItem>& items) {
  std::set<std::string> ids;
  for (const auto& i : items) ids.insert(i.record);
  return ids.size();
}

inline void run_numeric_range(const ValidatorSpec& spec, const ArtifactView& a, ValidationOutcome& out) {
  const auto ranges = numeric_ranges(spec.params);
  const std::string id_field = spec.params.value("id_field", "station_id");
  struct Seen {
    double lo = 0, hi = 0;
    std::size_t n = 0;
  };
  std::map<std::string, Seen> seen;
  auto observe = [&](const std::string& field, double v) {
    auto& s = seen[field];
    if (s.n == 0) s.lo = s.hi = v;
    s.lo = std::min(s.lo, v);
    s.hi = std::max(s.hi, v);
    ++s.n;
  };
  auto check = [&](const std::string& record, const NumericRange& r, std::optional<double> v, const std::string& raw) {
    if (!v) {
      out.offending_items.push_back({record, r.field, raw.empty() ? "missing" : "non-numeric:" + raw});
      return;
    }
    observe(r.field, *v);
    if (!r.contains(*v)) out.offending_items.push_back({record, r.field, format_number(*v)});
  };
  if (a.format == PayloadFormat::geojson) {
    const GeoPayload g = parse_geojson(a.content, id_field);
    for (const auto& f : g.features) {
      for (const auto& r : ranges) {
        std::optional<double> v;
        std::string raw;
        if (r.field == "lat" || r.field == "lon") {
          v = r.field == "lat" ? f.lat : f.lon;
        } else if (auto it = f.properties.find(r.field); it != f.properties.end()) {
          if (it->is_number()) {
            v = it->get<double>();
          } else {
            raw = it->dump();
          }
        }
        check(f.id, r, v, raw);
      }
    }
  } else if (a.format == PayloadFormat::csv) {
    const TabularPayload t = parse_csv(a.content);
    const auto id_col = t.column(id_field);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const std::string record = id_col ? t.rows[i][*id_col] : "#" + std::to_string(i);
      for (const auto& r : ranges) {
        const auto col = t.column(r.field);
        const std::string cell = col ? t.rows[i][*col] : "";
        check(record, r, col ? parse_double(cell) : std::nullopt, cell);
      }
    }
  } else {
    throw ParseError("numeric_range: unsupported payload format");
  }
  for (const auto& [field, s] : seen) {
    out.observations[field] = {{"min", s.lo}, {"max", s.hi}, {"checked", s.n}};
  }
  out.impacted_count = distinct_records(out.offending_items);
}

inline void run_schema(const ValidatorSpec& spec, const ArtifactView& a, ValidationOutcome& out) {
  const auto& p = spec.params;
  if (a.format == PayloadFormat::geojson) {
    const GeoPayload g = parse_geojson(a.content, p.value("id_field", "station_id"));
    for (const auto& m : p.value("required_members", std::vector<std::string>{})) {
      if (!g.members.contains(m)) out.offending_items.push_back({std::string(a.name), m, "missing"});
    }
    const std::string geom = p.value("geometry_type", "");
    const auto required = p.value("required_properties", std::vector<std::string>{});
    const auto types = p.value("property_types", std::map<std::string, std::string>{});
    for (const auto& f : g.features) {
      if (!geom.empty() && f.geometry_type != geom) {
        out.offending_items.push_back({f.id, "geometry", f.geometry_type.empty() ? "null" : f.geometry_type});
      }
      for (const auto& r : required) {
        if (!f.properties.contains(r)) out.offending_items.push_back({f.id, r, "missing"});
      }
      for (const auto& [name, want] : types) {
        auto it = f.properties.find(name);
        if (it != f.properties.end() && !type_matches(*it, want)) {
          out.offending_items.push_back({f.id, name, json_type_name(*it) + "!=" + want});
        }
      }
    }
    out.observations["features"] = g.features.size();
  } else if (a.format == PayloadFormat::csv) {
    const TabularPayload t = parse_csv(a.content);
    for (const auto& c : p.value("required_columns", std::vector<std::string>{})) {
      if (!t.column(c)) out.offending_items.push_back({std::string(a.name), c, "missing column"});
    }
    const auto id_col = t.column(p.value("id_field", "station_id"));
    for (const auto& [name, want] : p.value("column_types", std::map<std::string, std::string>{})) {
      const auto col = t.column(name);
      if (!col) continue;
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (!cell_matches(t.rows[i][*col], want)) {
          out.offending_items.push_back(
              {id_col ? t.rows[i][*id_col] : "#" + std::to_string(i), name, t.rows[i][*col]});
        }
      }
    }
    out.observations["rows"] = t.rows.size();
  } else {
    try {
      [[maybe_unused]] auto doc = nlohmann::json::parse(a.content);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what());
    }
  }
  out.impacted_count = distinct_records(out.offending_items);
}

inline void run_spatial(const ValidatorSpec& spec, const ArtifactView& a, ValidationOutcome& out) {
  if (a.format != PayloadFormat::geojson) throw ParseError("spatial_plausibility: payload is not geojson");
  const GeoPayload g = parse_geojson(a.content, spec.params.value("id_field", "station_id"));
  std::vector<GeoPoint> pts;
  pts.reserve(g.features.size());
  for (const auto& f : g.features) {
    if (f.lon && f.lat) pts.push_back({f.id, *f.lon, *f.lat});
  }
  SpatialPlausibilityParams params;
  params.max_collocated_fraction = spec.params.at("max_collocated_fraction").get<double>();
  params.epsilon = spec.params.value("epsilon", 1e-9);
  ValidationOutcome r = spatial_plausibility(pts, params);
  out.verdict = r.verdict;
  out.offending_items = std::move(r.offending_items);
  out.observations = std::move(r.observations);
  out.impacted_count = r.impacted_count;
}

inline void run_artifact_integrity(const ValidatorSpec& spec, const ArtifactView& a, ValidationOutcome& out) {
  const std::string check = spec.params.value("check", "dataset_identity");
  if (check == "bundle") {
    nlohmann::json archive;
    try {
      archive = nlohmann::json::parse(a.content);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what());
    }
    const IntegrityReport rep = validate_integrity(load_store_from_json(archive));
    for (const auto& b : rep.broken_behavior_refs) out.offending_items.push_back({b.skill_id, "behavior_gate", b.behavior_id});
    for (const auto& m : rep.missing_knowledge_links) out.offending_items.push_back({m.owner, m.via, m.missing});
    for (const auto& o : rep.orphan_nodes) out.offending_items.push_back({o, "orphan", "unreachable"});
    out.observations["defects"] = rep.defect_count();
  } else if (check == "dataset_identity") {
    const std::string field = spec.params.value("field", "dataset_id");
    const std::string key = spec.params.value("context_key", "expected_dataset");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(a.content);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what());
    }
    const auto expected = a.context_value(key);
    std::string actual = "missing";
    if (doc.is_object()) {
      if (auto it = doc.find(field); it != doc.end()) actual = it->is_string() ? it->get<std::string>() : it->dump();
    }
    out.observations[field] = actual;
    if (!expected) {
      out.offending_items.push_back({std::string(a.name), field, "no expectation for " + key});
    } else if (actual != *expected) {
      out.offending_items.push_back({std::string(a.name), field, actual + "!=" + *expected});
      if (doc.is_object() && doc.contains("features") && doc["features"].is_array()) {
        out.impacted_count = doc["features"].size();
      }
    }
  } else {
    throw ParseError("artifact_integrity: unknown check '" + check + "'");
  }
  if (out.impacted_count == 0) out.impacted_count = distinct_records(out.offending_items);
}

inline std::string items_digest(const std::vector<OffendingItem>& items) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& i : items) j.push_back({i.record, i.field, i.value});
  return sha256_hex(j.dump());
}

inline void run_scripted(const ValidatorSpec& spec, const ArtifactView& a, ValidationOutcome& out,
                         const ValidationOptions& opts) {
  const std::string name = spec.params.at("predicate").get<std::string>();
  std::optional<ScriptedPredicate> pred = opts.predicates ? opts.predicates->find(name) : std::nullopt;
  if (!pred) {
    out.offending_items.push_back({std::string(a.name), "predicate", "unknown predicate " + name});
    return;
  }
  if (!pred->declared_pure) {
    out.offending_items.push_back({std::string(a.name), "predicate", name + " is not declared pure"});
    return;
  }
  out.offending_items = pred->fn(a, spec.params);
  if (opts.verify_purity) {
    auto second = pred->fn(a, spec.params);
    if (items_digest(second) != items_digest(out.offending_items)) {
      out.offending_items.push_back({std::string(a.name), "predicate", name + " is impure: results differ"});
    }
  }
  out.impacted_count = distinct_records(out.offending_items);
}

}  // namespace detail

// Runs one validator over one artifact. Never throws for bad payloads: an
// unparseable artifact yields a fail with a ("parse") offending item.
inline ValidationOutcome run_validator(const ValidatorSpec& spec, const ArtifactView& artifact, std::uint64_t ran_at = 0,
                                       const ValidationOptions& opts = {}) {
  ValidationOutcome out;
  out.validator_id = spec.id;
  out.kind = spec.kind;
  out.severity = spec.severity;
  out.artifact = std::string(artifact.name);
  out.ran_at = ran_at;
  out.input_digest = sha256_hex(artifact.content);
  try {
    switch (spec.kind) {
      case ValidatorKind::numeric_range: detail::run_numeric_range(spec, artifact, out); break;
      case ValidatorKind::schema_conformance: detail::run_schema(spec, artifact, out); break;
      case ValidatorKind::spatial_plausibility: detail::run_spatial(spec, artifact, out); break;
      case ValidatorKind::artifact_integrity: detail::run_artifact_integrity(spec, artifact, out); break;
      case ValidatorKind::scripted_predicate: detail::run_scripted(spec, artifact, out, opts); break;
    }
  } catch (const std::exception& e) {
    out.offending_items.assign(1, OffendingItem{std::string(artifact.name), "parse", e.what()});
    out.observations = nlohmann::json::object();
    out.impacted_count = 0;
  }
  if (!out.offending_items.empty()) out.verdict = Verdict::fail;
  return out;
}

struct GateResult {
  bool approved = true;
  std::vector<ValidationOutcome> outcomes;  // all, in (artifact, spec) order
  std::vector<ValidationOutcome> blocking_failures;
  std::vector<std::uint64_t> audit_seqs;

  std::vector<ValidatorKind> failing_kinds() const {
    std::vector<ValidatorKind> kinds;
    for (const auto& o : blocking_failures) {
      if (std::find(kinds.begin(), kinds.end(), o.kind) == kinds.end()) kinds.push_back(o.kind);
    }
    return kinds;
  }
};

inline nlohmann::json to_json(const GateResult& g) {
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : g.outcomes) outcomes.push_back(to_json(o));
  nlohmann::json failing = nlohmann::json::array();
  for (const auto& o : g.blocking_failures) failing.push_back(o.validator_id + "@" + o.artifact);
  return {{"approved", g.approved}, {"outcomes", outcomes}, {"blocking_failures", failing}};
}

struct GateOptions {
  ValidationOptions validation;
  bool concurrent = false;
};

// Runs every spec over every artifact and records each outcome (pass or fail,
// blocking or advisory) in the audit log. Approved iff no blocking fail.
inline GateResult run_gate(std::span<const ValidatorSpec> specs, std::span<const ArtifactView> artifacts,
                           AuditLog& audit, const std::string& actor, std::uint64_t ran_at,
                           const GateOptions& opts = {}) {
  GateResult res;
  res.outcomes.reserve(specs.size() * artifacts.size());
  if (opts.concurrent && specs.size() * artifacts.size() > 1) {
    std::vector<std::future<ValidationOutcome>> futs;
    for (const auto& a : artifacts) {
      for (const auto& s : specs) {
        futs.push_back(std::async(std::launch::async, [&s, &a, ran_at, &opts] {
          return run_validator(s, a, ran_at, opts.validation);
        }));
      }
    }
    for (auto& f : futs) res.outcomes.push_back(f.get());
  } else {
    for (const auto& a : artifacts) {
      for (const auto& s : specs) res.outcomes.push_back(run_validator(s, a, ran_at, opts.validation));
    }
  }
  for (const auto& o : res.outcomes) {
    res.audit_seqs.push_back(audit.append(actor, AuditEvent::validation_outcome, to_json(o)).seq);
    if (!o.passed() && o.severity == Severity::blocking) {
      res.approved = false;
      res.blocking_failures.push_back(o);
    }
  }
  return res;
}

inline GateResult run_gate(std::span<const ValidatorSpec> specs, const ArtifactView& artifact, AuditLog& audit,
                           const std::string& actor, std::uint64_t ran_at, const GateOptions& opts = {}) {
  return run_gate(specs, std::span<const ArtifactView>(&artifact, 1), audit, actor, ran_at, opts);
}

}  // namespace boundarykit
