#pragma once

// Deployment and job documents.
//
// A deployment names zones, roles, validators, the artifact bundle, gateway
// session tokens and registered workflows:
//
//   {"zones": [{"id": "...", "description": "..."}],
//    "roles": [{"id", "kind", "capabilities", "zone"}],
//    "validators": [{"id", "kind", "params", "severity"}],
//    "artifacts": "bundle-dir-or-archive" | {"documents": [...]},
//    "sessions": {"<token>": "<role-id>"},
//    "workflows": [<workflow definition>],
//    "audit_log": "path"}
//
// A job submits one run of a workflow:
//
//   {"deployment": "path",            (CLI only)
//    "workflow": "<id>" | <workflow definition>,
//    "stubs": {"<role-id>": <stub>},
//    "inputs": [{"name", "format", "content"}] | {"station_table": {...}},
//    "context": {"expected_dataset": "..."},
//    "remediates": "ISS-001"}
//
// Relative paths resolve against the directory of the referencing file.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "boundarykit/engine.hpp"
#include "boundarykit/stubs.hpp"

namespace boundarykit {

inline constexpr const char* kConfigEnvVar = "BOUNDARYKIT_CONFIG";

struct Deployment {
  nlohmann::json doc;
  std::filesystem::path base;  // directory relative paths resolve against
  std::map<std::string, std::string> sessions;  // token -> role id
};

inline Deployment load_deployment(const std::filesystem::path& path) {
  Deployment d;
  d.doc = parse_json_file(path);
  d.base = std::filesystem::absolute(path).parent_path();
  if (d.doc.contains("sessions")) d.sessions = d.doc["sessions"].get<std::map<std::string, std::string>>();
  return d;
}

inline Deployment deployment_from_json(nlohmann::json doc, std::filesystem::path base = {}) {
  Deployment d;
  d.doc = std::move(doc);
  d.base = std::move(base);
  if (d.doc.contains("sessions")) d.sessions = d.doc["sessions"].get<std::map<std::string, std::string>>();
  return d;
}

inline std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline ArtifactStore load_artifacts(const nlohmann::json& spec, const std::filesystem::path& base) {
  if (spec.is_string()) return load_store(resolve_path(base, spec.get<std::string>()));
  return load_store_from_json(spec);
}

// Registers everything the deployment names. Order matters: zones before
// roles, artifacts and validators before workflows.
inline void apply_deployment(Engine& engine, const Deployment& d) {
  const auto& doc = d.doc;
  try {
    for (const auto& z : doc.value("zones", nlohmann::json::array())) {
      engine.governance().register_zone({z.at("id").get<std::string>(), z.value("description", "")});
    }
    for (const auto& r : doc.value("roles", nlohmann::json::array())) engine.governance().register_role(role_from_json(r));
    if (doc.contains("artifacts")) engine.set_store(load_artifacts(doc["artifacts"], d.base));
    for (const auto& v : doc.value("validators", nlohmann::json::array())) engine.add_validator(validator_spec_from_json(v));
    for (const auto& w : doc.value("workflows", nlohmann::json::array())) {
      const WorkflowDefinition def = workflow_from_json(w);
      engine.validate_definition(def);
      engine.add_workflow(def);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("deployment: ") + e.what());
  }
}

inline std::unique_ptr<Engine> make_engine(const Deployment& d, EngineOptions opts = {}) {
  if (!opts.audit_file && d.doc.contains("audit_log")) {
    opts.audit_file = resolve_path(d.base, d.doc["audit_log"].get<std::string>());
  }
  auto engine = std::make_unique<Engine>(std::move(opts));
  apply_deployment(*engine, d);
  return engine;
}

// {"kind": "station_layers", "dataset_id": "...", "fault": {"error_rate", "error_class", "seed"}}
// {"kind": "scripted", "outputs": [[{"name", "format", "content"}], ...]}
// {"kind": "pass_through"}
inline std::vector<ProducedArtifact> artifacts_from_json(const nlohmann::json& list) {
  std::vector<ProducedArtifact> out;
  for (const auto& a : list) {
    ProducedArtifact p;
    p.name = a.at("name").get<std::string>();
    p.format = detail::parse_enum<PayloadFormat>(a.value("format", nlohmann::json("json")), "format");
    const auto& c = a.at("content");
    p.content = c.is_string() ? c.get<std::string>() : c.dump();
    out.push_back(std::move(p));
  }
  return out;
}

inline std::shared_ptr<AgentStub> stub_from_json(const std::string& role, const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const std::string id = j.value("id", role + "-stub");
    if (kind == "station_layers") {
      std::optional<FaultConfig> fault;
      if (j.contains("fault") && !j["fault"].is_null()) {
        const auto& f = j["fault"];
        FaultConfig fc;
        fc.error_rate = f.value("error_rate", 1.0);
        fc.error_class = error_class_from_string(f.at("error_class").get<std::string>());
        fc.seed = f.value("seed", std::uint64_t{0});
        if (!(fc.error_rate >= 0.0 && fc.error_rate <= 1.0)) throw ParseError("fault error_rate must lie in [0,1]");
        fault = fc;
      }
      return std::make_shared<StationLayerStub>(id, role, j.at("dataset_id").get<std::string>(), fault);
    }
    if (kind == "scripted") {
      std::vector<std::vector<ProducedArtifact>> script;
      for (const auto& step : j.at("outputs")) script.push_back(artifacts_from_json(step));
      return std::make_shared<ScriptedStub>(id, role, std::move(script));
    }
    if (kind == "pass_through") return std::make_shared<PassThroughStub>(id, role);
    throw ParseError("unknown stub kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("stub for " + role + ": " + e.what());
  }
}

inline StubMap stubs_from_json(const nlohmann::json& j) {
  StubMap out;
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = stub_from_json(it.key(), it.value());
  return out;
}

inline StationTableSpec station_table_spec_from_json(const nlohmann::json& j) {
  StationTableSpec s;
  s.stations = j.value("stations", s.stations);
  s.layers = j.value("layers", s.layers);
  s.seed = j.value("seed", s.seed);
  return s;
}

struct Job {
  WorkflowDefinition workflow;
  StubMap stubs;
  RunRequest request;
};

inline Job job_from_json(const nlohmann::json& j, const Engine& engine) {
  try {
    Job job;
    const auto& w = j.at("workflow");
    if (w.is_string()) {
      auto def = engine.workflow(w.get<std::string>());
      if (!def) throw NotFoundError("unknown workflow " + w.get<std::string>());
      job.workflow = *def;
    } else {
      job.workflow = workflow_from_json(w);
    }
    job.stubs = stubs_from_json(j.value("stubs", nlohmann::json::object()));
    const auto inputs = j.value("inputs", nlohmann::json::array());
    if (inputs.is_object() && inputs.contains("station_table")) {
      job.request.inputs.push_back(
          {"stations.csv", PayloadFormat::csv, make_station_table(station_table_spec_from_json(inputs["station_table"]))});
    } else {
      job.request.inputs = artifacts_from_json(inputs);
    }
    job.request.context = j.value("context", std::map<std::string, std::string>{});
    if (j.contains("remediates") && !j["remediates"].is_null()) job.request.remediates = j["remediates"].get<std::string>();
    return job;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("job: ") + e.what());
  }
}

}  // namespace boundarykit
