#pragma once

// Replayable scenarios over the built-in station fixtures.
//
//   iss004_chain        faulty coordinate fields blocked before publication,
//                       then remediated and independently re-validated
//   audit_differential  each fault class: producer self-check vs boundary gates
//   kg_corruption       integrity lint over the corrupted bundle
//
// Scenarios default to a ManualClock so replays are bit-for-bit repeatable.

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/config.hpp"
#include "boundarykit/engine.hpp"
#include "boundarykit/fixtures.hpp"

namespace boundarykit {

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"iss004_chain", "audit_differential", "kg_corruption"};
  return names;
}

struct ScenarioResult {
  std::string name;
  bool ok = false;  // reached the scenario's expected end state
  nlohmann::json report = nlohmann::json::object();
  std::vector<std::string> summary;
  std::vector<AuditRecord> audit;
};

// Keeps the producer's last outputs so its own self-check can be replayed
// after the run.
class RecordingStub : public AgentStub {
 public:
  explicit RecordingStub(std::shared_ptr<AgentStub> inner)
      : AgentStub(inner->id(), inner->role()), inner_(std::move(inner)) {}

  std::vector<ProducedArtifact> produce(const StageInput& input) override {
    last_ = inner_->produce(input);
    last_fault_ = inner_->last_fault();
    return last_;
  }
  bool self_check(const std::vector<ProducedArtifact>& out) const override { return inner_->self_check(out); }
  const std::vector<ProducedArtifact>& last_output() const { return last_; }

 private:
  std::shared_ptr<AgentStub> inner_;
  std::vector<ProducedArtifact> last_;
};

namespace detail {

inline std::string chain_text(const std::vector<std::string>& chain) {
  std::string s;
  for (const auto& id : chain) s += (s.empty() ? "" : " -> ") + id;
  return s;
}

inline ScenarioResult iss004_chain(Engine& engine, std::uint64_t seed) {
  ScenarioResult res;
  res.name = "iss004_chain";
  auto& rep = res.report;

  Job faulty = job_from_json(fixtures::station_job(FaultConfig{1.0, ErrorClass::coordinate_swap, seed},
                                                   fixtures::kStationCount, seed),
                             engine);
  const WorkflowRun first = engine.run_workflow(faulty.workflow, faulty.stubs, faulty.request);
  rep["detection_run"] = to_json(first);
  if (first.status != RunStatus::blocked || !first.incident) {
    res.summary.push_back("detection run did not block: " + to_string(first.status));
    return res;
  }
  const std::string incident_id = *first.incident;

  Job fix = job_from_json(fixtures::station_job(std::nullopt, fixtures::kStationCount, seed, incident_id), engine);
  WorkflowRun second = engine.run_workflow(fix.workflow, fix.stubs, fix.request);
  if (second.status == RunStatus::awaiting_approval && second.pending_package) {
    second = *engine.approve(*second.pending_package, "curator").run;
  }
  rep["remediation_run"] = to_json(second);

  const Incident inc = *engine.incidents().get(incident_id);
  nlohmann::json chain = nlohmann::json::array();
  for (const auto& id : inc.resolution_chain) chain.push_back(to_json(*engine.incidents().get(id)));
  rep["incident"] = to_json(inc);
  rep["chain"] = chain;

  std::uint64_t published_first = 0, published_second = 0;
  bool all_committed = true;
  for (const auto& e : engine.sink().events()) {
    if (e.run == first.id) ++published_first;
    if (e.run == second.id) ++published_second;
    all_committed = all_committed && e.phase_at_publish == HandoffPhase::committed;
  }
  std::uint64_t regenerated = 0, layers_checked = 0;
  bool independent = false;
  for (std::size_t i = 1; i < inc.resolution_chain.size(); ++i) {
    const Incident f = *engine.incidents().get(inc.resolution_chain[i]);
    if (f.kind == IncidentKind::remediation) regenerated = f.impacted_scope.count;
    if (f.kind == IncidentKind::verification && f.evidence) {
      layers_checked = f.evidence->layers_checked;
      independent = f.evidence->verifier_role != f.evidence->producer_role;
    }
  }
  rep["counts"] = {{"impacted", inc.impacted_scope.count},
                   {"impacted_unit", inc.impacted_scope.unit},
                   {"user_exposure", inc.metrics.user_exposure},
                   {"irreversible_commits_prevented", inc.metrics.irreversible_commits_prevented.str()},
                   {"regenerated_artifacts", regenerated},
                   {"layers_checked", layers_checked},
                   {"published_by_detection_run", published_first},
                   {"published_by_remediation_run", published_second}};

  res.ok = inc.boundary_point == "pre-publication" && inc.impacted_scope.count == fixtures::kStationCount &&
           inc.metrics.user_exposure == 0 && inc.metrics.irreversible_commits_prevented.str() == "1/1" &&
           inc.status == IncidentStatus::verified && inc.resolution_chain.size() == 3 && regenerated == 5 &&
           layers_checked == 5 && independent && published_first == 0 && published_second == 5 && all_committed &&
           second.status == RunStatus::done;

  res.summary.push_back(incident_id + " opened at " + inc.boundary_point + ": " + inc.defect_class + ", " +
                        std::to_string(inc.impacted_scope.count) + " " + inc.impacted_scope.unit + " impacted");
  res.summary.push_back("  detection latency " + std::to_string(inc.metrics.detection_latency_ms) +
                        " ms (engine clock), user exposure " + std::to_string(inc.metrics.user_exposure) +
                        ", irreversible commits prevented " + inc.metrics.irreversible_commits_prevented.str());
  for (std::size_t i = 1; i < inc.resolution_chain.size(); ++i) {
    const Incident f = *engine.incidents().get(inc.resolution_chain[i]);
    res.summary.push_back(f.id + " (" + to_string(f.kind) + "): " + f.summary);
  }
  res.summary.push_back("resolution chain " + chain_text(inc.resolution_chain) + ", status " + to_string(inc.status));
  res.summary.push_back("remediation run " + second.id + " " + to_string(second.status) + ", " +
                        std::to_string(published_second) + " artifacts published");
  return res;
}

inline ScenarioResult audit_differential(Engine& engine, std::uint64_t seed) {
  ScenarioResult res;
  res.name = "audit_differential";
  nlohmann::json rows = nlohmann::json::array();
  std::size_t self_detected = 0, boundary_detected = 0;
  std::set<std::string> kinds_seen;
  bool distinct = true;
  const std::uint64_t seeds[] = {seed, seed + 1, seed + 2, seed + 3};
  std::size_t idx = 0;
  for (ErrorClass cls : kAllErrorClasses) {
    Job job = job_from_json(fixtures::station_job(FaultConfig{1.0, cls, seeds[idx++]}, fixtures::kStationCount, seed),
                            engine);
    auto recorder = std::make_shared<RecordingStub>(job.stubs.at("envita"));
    job.stubs["envita"] = recorder;
    const WorkflowRun run = engine.run_workflow(job.workflow, job.stubs, job.request);
    const bool self = !recorder->self_check(recorder->last_output());
    const bool boundary = run.status == RunStatus::blocked;
    nlohmann::json row{{"error_class", to_string(cls)}, {"run", run.id}, {"self_check_detected", self},
                       {"boundary_detected", boundary}, {"injected", recorder->last_fault() == cls}};
    std::vector<std::string> failing;
    if (run.incident) {
      const Incident inc = *engine.incidents().get(*run.incident);
      row["incident"] = inc.id;
      row["boundary_point"] = inc.boundary_point;
      row["impacted"] = inc.impacted_scope.count;
      const auto pkg = engine.handoffs().get(run.packages.back());
      for (auto k : pkg->gate_result->failing_kinds()) failing.push_back(to_string(k));
    }
    row["failing_validator_kinds"] = failing;
    if (failing.size() != 1 || !kinds_seen.insert(failing.front()).second) distinct = false;
    self_detected += self ? 1 : 0;
    boundary_detected += boundary ? 1 : 0;
    rows.push_back(row);
    res.summary.push_back(to_string(cls) + ": self-check " + (self ? "detected" : "passed") + ", boundary " +
                          (boundary ? "blocked at " + row.value("boundary_point", std::string{}) + " by " +
                                          (failing.empty() ? std::string{} : failing.front())
                                    : std::string("passed")));
  }
  const std::size_t n = std::size(kAllErrorClasses);
  res.report = {{"classes", rows},
                {"self_detections", std::to_string(self_detected) + "/" + std::to_string(n)},
                {"audit_detections", std::to_string(boundary_detected) + "/" + std::to_string(n)},
                {"distinct_validator_kinds", distinct}};
  res.summary.push_back(std::to_string(self_detected) + "/" + std::to_string(n) + " self-detections vs " +
                        std::to_string(boundary_detected) + "/" + std::to_string(n) + " audit detections");
  res.ok = self_detected == 0 && boundary_detected == n && distinct;
  return res;
}

inline ScenarioResult kg_corruption(std::uint64_t seed, EngineOptions opts) {
  ScenarioResult res;
  res.name = "kg_corruption";
  auto engine = fixtures::station_engine(std::move(opts));
  engine->set_store(fixtures::corrupted_bundle());
  const IntegrityReport r = engine->store()->integrity();
  res.report["lint"] = to_json(r);
  // A run against the corrupted store must be refused before any stage runs.
  bool refused = false;
  try {
    Job job = job_from_json(fixtures::station_job(std::nullopt, 50, seed), *engine);
    engine->run_workflow(job.workflow, job.stubs, job.request);
  } catch (const DefinitionError& e) {
    refused = true;
    res.report["run_refused"] = e.what();
    engine->audit().append("engine", AuditEvent::workflow_event, {{"action", "run_refused"}, {"reason", e.what()}});
  }
  res.summary.push_back(std::to_string(r.broken_behavior_refs.size()) + " broken skill->behavior references");
  res.summary.push_back(std::to_string(r.missing_knowledge_links.size()) + " missing knowledge links");
  res.summary.push_back(std::to_string(r.orphan_nodes.size()) + " orphaned nodes");
  res.summary.push_back(std::string("traversable: ") + (r.traversable ? "true" : "false") +
                        (refused ? "; workflow run refused" : ""));
  res.ok = r.broken_behavior_refs.size() == 16 && r.missing_knowledge_links.size() == 20 &&
           r.orphan_nodes.size() == 3 && !r.traversable && refused;
  res.audit = engine->audit().snapshot();
  return res;
}

}  // namespace detail

inline EngineOptions scenario_engine_options() {
  EngineOptions o;
  o.clock = std::make_shared<ManualClock>();
  return o;
}

// Runs a scenario inside an existing engine configured with the station
// deployment (so a gateway can serve the results). kg_corruption always uses a
// private engine since it swaps the artifact store.
inline ScenarioResult replay_into(Engine& engine, const std::string& name, std::uint64_t seed = 7) {
  ScenarioResult res;
  if (name == "iss004_chain") {
    res = detail::iss004_chain(engine, seed);
  } else if (name == "audit_differential") {
    res = detail::audit_differential(engine, seed);
  } else if (name == "kg_corruption") {
    return detail::kg_corruption(seed, scenario_engine_options());
  } else {
    throw NotFoundError("unknown scenario '" + name + "'");
  }
  res.audit = engine.audit().snapshot();
  return res;
}

inline ScenarioResult replay_scenario(const std::string& name, std::uint64_t seed = 7,
                                      EngineOptions opts = scenario_engine_options()) {
  if (name == "kg_corruption") return detail::kg_corruption(seed, std::move(opts));
  if (std::find(scenario_names().begin(), scenario_names().end(), name) == scenario_names().end()) {
    throw NotFoundError("unknown scenario '" + name + "'");
  }
  auto engine = fixtures::station_engine(std::move(opts));
  return replay_into(*engine, name, seed);
}

// Audit trail with time-dependent fields removed, for replay comparisons.
inline nlohmann::json masked_trail(const std::vector<AuditRecord>& records) {
  static const std::set<std::string> kTimeKeys = {"at", "ran_at", "produced_at", "opened_at", "blocked_at",
                                                  "started_at", "ended_at", "detection_latency_ms"};
  std::function<void(nlohmann::json&)> strip = [&](nlohmann::json& j) {
    if (j.is_object()) {
      for (auto it = j.begin(); it != j.end();) {
        if (kTimeKeys.count(it.key())) {
          it = j.erase(it);
        } else {
          strip(*it);
          ++it;
        }
      }
    } else if (j.is_array()) {
      for (auto& e : j) strip(e);
    }
  };
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json payload = nlohmann::json::parse(r.payload);
    strip(payload);
    out.push_back({{"seq", r.seq}, {"actor", r.actor}, {"event", std::string(to_string(r.event))}, {"payload", payload}});
  }
  return out;
}

}  // namespace boundarykit
