#pragma once

// Workflow runner. Stages run strictly in order; every stage after the first
// is entered through a handoff whose gate is the stage's validator list. Runs
// are resumable state machines: a run waiting on a human approval returns
// awaiting_approval and continues when approve() or block() arrives.

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "boundarykit/artifact_store.hpp"
#include "boundarykit/audit.hpp"
#include "boundarykit/clock.hpp"
#include "boundarykit/governance.hpp"
#include "boundarykit/handoff.hpp"
#include "boundarykit/incident.hpp"
#include "boundarykit/stubs.hpp"
#include "boundarykit/validation.hpp"

namespace boundarykit {

struct Stage {
  std::string name;  // also the boundary point of the handoff into this stage
  std::string role;
  std::string skill;
  std::vector<std::string> gate;  // validator ids
  bool requires_approval = false;
  bool irreversible = false;
};

struct WorkflowDefinition {
  std::string id;
  std::vector<Stage> stages;
  // Recognized keys: scope_unit (incident scope unit), orchestrator (role id
  // that must hold route_handoff for every handoff).
  nlohmann::json metadata = nlohmann::json::object();
};

inline WorkflowDefinition workflow_from_json(const nlohmann::json& j) {
  try {
    WorkflowDefinition d;
    d.id = j.at("id").get<std::string>();
    for (const auto& s : j.at("stages")) {
      Stage st;
      st.role = s.at("role").get<std::string>();
      st.skill = s.at("skill").get<std::string>();
      st.name = s.value("name", st.role);
      st.gate = s.value("gate", std::vector<std::string>{});
      st.requires_approval = s.value("requires_approval", false);
      st.irreversible = s.value("irreversible", false);
      d.stages.push_back(std::move(st));
    }
    d.metadata = j.value("metadata", nlohmann::json::object());
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("workflow definition: ") + e.what());
  }
}

inline nlohmann::json to_json(const WorkflowDefinition& d) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : d.stages) {
    stages.push_back({{"name", s.name}, {"role", s.role}, {"skill", s.skill}, {"gate", s.gate},
                      {"requires_approval", s.requires_approval}, {"irreversible", s.irreversible}});
  }
  return {{"id", d.id}, {"stages", stages}, {"metadata", d.metadata}};
}

enum class StageStatus { pending, running, done, blocked };
enum class RunStatus { running, awaiting_approval, done, blocked, failed };

NLOHMANN_JSON_SERIALIZE_ENUM(StageStatus, {{StageStatus::pending, "pending"},
                                           {StageStatus::running, "running"},
                                           {StageStatus::done, "done"},
                                           {StageStatus::blocked, "blocked"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RunStatus, {{RunStatus::running, "running"},
                                         {RunStatus::awaiting_approval, "awaiting_approval"},
                                         {RunStatus::done, "done"},
                                         {RunStatus::blocked, "blocked"},
                                         {RunStatus::failed, "failed"}})

inline std::string to_string(RunStatus s) { return nlohmann::json(s).get<std::string>(); }

struct WorkflowRun {
  std::string id;
  std::string definition_id;
  std::vector<std::string> stage_names;
  std::vector<StageStatus> stages;
  std::size_t current_stage = 0;
  std::vector<std::string> packages;  // every handoff package, in order
  std::optional<std::string> pending_package;
  RunStatus status = RunStatus::running;
  std::uint64_t started_at = 0;
  std::uint64_t ended_at = 0;
  std::optional<std::string> incident;    // opened by a block in this run
  std::optional<std::string> remediates;  // incident this run answers
  std::vector<std::string> follow_ups;    // remediation/verification incidents
  std::uint64_t published = 0;
  std::string error;

  bool finished() const {
    return status == RunStatus::done || status == RunStatus::blocked || status == RunStatus::failed;
  }
};

inline nlohmann::json to_json(const WorkflowRun& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (std::size_t i = 0; i < r.stages.size(); ++i) {
    stages.push_back({{"name", r.stage_names[i]}, {"status", r.stages[i]}});
  }
  nlohmann::json j{{"id", r.id},
                   {"definition_id", r.definition_id},
                   {"status", r.status},
                   {"stages", stages},
                   {"current_stage", r.current_stage},
                   {"packages", r.packages},
                   {"started_at", r.started_at},
                   {"ended_at", r.ended_at},
                   {"follow_ups", r.follow_ups},
                   {"published", r.published}};
  if (r.pending_package) j["pending_package"] = *r.pending_package;
  if (r.incident) j["incident"] = *r.incident;
  if (r.remediates) j["remediates"] = *r.remediates;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

// Mock external platform: records what would have been published.
struct PublishEvent {
  std::string run;
  std::string package;
  std::string artifact;
  std::string digest;
  HandoffPhase phase_at_publish = HandoffPhase::committed;
  std::string publisher;
  std::uint64_t at = 0;
};

class PublishSink {
 public:
  void publish(PublishEvent e) {
    std::lock_guard lock(mu_);
    events_.push_back(std::move(e));
  }
  std::vector<PublishEvent> events() const {
    std::lock_guard lock(mu_);
    return events_;
  }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return events_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<PublishEvent> events_;
};

struct RunRequest {
  std::vector<ProducedArtifact> inputs;        // external inputs to the first stage
  std::map<std::string, std::string> context;  // validator context (e.g. expected_dataset)
  std::optional<std::string> remediates;
};

struct EngineOptions {
  std::shared_ptr<EngineClock> clock;  // default: SteadyClock
  std::optional<std::filesystem::path> audit_file;
  GateOptions gate;
  std::size_t retrieval_limit = 8;
};

class Engine {
 public:
  explicit Engine(EngineOptions opts = {})
      : opts_(std::move(opts)),
        clock_(opts_.clock ? opts_.clock : std::make_shared<SteadyClock>()),
        audit_(*clock_, opts_.audit_file),
        governance_(audit_),
        incidents_(audit_, *clock_),
        handoffs_(governance_, audit_, incidents_, working_, *clock_, [this] { return store(); }),
        store_(std::make_shared<const ArtifactStore>()) {}

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  ~Engine() { wait_idle(); }

  Governance& governance() { return governance_; }
  AuditLog& audit() { return audit_; }
  IncidentRegistry& incidents() { return incidents_; }
  HandoffManager& handoffs() { return handoffs_; }
  WorkingStore& working() { return working_; }
  PredicateRegistry& predicates() { return predicates_; }
  PublishSink& sink() { return sink_; }
  EngineClock& clock() { return *clock_; }
  const EngineOptions& options() const { return opts_; }

  void set_store(ArtifactStore store) {
    auto next = std::make_shared<const ArtifactStore>(std::move(store));
    std::lock_guard lock(mu_);
    store_ = std::move(next);
  }

  std::shared_ptr<const ArtifactStore> store() const {
    std::lock_guard lock(mu_);
    return store_;
  }

  void add_validator(const ValidatorSpec& spec) {
    std::lock_guard lock(mu_);
    if (spec.id.empty()) throw RegistrationError("validator id must be non-empty");
    if (validators_.count(spec.id)) throw DuplicateIdError("validator", spec.id);
    validators_.emplace(spec.id, spec);
  }

  std::optional<ValidatorSpec> validator(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = validators_.find(id);
    if (it == validators_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<ValidatorSpec> validators() const {
    std::lock_guard lock(mu_);
    std::vector<ValidatorSpec> out;
    for (const auto& [_, v] : validators_) out.push_back(v);
    return out;
  }

  void add_workflow(const WorkflowDefinition& def) {
    std::lock_guard lock(mu_);
    if (workflows_.count(def.id)) throw DuplicateIdError("workflow", def.id);
    workflows_.emplace(def.id, def);
  }

  std::optional<WorkflowDefinition> workflow(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = workflows_.find(id);
    if (it == workflows_.end()) return std::nullopt;
    return it->second;
  }

  // Rejects a definition before anything executes. Also enforces that the
  // artifact store is traversable, since stages retrieve context from it.
  void validate_definition(const WorkflowDefinition& def) const {
    auto fail = [&](const std::string& why) { throw DefinitionError("workflow " + def.id + ": " + why); };
    if (def.id.empty()) throw DefinitionError("workflow id must be non-empty");
    if (def.stages.empty()) fail("no stages");
    auto st = store();
    if (!st->integrity().traversable) {
      fail("artifact store is not traversable (" + std::to_string(st->integrity().defect_count()) +
           " integrity defects)");
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < def.stages.size(); ++i) {
      const Stage& s = def.stages[i];
      const std::string where = "stage " + std::to_string(i) + " (" + s.name + ")";
      if (!names.insert(s.name).second) fail(where + ": duplicate stage name");
      const auto role = governance_.role(s.role);
      if (!role) fail(where + ": unknown role '" + s.role + "'");
      const Skill* skill = st->skill(s.skill);
      if (!skill) fail(where + ": unknown skill '" + s.skill + "'");
      for (const auto& v : s.gate) {
        if (!validator(v)) fail(where + ": unknown validator '" + v + "'");
      }
      if (i == 0 && !s.gate.empty()) fail(where + ": the first stage has no inbound handoff to gate");
      if (s.irreversible && s.gate.empty()) fail(where + ": irreversible stage without a gate");
      for (auto cap : skill->required_capabilities) {
        if (!role->holds(cap)) {
          fail(where + ": role " + s.role + " lacks " + std::string(to_string(cap)) + " required by skill " + s.skill);
        }
      }
      for (const Behavior& b : effective_behaviors(*st, *skill)) {
        if (b.enforcement == Enforcement::hard_gate && s.gate.empty() && i > 0) {
          fail(where + ": behavior " + b.id + " is a hard gate but the stage has no validators");
        }
      }
    }
    if (def.metadata.contains("orchestrator")) {
      const auto orch = governance_.role(def.metadata["orchestrator"].get<std::string>());
      if (!orch) fail("unknown orchestrator role");
    }
  }

  // Creates the run without executing anything.
  std::string start_run(const WorkflowDefinition& def, StubMap stubs, RunRequest req = {}) {
    validate_definition(def);
    for (const auto& s : def.stages) {
      const auto role = governance_.role(s.role);
      if (role->kind == RoleKind::worker && !stubs.count(s.role)) {
        throw DefinitionError("workflow " + def.id + ": no agent stub bound to worker role " + s.role);
      }
    }
    if (req.remediates && !incidents_.get(*req.remediates)) {
      throw NotFoundError("unknown incident " + *req.remediates);
    }
    auto state = std::make_shared<RunState>();
    state->def = def;
    state->stubs = std::move(stubs);
    state->req = std::move(req);
    WorkflowRun& run = state->run;
    {
      std::lock_guard lock(mu_);
      char buf[24];
      std::snprintf(buf, sizeof buf, "run-%04u", ++run_counter_);
      run.id = buf;
      runs_.emplace(run.id, state);
    }
    run.definition_id = def.id;
    for (const auto& s : def.stages) run.stage_names.push_back(s.name);
    run.stages.assign(def.stages.size(), StageStatus::pending);
    run.remediates = state->req.remediates;
    run.started_at = clock_->now_ms();
    nlohmann::json payload{{"action", "run_started"}, {"run", run.id}, {"workflow", def.id}};
    if (run.remediates) payload["remediates"] = *run.remediates;
    audit_.append("engine", AuditEvent::workflow_event, payload);
    snapshot(*state);
    return run.id;
  }

  // Executes until the run finishes or waits on an approval.
  WorkflowRun advance(const std::string& run_id) {
    auto state = run_state(run_id);
    std::lock_guard exec(state->exec_mu);
    advance_locked(*state);
    return snapshot(*state);
  }

  WorkflowRun run_workflow(const WorkflowDefinition& def, StubMap stubs, RunRequest req = {}) {
    return advance(start_run(def, std::move(stubs), std::move(req)));
  }

  // Starts a run on a background thread and returns its id immediately.
  std::string submit(const WorkflowDefinition& def, StubMap stubs, RunRequest req = {}) {
    const std::string id = start_run(def, std::move(stubs), std::move(req));
    std::lock_guard lock(workers_mu_);
    workers_.emplace_back([this, id] { advance(id); });
    return id;
  }

  void wait_idle() {
    std::vector<std::jthread> done;
    {
      std::lock_guard lock(workers_mu_);
      done.swap(workers_);
    }
    done.clear();  // joins
  }

  struct DecisionResult {
    HandoffPackage package;
    std::optional<WorkflowRun> run;
    bool already = false;
  };

  // Supervisor approval; resumes the owning run. Repeating an approval on an
  // approved or committed package is a no-op that reports `already`.
  DecisionResult approve(const std::string& package_id, const std::string& approver) {
    auto owner = owning_run(package_id);
    if (!owner) {
      DecisionResult r;
      r.package = handoffs_.record_approval(package_id, approver, &r.already);
      return r;
    }
    std::lock_guard exec(owner->exec_mu);
    DecisionResult r;
    r.package = handoffs_.record_approval(package_id, approver, &r.already);
    if (!r.already) advance_locked(*owner);
    r.package = *handoffs_.get(package_id);
    r.run = snapshot(*owner);
    return r;
  }

  // Supervisor block on a package awaiting approval: blocked, incident opened,
  // artifacts quarantined, run ends blocked.
  DecisionResult block(const std::string& package_id, const std::string& approver, const std::string& reason) {
    auto owner = owning_run(package_id);
    DecisionResult r;
    if (!owner) {
      GateBinding g;
      g.actor = approver;
      r.package = handoffs_.reject(package_id, approver, g, reason);
      r.package = handoffs_.quarantine(package_id, approver);
      return r;
    }
    std::lock_guard exec(owner->exec_mu);
    const auto stage = owner->run.current_stage;
    GateBinding g;
    g.actor = approver;
    // A finished run has no current stage; reject() then refuses the edge.
    if (stage < owner->def.stages.size()) g = binding(*owner, stage);
    r.package = handoffs_.reject(package_id, approver, g, reason);
    advance_locked(*owner);
    r.package = *handoffs_.get(package_id);
    r.run = snapshot(*owner);
    return r;
  }

  std::optional<WorkflowRun> run(const std::string& id) const {
    std::shared_ptr<RunState> s;
    {
      std::lock_guard lock(mu_);
      auto it = runs_.find(id);
      if (it == runs_.end()) return std::nullopt;
      s = it->second;
    }
    std::lock_guard lock(s->snap_mu);
    return s->published;
  }

  std::vector<WorkflowRun> runs() const {
    std::vector<std::shared_ptr<RunState>> states;
    {
      std::lock_guard lock(mu_);
      for (const auto& [_, s] : runs_) states.push_back(s);
    }
    std::vector<WorkflowRun> out;
    for (const auto& s : states) {
      std::lock_guard lock(s->snap_mu);
      out.push_back(s->published);
    }
    return out;
  }

 private:
  // Artifacts currently travelling down the pipeline, as held by the last
  // role that produced them.
  struct Carrier {
    std::string producer_role;
    std::string producing_skill;
    std::uint64_t produced_at = 0;
    std::vector<PackagedArtifact> origin;  // refs in the producer's zone
    std::vector<PackagedArtifact> inbox;   // refs delivered to the current stage
    std::vector<std::string> input_digests;
  };

  struct RunState {
    std::mutex exec_mu;  // held while executing
    WorkflowDefinition def;
    StubMap stubs;
    RunRequest req;
    WorkflowRun run;
    std::optional<Carrier> carrier;
    bool inbound_committed = false;
    bool remediation_linked = false;
    bool verification_linked = false;
    std::mutex snap_mu;
    WorkflowRun published;
  };

  static std::vector<Behavior> effective_behaviors(const ArtifactStore& store, const Skill& skill) {
    std::vector<Behavior> out;
    std::set<std::string> seen;
    for (const auto& id : skill.behavior_gates) {
      if (const Behavior* b = store.behavior(id); b && seen.insert(id).second) out.push_back(*b);
    }
    for (const Behavior* b : store.behaviors_applying_to(skill.id)) {
      if (seen.insert(b->id).second) out.push_back(*b);
    }
    return out;
  }

  std::shared_ptr<RunState> run_state(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = runs_.find(id);
    if (it == runs_.end()) throw NotFoundError("unknown run " + id);
    return it->second;
  }

  std::shared_ptr<RunState> owning_run(const std::string& package_id) const {
    auto pkg = handoffs_.get(package_id);
    if (!pkg) throw NotFoundError("unknown package " + package_id);
    std::lock_guard lock(mu_);
    auto it = runs_.find(pkg->workflow_run);
    return it == runs_.end() ? nullptr : it->second;
  }

  WorkflowRun snapshot(RunState& s) {
    std::lock_guard lock(s.snap_mu);
    s.published = s.run;
    return s.published;
  }

  GateBinding binding(const RunState& s, std::size_t i) const {
    const Stage& st = s.def.stages[i];
    GateBinding g;
    for (const auto& v : st.gate) g.specs.push_back(*validator(v));
    auto store_now = store();
    bool confirm = false;
    if (const Skill* sk = store_now->skill(st.skill)) {
      for (const auto& b : effective_behaviors(*store_now, *sk)) {
        if (b.enforcement == Enforcement::human_confirm) confirm = true;
      }
    }
    g.requires_approval = st.requires_approval || confirm;
    g.boundary_point = st.name;
    g.actor = st.role;
    g.scope_unit = s.def.metadata.value("scope_unit", "records");
    g.user_exposure = s.run.published;
    for (std::size_t k = i; k < s.def.stages.size(); ++k) {
      if (s.def.stages[k].irreversible) ++g.irreversible_downstream;
    }
    g.options = opts_.gate;
    g.options.validation.predicates = &predicates_;
    return g;
  }

  void event(const RunState& s, const std::string& actor, nlohmann::json payload) {
    payload["run"] = s.run.id;
    audit_.append(actor, AuditEvent::workflow_event, std::move(payload));
  }

  void finish(RunState& s, RunStatus status) {
    s.run.status = status;
    s.run.pending_package.reset();
    s.run.ended_at = clock_->now_ms();
    nlohmann::json p{{"action", "run_finished"}, {"status", to_string(status)}};
    if (s.run.incident) p["incident"] = *s.run.incident;
    if (!s.run.error.empty()) p["error"] = s.run.error;
    event(s, "engine", p);
  }

  void advance_locked(RunState& s) {
    if (s.run.finished()) return;
    s.run.status = RunStatus::running;
    try {
      while (s.run.current_stage < s.def.stages.size()) {
        const std::size_t i = s.run.current_stage;
        if (i > 0 && !s.inbound_committed) {
          if (!enter_stage(s, i)) return;
        }
        s.run.stages[i] = StageStatus::running;
        snapshot(s);
        execute_stage(s, i);
        s.run.stages[i] = StageStatus::done;
        s.run.current_stage = i + 1;
        s.inbound_committed = false;
        s.run.pending_package.reset();
      }
      finish(s, RunStatus::done);
    } catch (const Error& e) {
      const std::size_t i = std::min(s.run.current_stage, s.run.stages.size() - 1);
      s.run.stages[i] = StageStatus::blocked;
      s.run.error = e.what();
      finish(s, RunStatus::failed);
    }
    snapshot(s);
  }

  // Drives the handoff into stage i. Returns false when the run must stop
  // here (waiting for approval, or blocked).
  bool enter_stage(RunState& s, std::size_t i) {
    const Stage& st = s.def.stages[i];
    if (!s.run.pending_package) {
      if (!s.carrier) throw Error("stage " + st.name + ": nothing to hand off");
      if (s.def.metadata.contains("orchestrator")) {
        const std::string orch = s.def.metadata["orchestrator"].get<std::string>();
        const auto role = governance_.role(orch);
        governance_.require(orch, Capability::route_handoff, role ? role->zone : std::string{});
      }
      PrepareRequest req;
      req.run = s.run.id;
      req.from_role = s.carrier->producer_role;
      req.to_role = st.role;
      req.artifacts = s.carrier->origin;
      req.provenance.producing_skill = s.carrier->producing_skill;
      req.provenance.input_digests = s.carrier->input_digests;
      req.provenance.produced_at = s.carrier->produced_at;
      req.provenance.remediates = s.req.remediates;
      req.provenance.context = s.req.context;
      const HandoffPackage pkg = handoffs_.prepare(req);
      s.run.packages.push_back(pkg.id);
      s.run.pending_package = pkg.id;
      snapshot(s);
      const HandoffPackage validated = handoffs_.validate(pkg.id, binding(s, i));
      if (validated.gate_result && validated.gate_result->approved) maybe_verify(s, i, validated);
    }
    const std::string id = *s.run.pending_package;
    HandoffPackage pkg = *handoffs_.get(id);
    if (pkg.phase == HandoffPhase::validating) {
      s.run.status = RunStatus::awaiting_approval;
      event(s, "engine", {{"action", "awaiting_approval"}, {"package", id}, {"stage", st.name}});
      snapshot(s);
      return false;
    }
    if (pkg.phase == HandoffPhase::approved) pkg = handoffs_.commit(id, binding(s, i));
    if (pkg.phase == HandoffPhase::blocked) pkg = handoffs_.quarantine(id, "engine");
    if (pkg.phase == HandoffPhase::quarantined) {
      s.run.stages[i] = StageStatus::blocked;
      s.run.incident = pkg.incident_id;
      finish(s, RunStatus::blocked);
      snapshot(s);
      return false;
    }
    if (pkg.phase != HandoffPhase::committed) throw Error("package " + id + " stuck in " + to_string(pkg.phase));
    s.inbound_committed = true;
    s.carrier->inbox = pkg.artifacts;
    s.carrier->input_digests.clear();
    for (const auto& a : pkg.artifacts) s.carrier->input_digests.push_back(a.digest);
    return true;
  }

  void execute_stage(RunState& s, std::size_t i) {
    const Stage& st = s.def.stages[i];
    const Role role = *governance_.role(st.role);
    auto store_now = store();
    const ResolvedSkill skill = resolve_skill(*store_now, st.skill);
    std::set<std::string> tags;
    for (const auto& n : skill.prerequisites) tags.insert(n.retrieval_tags.begin(), n.retrieval_tags.end());
    std::vector<std::string> context;
    if (!tags.empty()) {
      for (const auto& r : retrieve_subgraph(*store_now, tags, opts_.retrieval_limit)) context.push_back(r.node.id);
    }
    nlohmann::json behaviors = nlohmann::json::array();
    for (const auto& b : effective_behaviors(*store_now, skill.skill)) behaviors.push_back(b.id);
    event(s, st.role, {{"action", "stage_started"}, {"stage", st.name}, {"skill", st.skill},
                       {"behaviors", behaviors}, {"knowledge_context", context}});

    switch (role.kind) {
      case RoleKind::worker: {
        StageInput in;
        in.run_id = s.run.id;
        in.stage = st.name;
        in.context = s.req.context;
        in.knowledge_context = context;
        if (i == 0) {
          in.artifacts = s.req.inputs;
        } else {
          for (const auto& a : s.carrier->inbox) {
            governance_.require(st.role, Capability::read_working, WorkingStore::zone_of(a.storage_ref));
            in.artifacts.push_back({a.name, a.format, working_.get(a.storage_ref).value_or("")});
          }
        }
        std::vector<std::string> input_digests;
        for (const auto& a : in.artifacts) input_digests.push_back(sha256_hex(a.content));
        auto out = s.stubs.at(st.role)->produce(in);
        if (out.empty()) throw Error("stage " + st.name + ": stub produced no artifacts");
        Carrier c;
        c.producer_role = st.role;
        c.producing_skill = st.skill;
        c.produced_at = clock_->now_ms();
        c.input_digests = std::move(input_digests);
        for (auto& a : out) {
          governance_.require(st.role, Capability::write_working, role.zone);
          const std::string digest = sha256_hex(a.content);
          const std::string ref = working_.put(role.zone, "work/" + s.run.id, std::move(a.content));
          c.origin.push_back({a.name, a.format, digest, ref});
        }
        s.carrier = std::move(c);
        nlohmann::json names = nlohmann::json::array();
        for (const auto& a : s.carrier->origin) names.push_back({{"name", a.name}, {"digest", a.digest}});
        event(s, st.role, {{"action", "artifacts_produced"}, {"stage", st.name}, {"artifacts", names}});
        maybe_remediate(s, i);
        break;
      }
      case RoleKind::validator:
        governance_.require(st.role, Capability::run_validation, role.zone);
        break;
      case RoleKind::publisher: {
        const std::string pkg = s.run.packages.empty() ? std::string{} : s.run.packages.back();
        for (auto& a : handoffs_.resolve_for_publish(pkg, st.role)) {
          sink_.publish({s.run.id, pkg, a.artifact.name, a.artifact.digest, a.phase, st.role, clock_->now_ms()});
          ++s.run.published;
        }
        event(s, st.role, {{"action", "published"}, {"stage", st.name}, {"package", pkg},
                           {"count", s.carrier ? s.carrier->inbox.size() : 0}});
        break;
      }
      case RoleKind::orchestrator:
      case RoleKind::human_supervisor:
        break;
    }
    event(s, st.role, {{"action", "stage_finished"}, {"stage", st.name}});
  }

  // First production in a remediation run regenerates the artifacts: open the
  // remediation follow-up and move the incident to remediated.
  void maybe_remediate(RunState& s, std::size_t i) {
    if (!s.req.remediates || s.remediation_linked) return;
    const auto parent = incidents_.get(*s.req.remediates);
    FollowUpReport r;
    r.kind = IncidentKind::remediation;
    r.parent = parent->id;
    r.boundary_point = s.def.stages[i].name;
    r.defect_class = parent->defect_class;
    r.impacted_scope = {s.carrier->origin.size(), "artifacts"};
    r.summary = "regenerated " + std::to_string(s.carrier->origin.size()) + " artifacts";
    r.actor = s.def.stages[i].role;
    const Incident f = incidents_.open_follow_up(r);
    incidents_.link_resolution(parent->id, f.id, IncidentStatus::remediated, r.actor);
    s.run.follow_ups.push_back(f.id);
    s.remediation_linked = true;
  }

  // A passing gate at the boundary that originally blocked is the independent
  // re-validation that verifies the fix.
  void maybe_verify(RunState& s, std::size_t i, const HandoffPackage& pkg) {
    if (!s.req.remediates || !s.remediation_linked || s.verification_linked) return;
    const auto parent = incidents_.get(*s.req.remediates);
    if (parent->boundary_point != s.def.stages[i].name) return;
    VerificationEvidence ev;
    ev.revalidation_passed = true;
    ev.verifier_role = s.def.stages[i].role;
    ev.producer_role = pkg.from_role;
    std::set<std::string> checked;
    for (const auto& o : pkg.gate_result->outcomes) {
      if (o.kind == ValidatorKind::numeric_range && o.verdict == Verdict::pass) checked.insert(o.artifact);
    }
    ev.layers_checked = checked.size();
    ev.audit_seqs = pkg.gate_result->audit_seqs;
    FollowUpReport r;
    r.kind = IncidentKind::verification;
    r.parent = parent->id;
    r.boundary_point = s.def.stages[i].name;
    r.defect_class = parent->defect_class;
    r.impacted_scope = {checked.size(), "layers"};
    r.summary = "independent re-validation passed; range checks logged for " + std::to_string(checked.size()) + " layers";
    r.evidence = ev;
    r.package_id = pkg.id;
    r.actor = ev.verifier_role;
    const Incident f = incidents_.open_follow_up(r);
    incidents_.link_resolution(parent->id, f.id, IncidentStatus::verified, r.actor);
    s.run.follow_ups.push_back(f.id);
    s.verification_linked = true;
  }

  EngineOptions opts_;
  std::shared_ptr<EngineClock> clock_;
  AuditLog audit_;
  Governance governance_;
  IncidentRegistry incidents_;
  WorkingStore working_;
  HandoffManager handoffs_;
  PredicateRegistry predicates_;
  PublishSink sink_;

  mutable std::mutex mu_;
  std::shared_ptr<const ArtifactStore> store_;
  std::map<std::string, ValidatorSpec> validators_;
  std::map<std::string, WorkflowDefinition> workflows_;
  std::map<std::string, std::shared_ptr<RunState>> runs_;
  unsigned run_counter_ = 0;

  std::mutex workers_mu_;
  std::vector<std::jthread> workers_;
};

}  // namespace boundarykit
